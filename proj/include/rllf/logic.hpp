#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <functional>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "rllf/errors.hpp"

namespace rllf {

// Propositional formula over variables A..J. Truth tables are the ground
// truth for negation labels: two formulas are negations of each other iff
// their tables disagree on every assignment.
struct Formula {
  enum class Kind { Var, Not, And, Or, Implies };

  Kind kind = Kind::Var;
  int var = 0;                  // Kind::Var only
  std::vector<Formula> kids;    // arity 1 for Not, 2 for the connectives

  static Formula make_var(int index) {
    Formula f;
    f.kind = Kind::Var;
    f.var = index;
    return f;
  }
  static Formula make_not(Formula a) {
    Formula f;
    f.kind = Kind::Not;
    f.kids = {std::move(a)};
    return f;
  }
  static Formula binary(Kind k, Formula a, Formula b) {
    Formula f;
    f.kind = k;
    f.kids = {std::move(a), std::move(b)};
    return f;
  }
  static Formula make_and(Formula a, Formula b) { return binary(Kind::And, std::move(a), std::move(b)); }
  static Formula make_or(Formula a, Formula b) { return binary(Kind::Or, std::move(a), std::move(b)); }
  static Formula make_implies(Formula a, Formula b) {
    return binary(Kind::Implies, std::move(a), std::move(b));
  }

  // Tree height; a bare variable has depth 1.
  int depth() const {
    int d = 0;
    for (const auto& k : kids) d = std::max(d, k.depth());
    return d + 1;
  }

  bool eval(const std::vector<bool>& assignment) const {
    switch (kind) {
      case Kind::Var:
        return assignment[static_cast<size_t>(var)];
      case Kind::Not:
        return !kids[0].eval(assignment);
      case Kind::And:
        return kids[0].eval(assignment) && kids[1].eval(assignment);
      case Kind::Or:
        return kids[0].eval(assignment) || kids[1].eval(assignment);
      case Kind::Implies:
        return !kids[0].eval(assignment) || kids[1].eval(assignment);
    }
    return false;
  }

  void collect_vars(std::set<int>& out) const {
    if (kind == Kind::Var)
      out.insert(var);
    else
      for (const auto& k : kids) k.collect_vars(out);
  }

  std::string str() const {
    static const char* names = "ABCDEFGHIJ";
    switch (kind) {
      case Kind::Var:
        return std::string(1, names[var]);
      case Kind::Not:
        return "(not " + kids[0].str() + ")";
      case Kind::And:
        return "(and " + kids[0].str() + " " + kids[1].str() + ")";
      case Kind::Or:
        return "(or " + kids[0].str() + " " + kids[1].str() + ")";
      case Kind::Implies:
        return "(implies " + kids[0].str() + " " + kids[1].str() + ")";
    }
    return "";
  }
};

// Sorted distinct variable indices mentioned by f.
inline std::vector<int> formula_vars(const Formula& f) {
  std::set<int> s;
  f.collect_vars(s);
  return {s.begin(), s.end()};
}

// Entry i holds f evaluated under the i-th assignment of f's variables in
// lexicographic variable order, all-false first: the first variable is the
// most significant bit, false < true. A lone variable yields [F, T].
inline std::vector<bool> truth_table(const Formula& f) {
  const std::vector<int> vars = formula_vars(f);
  const int v = static_cast<int>(vars.size());
  if (v > 10) throw DataError("truth_table: formula has " + std::to_string(v) + " variables, limit is 10");
  std::vector<bool> table;
  table.reserve(static_cast<size_t>(1) << v);
  int max_var = vars.empty() ? 0 : vars.back() + 1;
  std::vector<bool> assignment(static_cast<size_t>(max_var), false);
  for (uint32_t i = 0; i < (1u << v); ++i) {
    for (int j = 0; j < v; ++j)
      assignment[static_cast<size_t>(vars[static_cast<size_t>(j)])] = (i >> (v - 1 - j)) & 1u;
    table.push_back(f.eval(assignment));
  }
  return table;
}

// 1 iff the truth tables are bitwise complements.
inline int is_negation(const Formula& f, const Formula& g) {
  if (formula_vars(f) != formula_vars(g))
    throw DataError("is_negation: formulas range over different variable sets: " + f.str() +
                    " vs " + g.str());
  const auto tf = truth_table(f);
  const auto tg = truth_table(g);
  for (size_t i = 0; i < tf.size(); ++i)
    if (tf[i] == tg[i]) return 0;
  return 1;
}

// Parses the str() form back; used to replay labels from provenance records.
inline Formula parse_formula(const std::string& text) {
  size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < text.size() && text[pos] == ' ') ++pos;
  };
  std::function<Formula()> parse = [&]() -> Formula {
    skip_ws();
    if (pos >= text.size()) throw DataError("parse_formula: unexpected end in '" + text + "'");
    if (text[pos] >= 'A' && text[pos] <= 'J') {
      return Formula::make_var(text[pos++] - 'A');
    }
    if (text[pos] != '(') throw DataError("parse_formula: expected '(' in '" + text + "'");
    ++pos;
    skip_ws();
    size_t start = pos;
    while (pos < text.size() && std::isalpha(static_cast<unsigned char>(text[pos]))) ++pos;
    std::string op = text.substr(start, pos - start);
    Formula out;
    if (op == "not") {
      out = Formula::make_not(parse());
    } else if (op == "and" || op == "or" || op == "implies") {
      Formula a = parse();
      Formula b = parse();
      Formula::Kind k = op == "and" ? Formula::Kind::And
                                    : op == "or" ? Formula::Kind::Or : Formula::Kind::Implies;
      out = Formula::binary(k, std::move(a), std::move(b));
    } else {
      throw DataError("parse_formula: unknown operator '" + op + "'");
    }
    skip_ws();
    if (pos >= text.size() || text[pos] != ')')
      throw DataError("parse_formula: missing ')' in '" + text + "'");
    ++pos;
    return out;
  };
  Formula f = parse();
  skip_ws();
  if (pos != text.size()) throw DataError("parse_formula: trailing characters in '" + text + "'");
  return f;
}

}  // namespace rllf
