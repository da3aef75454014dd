#include <catch2/catch_amalgamated.hpp>

#include "rllf/logic.hpp"

using rllf::Formula;
using rllf::is_negation;
using rllf::parse_formula;
using rllf::truth_table;

namespace {

const Formula A = Formula::make_var(0);
const Formula B = Formula::make_var(1);

// Test-local evaluator, independent of Formula::eval's structure: evaluates
// the parsed string form over explicit assignments.
bool eval_str(const std::string& s, const std::vector<bool>& assignment) {
  struct P {
    const std::string& s;
    size_t pos = 0;
    const std::vector<bool>& a;
    bool parse() {
      while (s[pos] == ' ') ++pos;
      if (s[pos] >= 'A' && s[pos] <= 'J') return a[static_cast<size_t>(s[pos++] - 'A')];
      ++pos;  // '('
      while (s[pos] == ' ') ++pos;
      size_t start = pos;
      while (isalpha(static_cast<unsigned char>(s[pos]))) ++pos;
      std::string op = s.substr(start, pos - start);
      bool r;
      if (op == "not") {
        r = !parse();
      } else {
        bool l = parse();
        bool rr = parse();
        r = op == "and" ? (l && rr) : op == "or" ? (l || rr) : (!l || rr);
      }
      while (s[pos] == ' ') ++pos;
      ++pos;  // ')'
      return r;
    }
  };
  P p{s, 0, assignment};
  return p.parse();
}

// All formulas of depth (tree height) <= max_depth over exactly the variable
// indices 0..n_vars-1 appearing or not; variables above n_vars never appear.
std::vector<Formula> enumerate_formulas(int n_vars, int max_depth) {
  std::vector<std::vector<Formula>> by_depth(static_cast<size_t>(max_depth) + 1);
  for (int v = 0; v < n_vars; ++v) by_depth[1].push_back(Formula::make_var(v));
  for (int d = 2; d <= max_depth; ++d) {
    std::vector<Formula> shallower;  // depth <= d-1
    for (int k = 1; k < d; ++k)
      shallower.insert(shallower.end(), by_depth[static_cast<size_t>(k)].begin(),
                       by_depth[static_cast<size_t>(k)].end());
    for (const auto& f : by_depth[static_cast<size_t>(d) - 1])
      by_depth[static_cast<size_t>(d)].push_back(Formula::make_not(f));
    // binary nodes of exact depth d: at least one child of depth d-1
    for (const auto& l : by_depth[static_cast<size_t>(d) - 1])
      for (const auto& r : shallower)
        for (auto kind : {Formula::Kind::And, Formula::Kind::Or, Formula::Kind::Implies}) {
          by_depth[static_cast<size_t>(d)].push_back(Formula::binary(kind, l, r));
          if (r.depth() < d - 1)
            by_depth[static_cast<size_t>(d)].push_back(Formula::binary(kind, r, l));
        }
  }
  std::vector<Formula> all;
  for (auto& v : by_depth) all.insert(all.end(), v.begin(), v.end());
  return all;
}

}  // namespace

TEST_CASE("truth table of a lone variable is [F, T]") {
  auto t = truth_table(A);
  REQUIRE(t == std::vector<bool>{false, true});
}

TEST_CASE("classic near-negation disjunction tables") {
  const Formula f = Formula::make_or(Formula::make_not(A), B);   // not A or B
  const Formula g = Formula::make_or(A, Formula::make_not(B));   // A or not B

  // rows in descending assignment order (T,T),(T,F),(F,T),(F,F)
  auto tf = truth_table(f);
  auto tg = truth_table(g);
  auto row = [&](const std::vector<bool>& t, bool a, bool b) {
    return t[static_cast<size_t>((a ? 2 : 0) + (b ? 1 : 0))];
  };
  std::vector<bool> f_rows = {row(tf, true, true), row(tf, true, false), row(tf, false, true),
                              row(tf, false, false)};
  std::vector<bool> g_rows = {row(tg, true, true), row(tg, true, false), row(tg, false, true),
                              row(tg, false, false)};
  REQUIRE(f_rows == std::vector<bool>{true, false, true, true});
  REQUIRE(g_rows == std::vector<bool>{true, true, false, true});

  // they differ on some rows yet are not complements
  REQUIRE(is_negation(f, g) == 0);
}

TEST_CASE("a formula and its negation are negations") {
  REQUIRE(is_negation(A, Formula::make_not(A)) == 1);
  const Formula de_morgan =
      Formula::make_or(Formula::make_not(A), Formula::make_not(B));
  REQUIRE(is_negation(Formula::make_and(A, B), de_morgan) == 1);
}

TEST_CASE("differing variable sets are an error") {
  REQUIRE_THROWS_AS(is_negation(A, B), rllf::DataError);
  REQUIRE_THROWS_AS(is_negation(Formula::make_and(A, B), A), rllf::DataError);
}

TEST_CASE("formula parser roundtrips") {
  const Formula f = Formula::make_implies(Formula::make_not(A), Formula::make_and(B, A));
  REQUIRE(parse_formula(f.str()).str() == f.str());
  REQUIRE_THROWS_AS(parse_formula("(nope A)"), rllf::DataError);
  REQUIRE_THROWS_AS(parse_formula("(and A"), rllf::DataError);
}

TEST_CASE("is_negation is symmetric and matches assignment enumeration, depth<=3 two vars") {
  auto formulas = enumerate_formulas(2, 3);
  // sanity on the enumeration size: v + (v + 3v^2) + ...
  REQUIRE(formulas.size() > 100);

  // string forms feed the independent evaluator
  std::vector<std::string> strs;
  for (const auto& f : formulas) strs.push_back(f.str());

  for (size_t i = 0; i < formulas.size(); ++i) {
    auto vars_i = rllf::formula_vars(formulas[i]);
    for (size_t j = i; j < formulas.size(); ++j) {
      if (vars_i != rllf::formula_vars(formulas[j])) continue;
      const int got = is_negation(formulas[i], formulas[j]);

      // oracle: brute-force over assignments of the shared variable set
      const auto vars = vars_i;
      bool complement = true;
      for (uint32_t m = 0; m < (1u << vars.size()); ++m) {
        std::vector<bool> assignment(2, false);
        for (size_t k = 0; k < vars.size(); ++k)
          assignment[static_cast<size_t>(vars[k])] = (m >> (vars.size() - 1 - k)) & 1u;
        if (eval_str(strs[i], assignment) == eval_str(strs[j], assignment)) {
          complement = false;
          break;
        }
      }
      REQUIRE(got == (complement ? 1 : 0));
      REQUIRE(is_negation(formulas[j], formulas[i]) == got);
    }
  }
}

TEST_CASE("every formula negates its own negation, depth<=3") {
  for (const auto& f : enumerate_formulas(2, 3))
    REQUIRE(is_negation(f, Formula::make_not(f)) == 1);
}
