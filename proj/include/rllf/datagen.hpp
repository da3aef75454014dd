#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "rllf/chain.hpp"
#include "rllf/dataio.hpp"
#include "rllf/errors.hpp"
#include "rllf/logic.hpp"
#include "rllf/rng.hpp"

namespace rllf::datagen {

// Closed template pools. Small on purpose: the tokenizer vocabulary stays
// closed and every label stays re-checkable by an exact oracle.
inline const std::vector<std::string>& entities() {
  static const std::vector<std::string> v = {"alice", "bob",   "carol", "dave",
                                             "erin",  "frank", "grace", "henry"};
  return v;
}

inline const std::vector<std::string>& predicates() {
  static const std::vector<std::string> v = {"kind",   "nice",  "smart",  "happy",
                                             "brave",  "calm",  "quiet",  "strong",
                                             "funny",  "gentle", "honest", "polite",
                                             "proud",  "loyal", "clever", "careful"};
  return v;
}

// Declared complementary predicate pairs; the one place a negation label
// exists without an explicit negator. Used only by the eval-hard pool.
inline const std::vector<std::pair<std::string, std::string>>& antonyms() {
  static const std::vector<std::pair<std::string, std::string>> v = {
      {"tall", "short"},   {"young", "old"},    {"rich", "poor"},     {"awake", "asleep"},
      {"present", "absent"}, {"guilty", "innocent"}, {"married", "single"}, {"alive", "dead"}};
  return v;
}

namespace detail {

inline int pick(std::mt19937& rng, int n) {
  return static_cast<int>(std::uniform_int_distribution<int>(0, n - 1)(rng));
}

template <typename T>
const T& choice(std::mt19937& rng, const std::vector<T>& pool) {
  return pool[static_cast<size_t>(pick(rng, static_cast<int>(pool.size())))];
}

enum Stream : uint64_t {
  kDeduction = 0x11,
  kNearPair = 0x22,
  kHardPair = 0x33,
  kPretrain = 0x44,
};

inline std::mt19937 stream_rng(uint64_t seed, uint64_t stream, uint64_t index) {
  return make_rng(seed, (stream << 40) ^ index);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Deduction samples (context prose, question prose, derivability label)
// ---------------------------------------------------------------------------

inline std::string fact_sentence(const Atom& a) { return a.entity + " is " + a.predicate + " ."; }

inline std::string rule_sentence(const Rule& r) {
  std::string s = "if someone is " + r.body[0];
  for (size_t i = 1; i < r.body.size(); ++i) s += " and " + r.body[i];
  return s + " then they are " + r.head + " .";
}

inline LabeledPair gen_deduction_sample(uint64_t seed, int index) {
  std::mt19937 rng = detail::stream_rng(seed, detail::kDeduction, static_cast<uint64_t>(index));
  const int want = index % 2;
  const auto& ents = entities();
  const auto& preds = predicates();

  for (int attempt = 0; attempt < 64; ++attempt) {
    RuleBase rb;
    const int n_ents = 2 + detail::pick(rng, 2);
    std::vector<std::string> chosen_ents;
    {
      std::vector<std::string> pool = ents;
      std::shuffle(pool.begin(), pool.end(), rng);
      chosen_ents.assign(pool.begin(), pool.begin() + n_ents);
    }

    const int n_facts = 3 + detail::pick(rng, 3);
    std::set<Atom> fact_set;
    for (int i = 0; i < n_facts; ++i)
      fact_set.insert({detail::choice(rng, preds), detail::choice(rng, chosen_ents)});
    rb.facts.assign(fact_set.begin(), fact_set.end());

    const int n_rules = 2 + detail::pick(rng, 3);
    for (int i = 0; i < n_rules; ++i) {
      Rule r;
      const int body_n = 1 + detail::pick(rng, 2);
      std::set<std::string> body;
      while (static_cast<int>(body.size()) < body_n) body.insert(detail::choice(rng, preds));
      r.body.assign(body.begin(), body.end());
      do {
        r.head = detail::choice(rng, preds);
      } while (body.count(r.head));
      rb.rules.push_back(r);
    }

    const std::map<Atom, int> derived = derive_all(rb);
    Atom query;
    bool found = false;
    if (want == 1) {
      // mix derivation depths: facts, one-hop, deeper
      std::vector<Atom> by_round[3];
      for (const auto& [atom, round] : derived)
        by_round[std::min(round, 2)].push_back(atom);
      const float u = std::uniform_real_distribution<float>(0.0f, 1.0f)(rng);
      int order[3];
      if (u < 0.30f) {
        order[0] = 0; order[1] = 1; order[2] = 2;
      } else if (u < 0.75f) {
        order[0] = 1; order[1] = 2; order[2] = 0;
      } else {
        order[0] = 2; order[1] = 1; order[2] = 0;
      }
      for (int b : order) {
        if (!by_round[b].empty()) {
          query = by_round[b][static_cast<size_t>(detail::pick(rng, static_cast<int>(by_round[b].size())))];
          found = true;
          break;
        }
      }
    } else {
      // prefer near misses: rule heads whose body partially holds
      std::set<std::string> base_preds;
      for (const auto& f : rb.facts) base_preds.insert(f.predicate);
      for (const auto& r : rb.rules) base_preds.insert(r.head);
      std::vector<Atom> near_miss, other;
      for (const auto& e : chosen_ents) {
        for (const auto& r : rb.rules) {
          Atom head{r.head, e};
          if (derived.count(head)) continue;
          bool partial = false;
          for (const auto& bp : r.body)
            if (derived.count({bp, e})) partial = true;
          (partial ? near_miss : other).push_back(head);
        }
        for (const auto& p : base_preds)
          if (!derived.count({p, e})) other.push_back({p, e});
      }
      const bool use_near =
          !near_miss.empty() && std::uniform_real_distribution<float>(0.0f, 1.0f)(rng) < 0.6f;
      const auto& pool = use_near ? near_miss : (other.empty() ? near_miss : other);
      if (!pool.empty()) {
        query = pool[static_cast<size_t>(detail::pick(rng, static_cast<int>(pool.size())))];
        found = true;
      }
    }
    if (!found) continue;

    std::vector<std::string> sentences;
    for (const auto& f : rb.facts) sentences.push_back(fact_sentence(f));
    for (const auto& r : rb.rules) sentences.push_back(rule_sentence(r));
    std::shuffle(sentences.begin(), sentences.end(), rng);
    std::string context;
    for (size_t i = 0; i < sentences.size(); ++i) {
      if (i) context += ' ';
      context += sentences[i];
    }

    nlohmann::ordered_json source;
    for (const auto& f : rb.facts) source["facts"].push_back({f.predicate, f.entity});
    for (const auto& r : rb.rules)
      source["rules"].push_back({{"body", r.body}, {"head", r.head}});
    source["query"] = {query.predicate, query.entity};

    LabeledPair p;
    p.sentence_a = context;
    p.sentence_b = query.entity + " is " + query.predicate + " .";
    p.label = want;
    p.provenance = "deduction";
    p.source = source.dump();
    return p;
  }
  throw DataError("gen_deduction_sample: could not realize label " + std::to_string(want) +
                  " at index " + std::to_string(index));
}

inline std::vector<LabeledPair> gen_deduction_corpus(uint64_t seed, int n) {
  if (n < 1) throw DataError("gen_deduction_corpus: n must be >= 1");
  std::vector<LabeledPair> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(gen_deduction_sample(seed, i));
  return out;
}

// ---------------------------------------------------------------------------
// Negation pairs
// ---------------------------------------------------------------------------

enum class NegationMode { TrainNear, EvalHard };

// Prose realization of a formula under an atom map: atom i reads
// "<entity> is <predicate>". Negated atoms inline the "not"; negation of a
// compound uses the "it is not the case that" frame.
struct AtomSurface {
  std::string entity;
  std::string predicate;
};

inline std::string realize(const Formula& f, const std::vector<AtomSurface>& atoms) {
  using K = Formula::Kind;
  switch (f.kind) {
    case K::Var:
      return atoms[static_cast<size_t>(f.var)].entity + " is " +
             atoms[static_cast<size_t>(f.var)].predicate;
    case K::Not:
      if (f.kids[0].kind == K::Var) {
        const auto& a = atoms[static_cast<size_t>(f.kids[0].var)];
        return a.entity + " is not " + a.predicate;
      }
      return "it is not the case that " + realize(f.kids[0], atoms);
    case K::And:
      return realize(f.kids[0], atoms) + " and " + realize(f.kids[1], atoms);
    case K::Or:
      return realize(f.kids[0], atoms) + " or " + realize(f.kids[1], atoms);
    case K::Implies:
      return "if " + realize(f.kids[0], atoms) + " then " + realize(f.kids[1], atoms);
  }
  return "";
}

namespace detail {

inline LabeledPair make_formula_pair(std::mt19937& rng, const Formula& f, const Formula& g) {
  const auto vars = formula_vars(f);
  std::vector<AtomSurface> atoms(vars.empty() ? 1 : static_cast<size_t>(vars.back()) + 1);
  std::vector<std::string> ents = entities();
  std::shuffle(ents.begin(), ents.end(), rng);
  std::vector<std::string> preds = predicates();
  std::shuffle(preds.begin(), preds.end(), rng);
  for (size_t i = 0; i < vars.size(); ++i) {
    atoms[static_cast<size_t>(vars[i])] = {ents[i % ents.size()], preds[i % preds.size()]};
  }
  LabeledPair p;
  p.sentence_a = realize(f, atoms);
  p.sentence_b = realize(g, atoms);
  p.label = is_negation(f, g);
  p.provenance = "truth-table";
  nlohmann::ordered_json source;
  source["f"] = f.str();
  source["g"] = g.str();
  p.source = source.dump();
  return p;
}

inline LabeledPair make_template_pair(const std::string& tmpl, std::string a, std::string b,
                                      int label) {
  LabeledPair p;
  p.sentence_a = std::move(a);
  p.sentence_b = std::move(b);
  p.label = label;
  p.provenance = "negation-template";
  nlohmann::ordered_json source;
  source["template"] = tmpl;
  p.source = source.dump();
  return p;
}

// The template table IS the oracle for negation-template provenance.
inline const std::map<std::string, int>& template_labels() {
  static const std::map<std::string, int> m = {
      {"simple-not", 1},  {"false-that", 1},     {"antonym", 1},
      {"identical", 0},   {"pred-mismatch", 0},  {"entity-mismatch", 0},
      {"both-not-entity-mismatch", 0}, {"not-only", 0}};
  return m;
}

inline LabeledPair gen_near_pair(uint64_t seed, int index) {
  std::mt19937 rng = stream_rng(seed, kNearPair, static_cast<uint64_t>(index));
  const int want = index % 2;
  const auto& ents = entities();
  const auto& preds = predicates();
  const std::string x = choice(rng, ents);
  const std::string p = choice(rng, preds);

  if (want == 1) {
    switch (pick(rng, 3)) {
      case 0:
        return make_template_pair("simple-not", x + " is " + p, x + " is not " + p, 1);
      case 1:
        return make_template_pair("simple-not", x + " is not " + p, x + " is " + p, 1);
      default:
        return make_template_pair("false-that", x + " is " + p, "it is false that " + x + " is " + p, 1);
    }
  }
  switch (pick(rng, 4)) {
    case 0:
      return make_template_pair("identical", x + " is " + p, x + " is " + p, 0);
    case 1: {
      std::string q;
      do {
        q = choice(rng, preds);
      } while (q == p);
      return make_template_pair("pred-mismatch", x + " is " + p, x + " is " + q, 0);
    }
    case 2: {
      std::string y;
      do {
        y = choice(rng, ents);
      } while (y == x);
      return make_template_pair("entity-mismatch", x + " is " + p, y + " is " + p, 0);
    }
    default: {
      std::string y;
      do {
        y = choice(rng, ents);
      } while (y == x);
      return make_template_pair("both-not-entity-mismatch", x + " is not " + p, y + " is not " + p, 0);
    }
  }
}

// Formula families for the hard pool. Positive families all carry an
// explicit negator; negative families carry none, so the bucket shares
// stay exact.
inline std::pair<Formula, Formula> hard_formula_pair(std::mt19937& rng, bool positive) {
  const Formula A = Formula::make_var(0), B = Formula::make_var(1);
  if (positive) {
    switch (pick(rng, 4)) {
      case 0:  // de morgan over and
        return {Formula::make_and(A, B),
                Formula::make_or(Formula::make_not(A), Formula::make_not(B))};
      case 1:  // de morgan over or
        return {Formula::make_or(A, B),
                Formula::make_and(Formula::make_not(A), Formula::make_not(B))};
      case 2:  // negated conditional
        return {Formula::make_implies(A, B), Formula::make_and(A, Formula::make_not(B))};
      default:  // atom vs framed negation
        return {A, Formula::make_not(Formula::make_not(Formula::make_not(A)))};
    }
  }
  switch (pick(rng, 3)) {
    case 0:  // converse, not a negation
      return {Formula::make_implies(A, B), Formula::make_implies(B, A)};
    case 1:  // weaker/stronger, not a negation
      return {Formula::make_or(A, B), Formula::make_and(A, B)};
    default:  // commuted, identical table
      return {Formula::make_or(A, B), Formula::make_or(B, A)};
  }
}

inline LabeledPair gen_hard_not_bearing_zero(uint64_t seed, int index) {
  std::mt19937 rng = stream_rng(seed, kHardPair, static_cast<uint64_t>(index));
  const auto& ents = entities();
  const auto& preds = predicates();
  switch (pick(rng, 3)) {
    case 0: {  // "not only ... but also": affirms both conjuncts
      const std::string x = choice(rng, ents);
      const std::string p = choice(rng, preds);
      std::string q;
      do {
        q = choice(rng, preds);
      } while (q == p);
      return make_template_pair("not-only", x + " is not only " + p + " but also " + q,
                                x + " is " + p + " and " + q, 0);
    }
    case 1: {  // double negation
      const Formula A = Formula::make_var(0);
      return make_formula_pair(rng, A, Formula::make_not(Formula::make_not(A)));
    }
    default: {  // the two near-miss disjunctions of the classic truth table
      const Formula A = Formula::make_var(0), B = Formula::make_var(1);
      return make_formula_pair(rng, Formula::make_or(Formula::make_not(A), B),
                               Formula::make_or(A, Formula::make_not(B)));
    }
  }
}

}  // namespace detail

inline std::vector<LabeledPair> gen_negation_corpus(uint64_t seed, int n, NegationMode mode) {
  if (n < 1) throw DataError("gen_negation_corpus: n must be >= 1");
  std::vector<LabeledPair> out;
  out.reserve(static_cast<size_t>(n));

  if (mode == NegationMode::TrainNear) {
    for (int i = 0; i < n; ++i) out.push_back(detail::gen_near_pair(seed, i));
    return out;
  }

  // Hard pool composition: 30% "not"-bearing label-0, 30% negator-free
  // label-1 (antonyms), remainder formula pairs balancing labels exactly.
  const int n_a = static_cast<int>(std::lround(0.3 * n));
  const int n_b = static_cast<int>(std::lround(0.3 * n));
  const int pos_target = (n + 1) / 2;
  const int neg_target = n - pos_target;
  const int c_pos = pos_target - n_b;
  const int c_neg = neg_target - n_a;
  if (c_pos < 0 || c_neg < 0)
    throw DataError("gen_negation_corpus: eval-hard needs n >= 10 for its composition");

  for (int i = 0; i < n_a; ++i) out.push_back(detail::gen_hard_not_bearing_zero(seed, i));

  // antonym instances drawn without replacement from the combo space
  {
    std::vector<LabeledPair> combos;
    for (const auto& [p1, p2] : antonyms())
      for (const auto& e : entities()) {
        combos.push_back(detail::make_template_pair("antonym", e + " is " + p1, e + " is " + p2, 1));
        combos.push_back(detail::make_template_pair("antonym", e + " is " + p2, e + " is " + p1, 1));
      }
    std::mt19937 rng = detail::stream_rng(seed, detail::kHardPair, 0xA17070ULL);
    std::shuffle(combos.begin(), combos.end(), rng);
    for (int i = 0; i < n_b; ++i)
      out.push_back(combos[static_cast<size_t>(i) % combos.size()]);
  }

  for (int i = 0; i < c_pos + c_neg; ++i) {
    const bool positive = i < c_pos;
    std::mt19937 rng =
        detail::stream_rng(seed, detail::kHardPair, 0xC000000ULL + static_cast<uint64_t>(i));
    auto [f, g] = detail::hard_formula_pair(rng, positive);
    LabeledPair p = detail::make_formula_pair(rng, f, g);
    if (p.label != (positive ? 1 : 0))
      throw DataError("gen_negation_corpus: formula family produced unexpected label");
    out.push_back(p);
  }

  std::mt19937 rng = detail::stream_rng(seed, detail::kHardPair, 0x5F5F5FULL);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

// ---------------------------------------------------------------------------
// Pretraining text and label replay
// ---------------------------------------------------------------------------

// Sentence lines for causal-LM pretraining: the corpus sentences themselves
// plus a small primer slice that covers the prompt vocabularies (the negate
// instruction and the yes/no answer format). Primer answers are biased 3:1
// toward yes, so an untuned model keeps one consistent answer.
inline std::vector<std::string> gen_pretrain_corpus(uint64_t seed,
                                                    const std::vector<LabeledPair>& deduction,
                                                    const std::vector<LabeledPair>& pairs,
                                                    int max_lines) {
  std::vector<std::string> lines;
  std::set<std::string> seen;
  auto add = [&](const std::string& s) {
    if (!s.empty() && seen.insert(s).second) lines.push_back(s);
  };

  for (const auto& d : deduction) {
    // contexts are "s1 . s2 . ... ." prose; split them back into sentences
    std::string acc;
    for (size_t i = 0; i < d.sentence_a.size(); ++i) {
      acc += d.sentence_a[i];
      if (d.sentence_a[i] == '.') {
        while (!acc.empty() && acc.front() == ' ') acc.erase(acc.begin());
        add(acc);
        acc.clear();
      }
    }
    add(d.sentence_b);
  }
  for (const auto& p : pairs) {
    add(p.sentence_a + " .");
    add(p.sentence_b + " .");
  }

  std::mt19937 rng = detail::stream_rng(seed, detail::kPretrain, 0);
  const int primer_count = std::max(24, static_cast<int>(lines.size()) / 40);
  for (int i = 0; i < primer_count; ++i) {
    const std::string x = detail::choice(rng, entities());
    std::string y;
    do {
      y = detail::choice(rng, entities());
    } while (y == x);
    const std::string p = detail::choice(rng, predicates());
    const std::string q = detail::choice(rng, predicates());
    const std::string s1 = x + " is " + p;
    const std::string s2 = y + " is " + q;
    switch (i % 4) {
      case 0:
        lines.push_back("negate : " + s1 + " <sep> " + s2);
        break;
      case 1:
        lines.push_back("does sentence two negate sentence one ? " + s1 + " <sep> " + s2 +
                        " answer : yes");
        break;
      case 2:
        lines.push_back("does sentence two negate sentence one ? " + s1 + " <sep> " + s2 +
                        " answer : " + (i % 8 == 2 ? "no" : "yes"));
        break;
      default:
        lines.push_back("the answer is " + std::string(i % 8 == 3 ? "no" : "yes") + " .");
        break;
    }
  }

  std::shuffle(lines.begin(), lines.end(), rng);
  if (max_lines > 0 && static_cast<int>(lines.size()) > max_lines)
    lines.resize(static_cast<size_t>(max_lines));
  return lines;
}

// Re-runs the generating oracle recorded in `source`. Throws DataError when
// the record has no replayable source.
inline int replay_label(const LabeledPair& p) {
  if (p.source.empty()) throw DataError("replay_label: record has no source");
  nlohmann::json s = nlohmann::json::parse(p.source);
  if (p.provenance == "deduction") {
    RuleBase rb;
    for (const auto& f : s.at("facts"))
      rb.facts.push_back({f.at(0).get<std::string>(), f.at(1).get<std::string>()});
    for (const auto& r : s.at("rules")) {
      Rule rule;
      rule.body = r.at("body").get<std::vector<std::string>>();
      rule.head = r.at("head").get<std::string>();
      rb.rules.push_back(rule);
    }
    Atom query{s.at("query").at(0).get<std::string>(), s.at("query").at(1).get<std::string>()};
    return forward_chain(rb, query) ? 1 : 0;
  }
  if (p.provenance == "truth-table") {
    return is_negation(parse_formula(s.at("f").get<std::string>()),
                       parse_formula(s.at("g").get<std::string>()));
  }
  if (p.provenance == "negation-template") {
    const std::string tmpl = s.at("template").get<std::string>();
    auto it = detail::template_labels().find(tmpl);
    if (it == detail::template_labels().end())
      throw DataError("replay_label: unknown template " + tmpl);
    return it->second;
  }
  throw DataError("replay_label: unknown provenance " + p.provenance);
}

}  // namespace rllf::datagen
