#pragma once

#include <deque>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rllf/errors.hpp"

namespace rllf {

// Ground atom: predicate(entity).
struct Atom {
  std::string predicate;
  std::string entity;
  auto operator<=>(const Atom&) const = default;
};

// Horn rule over a single implicitly universally quantified subject:
// body[0](x) & ... & body[k](x) -> head(x).
struct Rule {
  std::vector<std::string> body;
  std::string head;
};

struct RuleBase {
  std::vector<Atom> facts;
  std::vector<Rule> rules;
};

// Least fixpoint of the facts under the rules, worklist-driven: each derived
// (predicate, entity) bumps the satisfied-body counters of the rules that
// mention the predicate, firing heads when a counter completes. Returns each
// derived atom with its derivation round (facts are round 0). Closed world:
// anything absent from the result is false.
inline std::map<Atom, int> derive_all(const RuleBase& rb) {
  std::set<std::string> entities;
  for (const auto& f : rb.facts) entities.insert(f.entity);

  // dedupe rule bodies so repeated predicates count once
  std::vector<std::vector<std::string>> bodies;
  bodies.reserve(rb.rules.size());
  std::map<std::string, std::vector<size_t>> by_pred;  // body predicate -> rule ids
  for (size_t r = 0; r < rb.rules.size(); ++r) {
    std::set<std::string> b(rb.rules[r].body.begin(), rb.rules[r].body.end());
    if (b.empty()) throw DataError("forward_chain: rule with empty body");
    bodies.emplace_back(b.begin(), b.end());
    for (const auto& p : bodies.back()) by_pred[p].push_back(r);
  }

  std::map<Atom, int> derived;
  std::map<std::pair<size_t, std::string>, size_t> satisfied;  // (rule, entity) -> count
  std::deque<Atom> queue;

  auto push = [&](const Atom& a, int round) {
    if (derived.emplace(a, round).second) queue.push_back(a);
  };
  for (const auto& f : rb.facts) push(f, 0);

  while (!queue.empty()) {
    Atom a = queue.front();
    queue.pop_front();
    const int round = derived[a];
    auto it = by_pred.find(a.predicate);
    if (it == by_pred.end()) continue;
    for (size_t r : it->second) {
      size_t& count = satisfied[{r, a.entity}];
      ++count;
      if (count == bodies[r].size()) push({rb.rules[r].head, a.entity}, round + 1);
    }
  }
  return derived;
}

inline bool forward_chain(const RuleBase& rb, const Atom& query) {
  return derive_all(rb).count(query) > 0;
}

}  // namespace rllf
