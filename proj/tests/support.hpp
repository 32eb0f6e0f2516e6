#pragma once

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "tabkit/term.hpp"

namespace tabkit::testing {

// Random terms over a small alphabet, depth-bounded.
inline Term random_term(std::mt19937_64& rng, unsigned depth = 2,
                        unsigned max_vars = 4) {
  switch (rng() % (depth == 0 ? 3 : 4)) {
    case 0:
      return Term::atom("a" + std::to_string(rng() % 4));
    case 1:
      return Term::integer(static_cast<int64_t>(rng() % 10));
    case 2:
      return Term::var(static_cast<uint32_t>(rng() % max_vars));
    default: {
      unsigned n = 1 + rng() % 3;
      std::vector<Term> args;
      for (unsigned i = 0; i < n; ++i)
        args.push_back(random_term(rng, depth - 1, max_vars));
      return Term::compound("f" + std::to_string(rng() % 2), std::move(args));
    }
  }
}

inline void collect_vars(const Term& t, std::vector<uint32_t>& out) {
  if (t.is_var()) {
    if (std::find(out.begin(), out.end(), t.var_id()) == out.end())
      out.push_back(t.var_id());
  } else if (t.is_compound()) {
    for (const auto& a : t.args()) collect_vars(a, out);
  }
}

inline Term rename_vars(const Term& t, const std::map<uint32_t, uint32_t>& m) {
  if (t.is_var()) return Term::var(m.at(t.var_id()));
  if (t.is_compound()) {
    std::vector<Term> args;
    for (const auto& a : t.args()) args.push_back(rename_vars(a, m));
    return Term::compound_id(t.symbol(), std::move(args));
  }
  return t;
}

// Structural equality under a trial bijection of variables.
inline bool equal_under(const Term& a, const Term& b,
                        std::map<uint32_t, uint32_t>& fwd,
                        std::map<uint32_t, uint32_t>& rev) {
  if (a.is_var() || b.is_var()) {
    if (!a.is_var() || !b.is_var()) return false;
    auto f = fwd.find(a.var_id());
    auto r = rev.find(b.var_id());
    if (f == fwd.end() && r == rev.end()) {
      fwd[a.var_id()] = b.var_id();
      rev[b.var_id()] = a.var_id();
      return true;
    }
    return f != fwd.end() && r != rev.end() && f->second == b.var_id() &&
           r->second == a.var_id();
  }
  if (a.tag() != b.tag()) return false;
  if (a.is_int()) return a.int_value() == b.int_value();
  if (a.is_atom()) return a.symbol() == b.symbol();
  if (a.symbol() != b.symbol() || a.arity() != b.arity()) return false;
  for (size_t i = 0; i < a.arity(); ++i)
    if (!equal_under(a.arg(i), b.arg(i), fwd, rev)) return false;
  return true;
}

// Independent variant oracle: exists a variable bijection mapping a to b.
inline bool variant_oracle(const Term& a, const Term& b) {
  std::map<uint32_t, uint32_t> fwd, rev;
  return equal_under(a, b, fwd, rev);
}

// Brute-force transitive closure of a directed graph.
inline std::set<std::pair<int64_t, int64_t>> closure_oracle(
    const std::vector<std::pair<int64_t, int64_t>>& edges) {
  std::set<int64_t> nodes;
  std::map<int64_t, std::vector<int64_t>> adj;
  for (auto& [a, b] : edges) {
    nodes.insert(a);
    nodes.insert(b);
    adj[a].push_back(b);
  }
  std::set<std::pair<int64_t, int64_t>> out;
  for (int64_t s : nodes) {
    std::vector<int64_t> stack = adj.count(s) ? adj[s] : std::vector<int64_t>{};
    std::set<int64_t> seen;
    while (!stack.empty()) {
      int64_t v = stack.back();
      stack.pop_back();
      if (!seen.insert(v).second) continue;
      out.emplace(s, v);
      if (adj.count(v))
        for (int64_t nx : adj[v]) stack.push_back(nx);
    }
  }
  return out;
}

// Textbook DP oracles, independent of the tabling path.
inline int64_t knapsack_oracle(const std::vector<int64_t>& w,
                               const std::vector<int64_t>& p, unsigned n,
                               unsigned cap) {
  std::vector<int64_t> row(cap + 1, 0);
  for (unsigned i = 1; i <= n; ++i)
    for (int64_t c = cap; c >= w[i]; --c)
      row[c] = std::max(row[c], row[c - w[i]] + p[i]);
  return row[cap];
}

inline int64_t lcs_oracle(const std::vector<int64_t>& a,
                          const std::vector<int64_t>& b, unsigned n) {
  std::vector<int64_t> prev(n + 1, 0), cur(n + 1, 0);
  for (unsigned i = 1; i <= n; ++i) {
    for (unsigned j = 1; j <= n; ++j) {
      if (a[i] == b[j])
        cur[j] = prev[j - 1] + 1;
      else
        cur[j] = std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

}  // namespace tabkit::testing
