#include "tabkit/term.hpp"

#include <random>

#include "doctest.h"
#include "support.hpp"

using namespace tabkit;
using namespace tabkit::testing;

TEST_CASE("canonicalize renames variables in first-occurrence order") {
  // p(X,1,Y) -> [p/3, var(0), int(1), var(1)]
  Term goal = Term::compound("p", {Term::var(7), Term::integer(1), Term::var(3)});
  SubgoalKey key = canonicalize(goal);
  CHECK(key.pred == predicate_id(SymbolTable::intern("p"), 3));
  REQUIRE(key.tokens.size() == 3);
  CHECK(key.tokens[0] == tok::var(0));
  CHECK(key.tokens[1] == tok::integer(1));
  CHECK(key.tokens[2] == tok::var(1));
  CHECK(key.nvars == 2);
  auto full = key.full_tokens();
  CHECK(full[0] == tok::functor(SymbolTable::intern("p"), 3));

  // p(W,1,Z) is the same key
  Term goal2 = Term::compound("p", {Term::var(0), Term::integer(1), Term::var(9)});
  CHECK(canonicalize(goal2) == key);
}

TEST_CASE("ground goals have no variable tokens") {
  Term goal = Term::compound("p", {Term::atom("a"), Term::atom("b")});
  SubgoalKey key = canonicalize(goal);
  CHECK(key.nvars == 0);
  REQUIRE(key.tokens.size() == 2);
  CHECK(tok::tag(key.tokens[0]) == tok::kAtom);
  CHECK(tok::tag(key.tokens[1]) == tok::kAtom);
}

TEST_CASE("canonicalize rejects non-callable terms") {
  CHECK_THROWS_AS(canonicalize(Term::integer(3)), structural_error);
  CHECK_THROWS_AS(canonicalize(Term::var(0)), structural_error);
}

TEST_CASE("is_variant matches the paper's examples") {
  Term a = Term::compound("p", {Term::var(0), Term::integer(1), Term::var(1)});
  Term b = Term::compound("p", {Term::var(5), Term::integer(1), Term::var(6)});
  CHECK(is_variant(a, b));
  CHECK(is_variant(a, a));  // reflexive
  // p(X,X) vs p(X,Y): no bijection maps one onto the other
  Term c = Term::compound("p", {Term::var(0), Term::var(0)});
  Term d = Term::compound("p", {Term::var(0), Term::var(1)});
  CHECK_FALSE(is_variant(c, d));
  CHECK(variant_oracle(c, d) == is_variant(c, d));
}

TEST_CASE("canonicalize is idempotent under random variable renamings") {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 1000; ++i) {
    Term t = Term::compound("g", {random_term(rng), random_term(rng)});
    std::vector<uint32_t> vars;
    collect_vars(t, vars);
    // random bijection onto fresh ids
    std::vector<uint32_t> target(vars.size());
    for (size_t k = 0; k < vars.size(); ++k) target[k] = 100 + static_cast<uint32_t>(k);
    std::shuffle(target.begin(), target.end(), rng);
    std::map<uint32_t, uint32_t> m;
    for (size_t k = 0; k < vars.size(); ++k) m[vars[k]] = target[k];
    Term renamed = rename_vars(t, m);
    CHECK(canonicalize(t) == canonicalize(renamed));
    CHECK(is_variant(t, renamed));
  }
}

TEST_CASE("is_variant agrees with the brute-force bijection oracle") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 1000; ++i) {
    Term a = Term::compound("g", {random_term(rng), random_term(rng)});
    Term b = Term::compound("g", {random_term(rng), random_term(rng)});
    CHECK(is_variant(a, b) == variant_oracle(a, b));
  }
}

TEST_CASE("is_variant is an equivalence relation on random terms") {
  std::mt19937_64 rng(11);
  std::vector<Term> ts;
  for (int i = 0; i < 30; ++i)
    ts.push_back(Term::compound("g", {random_term(rng, 1), random_term(rng, 1)}));
  for (const Term& a : ts) CHECK(is_variant(a, a));
  for (const Term& a : ts)
    for (const Term& b : ts) CHECK(is_variant(a, b) == is_variant(b, a));
  for (const Term& a : ts)
    for (const Term& b : ts)
      for (const Term& c : ts)
        if (is_variant(a, b) && is_variant(b, c)) CHECK(is_variant(a, c));
}

TEST_CASE("token sequences round-trip to variants of the original") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 500; ++i) {
    Term t = Term::compound("g", {random_term(rng), random_term(rng)});
    SubgoalKey key = canonicalize(t);
    Term back = key_to_term(key);
    CHECK(is_variant(t, back));
  }
}

TEST_CASE("answer_tokens reads substitutions off the generator goal") {
  // key p(var0,1,var1), answer p(a,1,b) -> [atom(a), atom(b)]
  SubgoalKey key = canonicalize(
      Term::compound("p", {Term::var(0), Term::integer(1), Term::var(1)}));
  Term ans = Term::compound("p", {Term::atom("a"), Term::integer(1), Term::atom("b")});
  auto toks = answer_tokens(key, ans);
  REQUIRE(toks.size() == 2);
  CHECK(toks[0] == tok::atom(SymbolTable::intern("a")));
  CHECK(toks[1] == tok::atom(SymbolTable::intern("b")));

  // key path(var0,var1), answer path(3,7) -> [int(3), int(7)]
  SubgoalKey k2 = canonicalize(Term::compound("path", {Term::var(0), Term::var(1)}));
  auto t2 = answer_tokens(k2, Term::compound("path", {Term::integer(3), Term::integer(7)}));
  REQUIRE(t2.size() == 2);
  CHECK(t2[0] == tok::integer(3));
  CHECK(t2[1] == tok::integer(7));
}

TEST_CASE("answer_tokens canonically renames non-ground answers") {
  // key p(var0), answer p(f(W)) -> [f/1, var(0)]
  SubgoalKey key = canonicalize(Term::compound("p", {Term::var(0)}));
  Term ans = Term::compound("p", {Term::compound("f", {Term::var(42)})});
  auto toks = answer_tokens(key, ans);
  REQUIRE(toks.size() == 2);
  CHECK(toks[0] == tok::functor(SymbolTable::intern("f"), 1));
  CHECK(toks[1] == tok::var(0));
  // check against the variant oracle: rebuilding the answer from the key and
  // tokens must be a variant of the original
  Term rebuilt = apply_answer(key, toks);
  CHECK(variant_oracle(ans, rebuilt));
}

TEST_CASE("answer_tokens rejects non-matching answers") {
  SubgoalKey key = canonicalize(
      Term::compound("p", {Term::var(0), Term::integer(1), Term::var(1)}));
  // wrong constant in the constrained position
  Term bad = Term::compound("p", {Term::atom("a"), Term::integer(2), Term::atom("b")});
  CHECK_THROWS_AS(answer_tokens(key, bad), contract_error);
  Term wrong_pred = Term::compound("q", {Term::atom("a")});
  CHECK_THROWS_AS(answer_tokens(key, wrong_pred), contract_error);
}

TEST_CASE("repeated variables in keys constrain answers") {
  SubgoalKey key = canonicalize(Term::compound("p", {Term::var(0), Term::var(0)}));
  CHECK(key.nvars == 1);
  Term ok = Term::compound("p", {Term::integer(4), Term::integer(4)});
  auto toks = answer_tokens(key, ok);
  CHECK(toks.size() == 1);
  Term bad = Term::compound("p", {Term::integer(4), Term::integer(5)});
  CHECK_THROWS_AS(answer_tokens(key, bad), contract_error);
}

TEST_CASE("token text rendering") {
  CHECK(tok::to_string(tok::integer(-3)) == "int(-3)");
  CHECK(tok::to_string(tok::var(2)) == "var(2)");
}
