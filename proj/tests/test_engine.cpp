#include "tabkit/engine.hpp"

#include <random>
#include <set>

#include "doctest.h"
#include "support.hpp"

using namespace tabkit;
using namespace tabkit::testing;

namespace {

std::string edges_text(const std::vector<std::pair<int64_t, int64_t>>& edges) {
  std::string s;
  for (auto& [a, b] : edges)
    s += "edge(" + std::to_string(a) + "," + std::to_string(b) + ").\n";
  return s;
}

std::string path_left_program(const std::vector<std::pair<int64_t, int64_t>>& edges) {
  return ":- table path/2.\n"
         "path(X,Z) :- path(X,Y), edge(Y,Z).\n"
         "path(X,Z) :- edge(X,Z).\n" +
         edges_text(edges);
}

std::string path_right_program(const std::vector<std::pair<int64_t, int64_t>>& edges) {
  return ":- table path/2.\n"
         "path(X,Z) :- edge(X,Y), path(Y,Z).\n"
         "path(X,Z) :- edge(X,Z).\n" +
         edges_text(edges);
}

std::set<std::pair<int64_t, int64_t>> answers_to_pairs(
    const std::vector<std::vector<Token>>& answers) {
  std::set<std::pair<int64_t, int64_t>> out;
  for (const auto& a : answers) {
    REQUIRE(a.size() == 2);
    out.emplace(tok::int_value(a[0]), tok::int_value(a[1]));
  }
  return out;
}

SolveResult solve_text(const std::string& text, const std::string& query,
                       EvalConfig cfg) {
  Engine e(compile_program_text(text), cfg);
  return e.solve(parse_term_text(query));
}

const std::vector<std::pair<int64_t, int64_t>> kCycle3 = {{1, 2}, {2, 3}, {3, 1}};

}  // namespace

TEST_CASE("path-left over a 3-cycle finds the full closure") {
  auto oracle = closure_oracle(kCycle3);
  CHECK(oracle.size() == 9);
  for (Design d : {Design::NS, Design::SS, Design::FS, Design::PAS, Design::PAC}) {
    CAPTURE(to_string(d));
    EvalConfig cfg;
    cfg.design = d;
    SolveResult res = solve_text(path_left_program(kCycle3), "path(X,Y)", cfg);
    CHECK(answers_to_pairs(res.answers) == oracle);
  }
}

TEST_CASE("local and batched produce identical final answer sets") {
  std::mt19937_64 rng(21);
  for (int round = 0; round < 5; ++round) {
    std::vector<std::pair<int64_t, int64_t>> edges;
    int n = 4 + static_cast<int>(rng() % 8);
    for (int i = 0; i < 2 * n; ++i)
      edges.emplace_back(1 + rng() % n, 1 + rng() % n);
    std::string prog = path_left_program(edges);
    EvalConfig local, batched;
    batched.sched = Scheduling::Batched;
    SolveResult a = solve_text(prog, "path(X,Y)", local);
    SolveResult b = solve_text(prog, "path(X,Y)", batched);
    CHECK(a.answers == b.answers);
    CHECK(answers_to_pairs(a.answers) == closure_oracle(edges));
  }
}

TEST_CASE("left recursion over a 5-node chain reaches its fixpoint") {
  std::vector<std::pair<int64_t, int64_t>> chain = {{1, 2}, {2, 3}, {3, 4}, {4, 5}};
  auto oracle = closure_oracle(chain);
  CHECK(oracle.size() == 10);
  SolveResult res = solve_text(path_left_program(chain), "path(X,Y)", {});
  CHECK(answers_to_pairs(res.answers) == oracle);
}

TEST_CASE("answer counting matches single-evaluation semantics on cycles") {
  // cycle(n), path-left: n^2 unique answers, n repeated derivations
  for (int64_t n : {3, 8, 20}) {
    CAPTURE(n);
    std::vector<std::pair<int64_t, int64_t>> edges;
    for (int64_t i = 1; i < n; ++i) edges.emplace_back(i, i + 1);
    edges.emplace_back(n, 1);
    SolveResult res = solve_text(path_left_program(edges), "path(X,Y)", {});
    CHECK(res.stats.unique == static_cast<uint64_t>(n * n));
    CHECK(res.stats.repeated == static_cast<uint64_t>(n));
    CHECK(res.stats.calls == 1);

    // path-right: n+1 calls, 2n^2 unique, 2n repeated
    SolveResult rr = solve_text(path_right_program(edges), "path(X,Y)", {});
    CHECK(rr.stats.unique == static_cast<uint64_t>(2 * n * n));
    CHECK(rr.stats.repeated == static_cast<uint64_t>(2 * n));
    CHECK(rr.stats.calls == static_cast<uint64_t>(n + 1));
    CHECK(rr.answers.size() == static_cast<size_t>(n * n));
  }
}

TEST_CASE("derivation counting is exact for rules with two tabled literals") {
  // path(X,Z) :- path(X,Y), path(Y,Z): combinations join exactly once
  std::string prog =
      ":- table path/2.\n"
      "path(X,Z) :- path(X,Y), path(Y,Z).\n"
      "path(X,Z) :- edge(X,Z).\n" +
      edges_text(kCycle3);
  SolveResult res = solve_text(prog, "path(X,Y)", {});
  auto oracle = closure_oracle(kCycle3);
  CHECK(answers_to_pairs(res.answers) == oracle);
  // the open call joins every (x,y),(y,z) combination once (27) plus 3 edge
  // facts; the second occurrence calls the bound subgoals path(y,_), each a
  // generator with 3 answers joining 3x3 combinations plus 1 edge fact
  CHECK(res.stats.calls == 4);
  CHECK(res.stats.unique == 9 + 3 * 3);
  CHECK(res.stats.unique + res.stats.repeated == (27 + 3) + 3 * (9 + 1));
}

TEST_CASE("eight workers reach the same fixpoint as one") {
  std::vector<std::pair<int64_t, int64_t>> edges;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 40; ++i) edges.emplace_back(1 + rng() % 15, 1 + rng() % 15);
  auto oracle = closure_oracle(edges);
  for (Design d : {Design::NS, Design::SS, Design::FS, Design::PAS, Design::PAC}) {
    CAPTURE(to_string(d));
    EvalConfig cfg;
    cfg.design = d;
    cfg.threads = 8;
    SolveResult res = solve_text(path_left_program(edges), "path(X,Y)", cfg);
    CHECK(res.threads_agree);
    CHECK(answers_to_pairs(res.answers) == oracle);
  }
}

TEST_CASE("bound queries evaluate only the reachable subgoals") {
  std::vector<std::pair<int64_t, int64_t>> edges = {{1, 2}, {2, 3}, {5, 6}};
  SolveResult res = solve_text(path_right_program(edges), "path(1,Y)", {});
  std::set<int64_t> got;
  for (const auto& a : res.answers) {
    REQUIRE(a.size() == 1);
    got.insert(tok::int_value(a[0]));
  }
  CHECK(got == std::set<int64_t>{2, 3});
}

TEST_CASE("facts of tabled predicates seed their tables") {
  std::string prog =
      ":- table p/1.\n"
      "p(1).\n"
      "p(2).\n"
      "p(X) :- q(X).\n"
      "q(7).\n";
  SolveResult res = solve_text(prog, "p(X)", {});
  CHECK(res.answers.size() == 3);
}

TEST_CASE("an arity-0 tabled predicate holds a single empty answer") {
  std::string prog = ":- table go/0.\ngo :- edge(X,Y).\nedge(1,2).\n";
  SolveResult res = solve_text(prog, "go", {});
  CHECK(res.answers.size() == 1);
  CHECK(res.stats.calls == 1);
}

TEST_CASE("a tabled predicate without matching clauses completes empty") {
  std::string prog = ":- table p/2.\np(1,2).\n";
  SolveResult res = solve_text(prog, "p(3,X)", {});
  CHECK(res.answers.empty());
}

TEST_CASE("program validation rejects unsound inputs") {
  CHECK_THROWS_AS(compile_program_text("p(X) :- q(X).\n"), structural_error);
  CHECK_THROWS_AS(compile_program_text(":- table p/1.\np(X) :- q(X).\n"),
                  structural_error);
  Engine e(compile_program_text(":- table p/1.\np(1).\n"), {});
  CHECK_THROWS_AS(e.solve(parse_term_text("r(X)")), contract_error);
}

TEST_CASE("FS with batched scheduling is a configuration error") {
  EvalConfig cfg;
  cfg.design = Design::FS;
  cfg.sched = Scheduling::Batched;
  CHECK_THROWS_AS(Engine(compile_program_text(":- table p/1.\np(1).\n"), cfg),
                  config_error);
}

TEST_CASE("randomized graph programs match the closure oracle everywhere") {
  std::mt19937_64 rng(1234);
  for (int round = 0; round < 6; ++round) {
    int n = 3 + static_cast<int>(rng() % 12);
    std::vector<std::pair<int64_t, int64_t>> edges;
    std::set<std::pair<int64_t, int64_t>> used;
    int m = n + static_cast<int>(rng() % (2 * n));
    while (static_cast<int>(edges.size()) < m) {
      auto e = std::make_pair<int64_t, int64_t>(1 + rng() % n, 1 + rng() % n);
      if (used.insert(e).second) edges.push_back(e);
    }
    auto oracle = closure_oracle(edges);
    bool right = rng() & 1;
    std::string prog = right ? path_right_program(edges) : path_left_program(edges);
    for (Design d : {Design::NS, Design::SS, Design::FS, Design::PAS, Design::PAC}) {
      for (Scheduling s : {Scheduling::Local, Scheduling::Batched}) {
        if (d == Design::FS && s == Scheduling::Batched) continue;
        for (unsigned nt : {1u, 2u, 4u}) {
          CAPTURE(to_string(d));
          CAPTURE(to_string(s));
          CAPTURE(nt);
          EvalConfig cfg;
          cfg.design = d;
          cfg.sched = s;
          cfg.threads = nt;
          SolveResult res = solve_text(prog, "path(X,Y)", cfg);
          CHECK(res.threads_agree);
          CHECK(answers_to_pairs(res.answers) == oracle);
        }
      }
    }
  }
}

TEST_CASE("allocator returns to zero after abolish on engine runs") {
  for (Design d : {Design::NS, Design::SS, Design::FS, Design::PAS, Design::PAC}) {
    EvalConfig cfg;
    cfg.design = d;
    cfg.threads = 4;
    Engine e(compile_program_text(path_left_program(kCycle3)), cfg);
    e.solve(parse_term_text("path(X,Y)"));
    e.abolish();
    CHECK(e.allocator().heap_stats().total_live_blocks() == 0);
  }
}

TEST_CASE("consume_answers yields completed instances") {
  Engine e(compile_program_text(path_left_program(kCycle3)), {});
  e.solve(parse_term_text("path(X,Y)"));
  auto ans = e.consume_answers(parse_term_text("path(X,Y)"));
  CHECK(ans.size() == 9);
  for (const Term& t : ans) {
    CHECK(t.is_compound());
    CHECK(t.ground());
  }
}
