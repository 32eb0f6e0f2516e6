#pragma once

#include <map>
#include <memory>
#include <optional>
#include <unordered_map>
#include <vector>

#include "tabkit/parser.hpp"
#include "tabkit/tablespace.hpp"

namespace tabkit {

// Compiled program: extensional relations (fact-defined predicates) and
// tabled predicates with their clauses.
struct Program {
  struct Edb {
    uint32_t arity = 0;
    std::vector<std::vector<Term>> rows;
    // per-position index over atom/int argument tokens
    std::vector<std::unordered_map<Token, std::vector<uint32_t>>> index;
  };
  struct Tabled {
    std::vector<Clause> clauses;
    std::vector<Mode> modes;
  };
  std::map<uint64_t, Edb> edb;
  std::map<uint64_t, Tabled> tabled;
};

// Validates and indexes a parsed program. Every rule head must be tabled;
// body literals must be tabled or fact-defined.
Program compile_program(const ParsedProgram& parsed);
Program compile_program_text(const std::string& text);

struct EvalConfig {
  Design design = Design::NS;
  Scheduling sched = Scheduling::Local;
  unsigned threads = 1;  // NT; worst-case mode runs the query on every worker
  uint64_t seed = 0;
  TrieConfig trie;
  AllocConfig alloc;
  bool verify_thread_agreement = true;
  bool collect_record_log = false;  // per-thread New/Repeated trace
};

struct EvalStats {
  uint64_t calls = 0;     // distinct tabled subgoal calls
  uint64_t unique = 0;    // answers that created a trie path
  uint64_t repeated = 0;  // redundant answer derivations
  uint64_t mode_kept = 0;
  uint64_t mode_replaced = 0;
  uint64_t mode_discarded = 0;
};

struct RecordEvent {
  WorkerId worker;
  const void* answer;  // answer-trie leaf identity
  bool new_for_thread;
};

struct SolveResult {
  std::vector<std::vector<Token>> answers;  // substitution token sequences
  EvalStats stats;
  bool threads_agree = true;
  std::vector<RecordEvent> record_log;
  std::vector<uint64_t> per_worker_unique;
  std::vector<uint64_t> per_worker_repeated;
};

// Round-based tabled evaluation over the shared table space: generators
// re-derive to fixpoint per strongly connected component of the dynamic
// call graph, with local or batched answer scheduling.
class Engine {
 public:
  Engine(Program prog, EvalConfig cfg);
  ~Engine();

  // Runs the query on `threads` workers (worst-case mode) to completion.
  SolveResult solve(const Term& query);

  TableSpace& tables() { return *ts_; }
  PageAllocator& allocator() { return *alloc_; }
  const Program& program() const { return prog_; }
  const EvalConfig& config() const { return cfg_; }

  // Consumes the completed answers of a subgoal as full goal instances.
  std::vector<Term> consume_answers(const Term& goal);

  void abolish();

 private:
  Program prog_;
  EvalConfig cfg_;
  std::unique_ptr<PageAllocator> alloc_;
  std::unique_ptr<TableSpace> ts_;
  bool solved_ = false;
};

}  // namespace tabkit
