#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tabkit/engine.hpp"
#include "tabkit/memmodel.hpp"

namespace tabkit {
namespace bench {

enum class Shape : uint8_t { BTree, Cycle, Grid, Pyramid };
bool shape_from_string(const std::string& s, Shape& out);
const char* to_string(Shape s);

struct EdgeConfig {
  Shape shape = Shape::Cycle;
  unsigned depth = 1;
};

// Deterministic edge sets. btree(d): complete binary tree of 2^d-1 nodes,
// parent->child; cycle(d): d nodes in a ring; grid(d): d x d lattice with
// bidirectional orthogonal edges; pyramid(d): triangular lattice, downward
// edges (experimental topology, excluded from count-exact checks).
std::vector<std::pair<int64_t, int64_t>> gen_edges(const EdgeConfig& cfg);
uint64_t node_count(const EdgeConfig& cfg);

enum class Direction : uint8_t { Left, Right };

Program make_path_program(Direction dir,
                          const std::vector<std::pair<int64_t, int64_t>>& edges);

struct RunStats {
  Design design;
  Scheduling sched;
  unsigned threads = 1;
  double wall_ms = 0.0;  // average over repeats
  uint64_t query_answers = 0;
  uint64_t calls = 0;
  uint64_t unique = 0;
  uint64_t repeated = 0;
  TrieStats subgoal_tries;
  TrieStats answer_tries;
  bool threads_agree = true;
  bool allocator_clean = true;  // all live blocks freed after abolish
  uint64_t live_blocks_after_abolish = 0;
  bool reconciled = false;
  memmodel::MemReport reconcile;
  uint64_t mode_kept = 0, mode_replaced = 0, mode_discarded = 0;
};

struct PathOptions {
  unsigned repeat = 1;
  bool with_census = false;  // reconcile against the memory model
  bool verify_agreement = true;
};

RunStats run_path(Direction dir, const EdgeConfig& cfg, const EvalConfig& eval,
                  const PathOptions& opt = {});

// Parsed program file + query entry point (CLI `run`).
RunStats run_program(const std::string& text, const std::string& query,
                     const EvalConfig& eval, const PathOptions& opt,
                     std::vector<std::string>* answers_out);

// ---------------------------------------------------------------------------
// Worst-case overhead methodology

struct OverheadAgg {
  double min = 0, avg = 0, max = 0, stddev = 0;
  size_t n = 0;
};
// O = D_BT / NS_B1 per benchmark, aggregated per configuration.
OverheadAgg overhead_report(const std::vector<double>& base_times,
                            const std::vector<double>& run_times);

// ---------------------------------------------------------------------------
// Dynamic programming schedulers

enum class DpProblem : uint8_t { Knapsack, Lcs };
enum class DpApproach : uint8_t { TD1, TD2, BU };
bool approach_from_string(const std::string& s, DpApproach& out);
const char* to_string(DpApproach a);

struct DpDataset {
  DpProblem problem = DpProblem::Knapsack;
  unsigned n = 0;         // items / sequence length
  unsigned capacity = 0;  // knapsack only
  double fraction = 0.5;  // value range as a fraction of n
  uint64_t seed = 0;
  std::vector<int64_t> weights, profits;  // knapsack
  std::vector<int64_t> sym_a, sym_b;      // lcs
};

DpDataset gen_knapsack(unsigned n, unsigned capacity, double fraction, uint64_t seed);
DpDataset gen_lcs(unsigned n, double fraction, uint64_t seed);

struct DpResult {
  int64_t value = 0;
  RunStats stats;
  bool threads_agree = true;
};

// Multithreaded top-down (randomized branch order; TD2 adds the random
// forward displacement) and bottom-up (chunked columns, no row barrier)
// user-level schedulers over the tabling engine.
DpResult run_knapsack(DpApproach a, const DpDataset& d, const EvalConfig& eval);
DpResult run_lcs(DpApproach a, const DpDataset& d, const EvalConfig& eval);

}  // namespace bench
}  // namespace tabkit
