#include "tabkit/bench.hpp"

#include <chrono>
#include <cmath>
#include <random>
#include <thread>

namespace tabkit {
namespace bench {

bool shape_from_string(const std::string& s, Shape& out) {
  if (s == "btree") out = Shape::BTree;
  else if (s == "cycle") out = Shape::Cycle;
  else if (s == "grid") out = Shape::Grid;
  else if (s == "pyramid") out = Shape::Pyramid;
  else return false;
  return true;
}

const char* to_string(Shape s) {
  switch (s) {
    case Shape::BTree: return "btree";
    case Shape::Cycle: return "cycle";
    case Shape::Grid: return "grid";
    case Shape::Pyramid: return "pyramid";
  }
  return "?";
}

bool approach_from_string(const std::string& s, DpApproach& out) {
  if (s == "td1") out = DpApproach::TD1;
  else if (s == "td2") out = DpApproach::TD2;
  else if (s == "bu") out = DpApproach::BU;
  else return false;
  return true;
}

const char* to_string(DpApproach a) {
  switch (a) {
    case DpApproach::TD1: return "td1";
    case DpApproach::TD2: return "td2";
    case DpApproach::BU: return "bu";
  }
  return "?";
}

uint64_t node_count(const EdgeConfig& cfg) {
  switch (cfg.shape) {
    case Shape::BTree: return (uint64_t{1} << cfg.depth) - 1;
    case Shape::Cycle: return cfg.depth;
    case Shape::Grid: return uint64_t{cfg.depth} * cfg.depth;
    case Shape::Pyramid: return uint64_t{cfg.depth} * (cfg.depth + 1) / 2;
  }
  return 0;
}

std::vector<std::pair<int64_t, int64_t>> gen_edges(const EdgeConfig& cfg) {
  if (cfg.depth < 1) throw config_error("edge configuration depth must be >= 1");
  std::vector<std::pair<int64_t, int64_t>> e;
  switch (cfg.shape) {
    case Shape::BTree: {
      int64_t n = (int64_t{1} << cfg.depth) - 1;
      for (int64_t i = 1; i <= n; ++i) {
        if (2 * i <= n) e.emplace_back(i, 2 * i);
        if (2 * i + 1 <= n) e.emplace_back(i, 2 * i + 1);
      }
      break;
    }
    case Shape::Cycle: {
      int64_t d = cfg.depth;
      for (int64_t i = 1; i < d; ++i) e.emplace_back(i, i + 1);
      e.emplace_back(d, 1);
      break;
    }
    case Shape::Grid: {
      int64_t d = cfg.depth;
      auto id = [d](int64_t r, int64_t c) { return (r - 1) * d + c; };
      for (int64_t r = 1; r <= d; ++r)
        for (int64_t c = 1; c <= d; ++c) {
          if (c < d) {
            e.emplace_back(id(r, c), id(r, c + 1));
            e.emplace_back(id(r, c + 1), id(r, c));
          }
          if (r < d) {
            e.emplace_back(id(r, c), id(r + 1, c));
            e.emplace_back(id(r + 1, c), id(r, c));
          }
        }
      break;
    }
    case Shape::Pyramid: {
      // candidate triangular lattice: row r holds r nodes, downward edges
      int64_t d = cfg.depth;
      auto id = [](int64_t r, int64_t k) { return r * (r - 1) / 2 + k; };
      for (int64_t r = 1; r < d; ++r)
        for (int64_t k = 1; k <= r; ++k) {
          e.emplace_back(id(r, k), id(r + 1, k));
          e.emplace_back(id(r, k), id(r + 1, k + 1));
        }
      break;
    }
  }
  return e;
}

Program make_path_program(Direction dir,
                          const std::vector<std::pair<int64_t, int64_t>>& edges) {
  Program p;
  uint32_t path_sym = SymbolTable::intern("path");
  uint32_t edge_sym = SymbolTable::intern("edge");
  uint64_t path_pred = predicate_id(path_sym, 2);
  uint64_t edge_pred = predicate_id(edge_sym, 2);

  auto& e = p.edb[edge_pred];
  e.arity = 2;
  e.rows.reserve(edges.size());
  for (auto& [a, b] : edges) e.rows.push_back({Term::integer(a), Term::integer(b)});
  e.index.resize(2);
  for (uint32_t i = 0; i < e.rows.size(); ++i)
    for (uint32_t a = 0; a < 2; ++a)
      e.index[a][tok::integer(e.rows[i][a].int_value())].push_back(i);

  auto& tp = p.tabled[path_pred];
  Term X = Term::var(0), Z = Term::var(1), Y = Term::var(2);
  Clause rec;
  rec.head = Term::compound_id(path_sym, {X, Z});
  if (dir == Direction::Left) {
    rec.body = {Term::compound_id(path_sym, {X, Y}),
                Term::compound_id(edge_sym, {Y, Z})};
  } else {
    rec.body = {Term::compound_id(edge_sym, {X, Y}),
                Term::compound_id(path_sym, {Y, Z})};
  }
  rec.nvars = 3;
  Clause base;
  base.head = Term::compound_id(path_sym, {X, Z});
  base.body = {Term::compound_id(edge_sym, {X, Z})};
  base.nvars = 2;
  tp.clauses = {rec, base};
  return p;
}

namespace {

struct RunCapture {
  RunStats st;
};

void finish_run(Engine& engine, const SolveResult& res, const EvalConfig& eval,
                const PathOptions& opt, RunStats& st) {
  st.design = eval.design;
  st.sched = eval.sched;
  st.threads = eval.threads;
  st.query_answers = res.answers.size();
  st.calls = res.stats.calls;
  st.unique = res.stats.unique;
  st.repeated = res.stats.repeated;
  st.mode_kept = res.stats.mode_kept;
  st.mode_replaced = res.stats.mode_replaced;
  st.mode_discarded = res.stats.mode_discarded;
  st.threads_agree = res.threads_agree;
  auto agg = engine.tables().aggregate_stats();
  st.subgoal_tries = agg.subgoal;
  st.answer_tries = agg.answer;
  if (opt.with_census) {
    Census c = engine.tables().census();
    st.reconcile = memmodel::reconcile(eval.design, c, eval.threads);
    st.reconciled = true;
  }
  engine.abolish();
  HeapStats hs = engine.allocator().heap_stats();
  st.live_blocks_after_abolish = hs.total_live_blocks();
  st.allocator_clean = st.live_blocks_after_abolish == 0;
}

}  // namespace

RunStats run_path(Direction dir, const EdgeConfig& cfg, const EvalConfig& eval,
                  const PathOptions& opt) {
  auto edges = gen_edges(cfg);
  Term query = Term::compound("path", {Term::var(0), Term::var(1)});
  RunStats st;
  double total_ms = 0;
  unsigned repeat = std::max(1u, opt.repeat);
  for (unsigned rep = 0; rep < repeat; ++rep) {
    Program prog = make_path_program(dir, edges);
    EvalConfig ec = eval;
    ec.verify_thread_agreement = opt.verify_agreement;
    Engine engine(std::move(prog), ec);
    auto t0 = std::chrono::steady_clock::now();
    SolveResult res = engine.solve(query);
    auto t1 = std::chrono::steady_clock::now();
    total_ms += std::chrono::duration<double, std::milli>(t1 - t0).count();
    if (rep + 1 == repeat) finish_run(engine, res, ec, opt, st);
  }
  st.wall_ms = total_ms / repeat;
  return st;
}

RunStats run_program(const std::string& text, const std::string& query,
                     const EvalConfig& eval, const PathOptions& opt,
                     std::vector<std::string>* answers_out) {
  Program prog = compile_program_text(text);
  Term q = parse_term_text(query);
  EvalConfig ec = eval;
  ec.verify_thread_agreement = opt.verify_agreement;
  Engine engine(std::move(prog), ec);
  auto t0 = std::chrono::steady_clock::now();
  SolveResult res = engine.solve(q);
  auto t1 = std::chrono::steady_clock::now();
  if (answers_out) {
    SubgoalKey key = canonicalize(q);
    for (const auto& toks : res.answers)
      answers_out->push_back(apply_answer(key, toks).to_string());
  }
  RunStats st;
  finish_run(engine, res, ec, opt, st);
  st.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  return st;
}

OverheadAgg overhead_report(const std::vector<double>& base_times,
                            const std::vector<double>& run_times) {
  if (base_times.size() != run_times.size() || base_times.empty())
    throw contract_error("overhead report needs one base run per benchmark");
  OverheadAgg agg;
  std::vector<double> ratios;
  ratios.reserve(base_times.size());
  for (size_t i = 0; i < base_times.size(); ++i) {
    if (base_times[i] <= 0) throw contract_error("non-positive base time");
    ratios.push_back(run_times[i] / base_times[i]);
  }
  agg.n = ratios.size();
  agg.min = agg.max = ratios[0];
  double sum = 0;
  for (double r : ratios) {
    agg.min = std::min(agg.min, r);
    agg.max = std::max(agg.max, r);
    sum += r;
  }
  agg.avg = sum / ratios.size();
  double var = 0;
  for (double r : ratios) var += (r - agg.avg) * (r - agg.avg);
  agg.stddev = std::sqrt(var / ratios.size());
  return agg;
}

// ---------------------------------------------------------------------------
// Dynamic programming

DpDataset gen_knapsack(unsigned n, unsigned capacity, double fraction,
                       uint64_t seed) {
  DpDataset d;
  d.problem = DpProblem::Knapsack;
  d.n = n;
  d.capacity = capacity;
  d.fraction = fraction;
  d.seed = seed;
  std::mt19937_64 rng(seed);
  int64_t hi = std::max<int64_t>(1, static_cast<int64_t>(fraction * n));
  std::uniform_int_distribution<int64_t> dist(1, hi);
  d.weights.resize(n + 1);
  d.profits.resize(n + 1);
  for (unsigned i = 1; i <= n; ++i) {
    d.weights[i] = dist(rng);
    d.profits[i] = dist(rng);
  }
  return d;
}

DpDataset gen_lcs(unsigned n, double fraction, uint64_t seed) {
  DpDataset d;
  d.problem = DpProblem::Lcs;
  d.n = n;
  d.fraction = fraction;
  d.seed = seed;
  std::mt19937_64 rng(seed);
  int64_t hi = std::max<int64_t>(1, static_cast<int64_t>(fraction * n));
  std::uniform_int_distribution<int64_t> dist(1, hi);
  d.sym_a.resize(n + 1);
  d.sym_b.resize(n + 1);
  for (unsigned i = 1; i <= n; ++i) {
    d.sym_a[i] = dist(rng);
    d.sym_b[i] = dist(rng);
  }
  return d;
}

namespace {

constexpr int64_t kNoValue = INT64_MIN;

// One table-space run shared by the DP worker threads.
struct DpSpace {
  PageAllocator alloc;
  TableSpace ts;
  TableEntry* te;

  DpSpace(const EvalConfig& eval, bool moded)
      : alloc(make_alloc(eval)), ts(eval.design, eval.trie, alloc), te(nullptr) {
    uint64_t pred = predicate_id(SymbolTable::intern(moded ? "dp3" : "dp3p"), 3);
    if (moded) {
      Mode modes[3] = {Mode::Index, Mode::Index, Mode::Max};
      te = ts.register_predicate(pred, modes);
    } else {
      te = ts.register_predicate(pred);
    }
  }
  static AllocConfig make_alloc(const EvalConfig& eval) {
    AllocConfig a = eval.alloc;
    a.max_threads = std::max(a.max_threads, eval.threads + 1);
    return a;
  }
};

struct DpWorker {
  DpSpace& sp;
  const DpDataset& d;
  DpApproach approach;
  EvalConfig eval;
  WorkerId w;
  std::mt19937_64 rng;
  uint32_t max_random;
  Token keybuf[3];
  Token valbuf[1];
  uint32_t endbuf[1] = {1};

  DpWorker(DpSpace& s, const DpDataset& ds, DpApproach a, const EvalConfig& ev,
           WorkerId wid)
      : sp(s), d(ds), approach(a), eval(ev), w(wid), rng(ev.seed ^ (wid + 1)) {
    max_random = std::max(1u, d.n / 10);  // 10% of the problem size
  }

  SubgoalHandle lookup(int64_t i, int64_t c) {
    SubgoalKey key;
    key.pred = sp.te->pred;
    key.tokens = {tok::integer(i), tok::integer(c), tok::var(0)};
    key.nvars = 1;
    return sp.ts.subgoal_lookup_insert(sp.te, key, w);
  }

  int64_t table_value(const SubgoalHandle& h) {
    auto s = sp.ts.answer_stream(h);
    const TrieNode* root = s.trie ? s.trie->root() : nullptr;
    if (!root) throw error("completed dp table has no answer");
    for (const TrieNode* n = root->leaf_next(); n; n = n->leaf_next()) {
      if (n->is_invalid()) continue;
      return tok::int_value(n->token);
    }
    throw error("completed dp table has no valid answer");
  }

  void put_candidate(SubgoalHandle& h, int64_t v) {
    valbuf[0] = tok::integer(v);
    if (sp.te->moded) {
      sp.ts.mode_directed_insert(h, std::span<const Token>(valbuf, 1),
                                 std::span<const uint32_t>(endbuf, 1), w);
    } else {
      sp.ts.record_answer(h, std::span<const Token>(valbuf, 1), w);
    }
  }

  // ---- knapsack ----

  int64_t ks_td(int64_t i, int64_t c) {
    SubgoalHandle h = lookup(i, c);
    if (sp.ts.is_complete(h)) return table_value(h);
    if (approach == DpApproach::TD2 && i > 1) {
      // move the computation forward by a random displacement first
      int64_t jump = 1 + static_cast<int64_t>(rng() % max_random);
      if (i - jump >= 0) ks_td(i - jump, c);
    }
    if (i == 0) {
      put_candidate(h, 0);
    } else {
      bool include_first = rng() & 1;  // random branch order only
      for (int b = 0; b < 2; ++b) {
        bool inc = (b == 0) == include_first;
        if (inc) {
          if (d.weights[i] <= c) put_candidate(h, ks_td(i - 1, c - d.weights[i]) + d.profits[i]);
        } else {
          put_candidate(h, ks_td(i - 1, c));
        }
      }
    }
    sp.ts.complete_subgoal(h, w);
    return table_value(h);
  }

  int64_t ks_cell(int64_t i, int64_t c) {
    SubgoalHandle h = lookup(i, c);
    if (sp.ts.is_complete(h)) return table_value(h);
    // missing sub-result: compute it here instead of waiting
    int64_t v;
    if (i == 0) {
      v = 0;
    } else {
      v = ks_cell(i - 1, c);
      if (d.weights[i] <= c) v = std::max(v, ks_cell(i - 1, c - d.weights[i]) + d.profits[i]);
    }
    put_candidate(h, v);
    sp.ts.complete_subgoal(h, w);
    return table_value(h);
  }

  int64_t run_knapsack() {
    if (approach == DpApproach::BU) {
      int64_t C = d.capacity;
      uint64_t chunk = (C + 1 + eval.threads - 1) / eval.threads;
      int64_t lo = static_cast<int64_t>(w) * chunk;
      int64_t hi = std::min<int64_t>(C, lo + chunk - 1);
      for (int64_t i = 1; i <= d.n; ++i)
        for (int64_t c = lo; c <= hi; ++c) ks_cell(i, c);
      return ks_cell(d.n, C);
    }
    return ks_td(d.n, d.capacity);
  }

  // ---- lcs ----

  int64_t lcs_td(int64_t i, int64_t j) {
    SubgoalHandle h = lookup(i, j);
    if (sp.ts.is_complete(h)) return table_value(h);
    if (approach == DpApproach::TD2 && i > 1) {
      int64_t jump = 1 + static_cast<int64_t>(rng() % max_random);
      if (i - jump >= 0) lcs_td(i - jump, j);
    }
    if (i == 0 || j == 0) {
      put_candidate(h, 0);
    } else if (d.sym_a[i] == d.sym_b[j]) {
      put_candidate(h, lcs_td(i - 1, j - 1) + 1);
    } else {
      bool first_branch = rng() & 1;
      for (int b = 0; b < 2; ++b) {
        if ((b == 0) == first_branch)
          put_candidate(h, lcs_td(i - 1, j));
        else
          put_candidate(h, lcs_td(i, j - 1));
      }
    }
    sp.ts.complete_subgoal(h, w);
    return table_value(h);
  }

  int64_t lcs_cell(int64_t i, int64_t j) {
    SubgoalHandle h = lookup(i, j);
    if (sp.ts.is_complete(h)) return table_value(h);
    int64_t v;
    if (i == 0 || j == 0)
      v = 0;
    else if (d.sym_a[i] == d.sym_b[j])
      v = lcs_cell(i - 1, j - 1) + 1;
    else
      v = std::max(lcs_cell(i - 1, j), lcs_cell(i, j - 1));
    put_candidate(h, v);
    sp.ts.complete_subgoal(h, w);
    return table_value(h);
  }

  int64_t run_lcs() {
    if (approach == DpApproach::BU) {
      uint64_t chunk = (d.n + eval.threads - 1) / eval.threads;
      int64_t lo = 1 + static_cast<int64_t>(w) * chunk;
      int64_t hi = std::min<int64_t>(d.n, lo + chunk - 1);
      for (int64_t i = 1; i <= d.n; ++i)
        for (int64_t j = lo; j <= hi; ++j) lcs_cell(i, j);
      return lcs_cell(d.n, d.n);
    }
    return lcs_td(d.n, d.n);
  }
};

DpResult run_dp(DpProblem prob, DpApproach a, const DpDataset& d,
                const EvalConfig& eval) {
  if (a != DpApproach::BU &&
      (eval.design == Design::FS || eval.design == Design::PAC))
    throw config_error(
        "top-down approaches need mode-directed tabling (NS/SS/PAS only)");
  bool moded = a != DpApproach::BU;  // bottom-up uses standard tabling
  DpSpace sp(eval, moded);
  unsigned nt = eval.threads;
  std::vector<int64_t> values(nt, kNoValue);
  std::vector<std::exception_ptr> errors(nt);

  auto t0 = std::chrono::steady_clock::now();
  auto body = [&](unsigned wid) {
    try {
      DpWorker worker(sp, d, a, eval, wid);
      values[wid] = prob == DpProblem::Knapsack ? worker.run_knapsack()
                                                : worker.run_lcs();
    } catch (...) {
      errors[wid] = std::current_exception();
    }
  };
  if (nt == 1) {
    body(0);
  } else {
    std::vector<std::thread> threads;
    for (unsigned wid = 0; wid < nt; ++wid) threads.emplace_back(body, wid);
    for (auto& t : threads) t.join();
  }
  auto t1 = std::chrono::steady_clock::now();
  for (unsigned wid = 0; wid < nt; ++wid)
    sp.alloc.release_thread(TableSpace::heap_of(wid));
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  DpResult res;
  res.value = values[0];
  for (int64_t v : values) res.threads_agree = res.threads_agree && v == values[0];
  res.stats.design = eval.design;
  res.stats.sched = eval.sched;
  res.stats.threads = nt;
  res.stats.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  res.stats.calls = sp.ts.subgoal_count(sp.te);
  auto agg = sp.ts.aggregate_stats();
  res.stats.subgoal_tries = agg.subgoal;
  res.stats.answer_tries = agg.answer;
  sp.ts.abolish_tables();
  HeapStats hs = sp.alloc.heap_stats();
  res.stats.live_blocks_after_abolish = hs.total_live_blocks();
  res.stats.allocator_clean = res.stats.live_blocks_after_abolish == 0;
  return res;
}

}  // namespace

DpResult run_knapsack(DpApproach a, const DpDataset& d, const EvalConfig& eval) {
  if (d.problem != DpProblem::Knapsack) throw contract_error("dataset mismatch");
  return run_dp(DpProblem::Knapsack, a, d, eval);
}

DpResult run_lcs(DpApproach a, const DpDataset& d, const EvalConfig& eval) {
  if (d.problem != DpProblem::Lcs) throw contract_error("dataset mismatch");
  return run_dp(DpProblem::Lcs, a, d, eval);
}

}  // namespace bench
}  // namespace tabkit
