#include "tabkit.h"

#include <cstring>
#include <random>
#include <sstream>

#include "json.hpp"
#include "tabkit/bench.hpp"
#include "tabkit/engine.hpp"
#include "tabkit/memmodel.hpp"

using nlohmann::json;
using namespace tabkit;

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

tk_status classify(const std::exception& e) {
  g_last_error = e.what();
  if (dynamic_cast<const parse_error*>(&e)) return TK_ERR_PARSE;
  if (dynamic_cast<const structural_error*>(&e)) return TK_ERR_STRUCTURAL;
  if (dynamic_cast<const contract_error*>(&e)) return TK_ERR_CONTRACT;
  if (dynamic_cast<const config_error*>(&e)) return TK_ERR_CONFIG;
  if (dynamic_cast<const resource_error*>(&e)) return TK_ERR_RESOURCE;
  if (dynamic_cast<const std::bad_alloc*>(&e)) return TK_ERR_RESOURCE;
  return TK_ERR_INTERNAL;
}

template <typename Fn>
tk_status guarded(Fn&& fn) {
  try {
    fn();
    return TK_OK;
  } catch (const std::exception& e) {
    return classify(e);
  } catch (...) {
    g_last_error = "unknown error";
    return TK_ERR_INTERNAL;
  }
}

EvalConfig config_from_json(const json& j) {
  EvalConfig cfg;
  if (j.contains("design")) {
    if (!design_from_string(j["design"].get<std::string>(), cfg.design))
      throw config_error("unknown design");
  }
  if (j.contains("sched")) {
    if (!scheduling_from_string(j["sched"].get<std::string>(), cfg.sched))
      throw config_error("unknown scheduling");
  }
  if (j.contains("threads")) cfg.threads = j["threads"].get<unsigned>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
  if (j.contains("scheme")) {
    if (!scheme_from_string(j["scheme"].get<std::string>(), cfg.trie.scheme))
      throw config_error("unknown hash scheme");
  }
  if (j.contains("threshold"))
    cfg.trie.saturation_threshold = j["threshold"].get<unsigned>();
  if (j.contains("initial_buckets"))
    cfg.trie.initial_buckets = j["initial_buckets"].get<unsigned>();
  if (j.contains("hash_bits")) cfg.trie.hash_bits = j["hash_bits"].get<unsigned>();
  if (j.contains("page_bytes")) cfg.alloc.page_payload = j["page_bytes"].get<size_t>();
  if (j.contains("debug_alloc")) cfg.alloc.debug_accounting = j["debug_alloc"].get<bool>();
  return cfg;
}

json trie_stats_json(const TrieStats& s) {
  return json{{"nodes", s.nodes},
              {"leaves", s.leaves},
              {"depth_min", s.min_depth},
              {"depth_avg", s.avg_depth},
              {"depth_max", s.max_depth}};
}

json config_json_of(const bench::RunStats& st) {
  return json{{"design", to_string(st.design)},
              {"sched", to_string(st.sched)},
              {"threads", st.threads}};
}

json run_stats_json(const bench::RunStats& st) {
  json j{{"wall_ms", st.wall_ms},
         {"calls", st.calls},
         {"unique", st.unique},
         {"repeated", st.repeated},
         {"query_answers", st.query_answers},
         {"subgoal_trie", trie_stats_json(st.subgoal_tries)},
         {"answer_trie", trie_stats_json(st.answer_tries)},
         {"threads_agree", st.threads_agree},
         {"allocator_clean", st.allocator_clean},
         {"live_blocks_after_abolish", st.live_blocks_after_abolish}};
  if (st.mode_kept || st.mode_replaced || st.mode_discarded)
    j["modes"] = json{{"kept", st.mode_kept},
                      {"replaced", st.mode_replaced},
                      {"discarded", st.mode_discarded}};
  if (st.reconciled)
    j["reconcile"] = json{{"predicted", st.reconcile.predicted},
                          {"measured", st.reconcile.measured},
                          {"delta", st.reconcile.delta},
                          {"uniform", st.reconcile.uniform}};
  return j;
}

memmodel::MemParams params_from_json(const json& j) {
  memmodel::MemParams p;
  p.te = j.value("te", uint64_t{0});
  p.ba = j.value("ba", uint64_t{0});
  p.sf = j.value("sf", uint64_t{0});
  p.se_fs = j.value("se_fs", uint64_t{0});
  p.sf_fs = j.value("sf_fs", uint64_t{0});
  p.bp = j.value("bp", uint64_t{0});
  p.nt = j.value("nt", uint64_t{1});
  if (!j.contains("preds")) throw config_error("memmodel params need preds");
  for (const auto& pj : j["preds"]) {
    memmodel::PredParams pp;
    pp.st = pj.value("st", uint64_t{0});
    for (const auto& v : pj.at("at")) pp.at.push_back(v.get<uint64_t>());
    if (pj.contains("nt_private"))
      for (const auto& v : pj["nt_private"]) pp.nt_private.push_back(v.get<uint64_t>());
    p.preds.push_back(std::move(pp));
  }
  return p;
}

json eval_params(const memmodel::MemParams& p) {
  using memmodel::ModelDesign;
  json mu;
  for (ModelDesign d : {ModelDesign::CS, ModelDesign::NS, ModelDesign::SS,
                        ModelDesign::FS, ModelDesign::PAS, ModelDesign::PAC})
    mu[memmodel::to_string(d)] = memmodel::predict(d, p);
  auto t1 = memmodel::check_theorem1(p);
  auto t2 = memmodel::check_theorem2(p);
  return json{{"mu", mu},
              {"theorem1",
               {{"holds_lhs", t1.holds_lhs},
                {"condition", t1.condition},
                {"holds_iff", t1.holds_iff}}},
              {"theorem2", {{"premise_ok", t2.premise_ok}, {"holds", t2.holds}}}};
}

}  // namespace

extern "C" {

const char* tk_version(void) { return "tabkit 0.1.0"; }

const char* tk_status_name(tk_status st) {
  switch (st) {
    case TK_OK: return "ok";
    case TK_ERR_INVALID: return "invalid";
    case TK_ERR_PARSE: return "parse";
    case TK_ERR_STRUCTURAL: return "structural";
    case TK_ERR_CONTRACT: return "contract";
    case TK_ERR_CONFIG: return "config";
    case TK_ERR_RESOURCE: return "resource";
    default: return "internal";
  }
}

const char* tk_last_error(void) { return g_last_error.c_str(); }

void tk_string_free(char* s) { std::free(s); }

tk_status tk_run_program(const char* program_text, const char* query,
                         const char* config_json, char** result_json) {
  if (!program_text || !query || !result_json) {
    g_last_error = "null argument";
    return TK_ERR_INVALID;
  }
  return guarded([&] {
    json jc = config_json && *config_json ? json::parse(config_json) : json::object();
    EvalConfig cfg = config_from_json(jc);
    bench::PathOptions opt;
    opt.with_census = jc.value("census", false);
    std::vector<std::string> answers;
    bench::RunStats st = bench::run_program(program_text, query, cfg, opt,
                                            jc.value("answers", false) ? &answers
                                                                       : nullptr);
    json out{{"config", config_json_of(st)}, {"stats", run_stats_json(st)}};
    if (jc.value("answers", false)) out["answers"] = answers;
    *result_json = dup_string(out.dump(2));
  });
}

tk_status tk_run_path_bench(const char* spec_json, char** result_json) {
  if (!spec_json || !result_json) {
    g_last_error = "null argument";
    return TK_ERR_INVALID;
  }
  return guarded([&] {
    json js = json::parse(spec_json);
    EvalConfig cfg = config_from_json(js);
    bench::PathOptions opt;
    opt.repeat = js.value("repeat", 1u);
    opt.with_census = js.value("census", false);
    opt.verify_agreement = js.value("verify", true);
    bool overhead = js.value("overhead", false);

    json runs = json::array();
    std::vector<double> base_times, run_times;
    for (const auto& bj : js.at("benches")) {
      bench::Direction dir = bj.at("direction").get<std::string>() == "right"
                                 ? bench::Direction::Right
                                 : bench::Direction::Left;
      bench::EdgeConfig ec;
      if (!bench::shape_from_string(bj.at("shape").get<std::string>(), ec.shape))
        throw config_error("unknown shape");
      ec.depth = bj.at("depth").get<unsigned>();
      bench::RunStats st = bench::run_path(dir, ec, cfg, opt);
      json r{{"bench",
              {{"direction", dir == bench::Direction::Right ? "right" : "left"},
               {"shape", to_string(ec.shape)},
               {"depth", ec.depth}}},
             {"config", config_json_of(st)},
             {"stats", run_stats_json(st)}};
      if (overhead) {
        EvalConfig base = cfg;
        base.design = Design::NS;
        base.sched = Scheduling::Local;
        base.threads = 1;
        bench::PathOptions bopt = opt;
        bopt.with_census = false;
        bench::RunStats bs = bench::run_path(dir, ec, base, bopt);
        base_times.push_back(bs.wall_ms);
        run_times.push_back(st.wall_ms);
        r["base_wall_ms"] = bs.wall_ms;
      }
      runs.push_back(std::move(r));
    }
    json out{{"runs", runs}};
    if (overhead && !base_times.empty()) {
      auto agg = bench::overhead_report(base_times, run_times);
      out["overhead"] = json{{"min", agg.min},
                             {"avg", agg.avg},
                             {"max", agg.max},
                             {"stddev", agg.stddev},
                             {"benchmarks", agg.n}};
    }
    *result_json = dup_string(out.dump(2));
  });
}

tk_status tk_run_dp(const char* spec_json, char** result_json) {
  if (!spec_json || !result_json) {
    g_last_error = "null argument";
    return TK_ERR_INVALID;
  }
  return guarded([&] {
    json js = json::parse(spec_json);
    EvalConfig cfg = config_from_json(js);
    if (!js.contains("design")) cfg.design = Design::PAS;  // the paper's setup
    std::string problem = js.at("problem").get<std::string>();
    bench::DpApproach ap;
    if (!bench::approach_from_string(js.at("approach").get<std::string>(), ap))
      throw config_error("unknown approach");
    unsigned n = js.at("n").get<unsigned>();
    double frac = js.value("frac", 0.5);
    uint64_t seed = js.value("seed", uint64_t{0});
    bench::DpResult r;
    if (problem == "knapsack") {
      unsigned c = js.at("c").get<unsigned>();
      r = bench::run_knapsack(ap, bench::gen_knapsack(n, c, frac, seed), cfg);
    } else if (problem == "lcs") {
      r = bench::run_lcs(ap, bench::gen_lcs(n, frac, seed), cfg);
    } else {
      throw config_error("unknown problem");
    }
    json out{{"config",
              {{"problem", problem},
               {"approach", to_string(ap)},
               {"n", n},
               {"frac", frac},
               {"seed", seed},
               {"design", to_string(cfg.design)},
               {"threads", cfg.threads}}},
             {"value", r.value},
             {"threads_agree", r.threads_agree},
             {"stats", run_stats_json(r.stats)}};
    *result_json = dup_string(out.dump(2));
  });
}

tk_status tk_memmodel_eval(const char* params_json, char** result_json) {
  if (!params_json || !result_json) {
    g_last_error = "null argument";
    return TK_ERR_INVALID;
  }
  return guarded([&] {
    json j = json::parse(params_json);
    memmodel::MemParams p = params_from_json(j);
    *result_json = dup_string(eval_params(p).dump(2));
  });
}

tk_status tk_memmodel_sweep(const char* sweep_json, char** result_json) {
  if (!sweep_json || !result_json) {
    g_last_error = "null argument";
    return TK_ERR_INVALID;
  }
  return guarded([&] {
    json j = json::parse(sweep_json);
    uint64_t count = j.value("count", uint64_t{1000});
    uint64_t seed = j.value("seed", uint64_t{1});
    bool csv = j.value("csv", false);
    std::mt19937_64 rng(seed);
    auto rnd = [&](uint64_t lo, uint64_t hi) { return lo + rng() % (hi - lo + 1); };

    uint64_t t1_ok = 0, t2_ok = 0, t2_premise = 0;
    std::ostringstream csv_rows;
    csv_rows << "te,ba,sf,se_fs,sf_fs,bp,nt,nc,st,at0,mu_cs,mu_ns,mu_ss,mu_fs,"
                "mu_pas,t1_iff,t2_holds\n";
    json rows = json::array();
    for (uint64_t i = 0; i < count; ++i) {
      memmodel::MemParams p;
      p.te = rnd(1, 512);
      p.ba = rnd(0, 4096);
      p.sf = rnd(2, 512);
      p.se_fs = rnd(1, p.sf - 1);
      p.sf_fs = p.sf - p.se_fs;
      p.bp = rnd(0, 64);
      p.nt = rnd(1, 64);
      memmodel::PredParams pp;
      pp.st = rnd(1, 1 << 20);
      uint64_t nc = rnd(1, 8);
      for (uint64_t c = 0; c < nc; ++c) pp.at.push_back(rnd(1, 1 << 20));
      p.preds.push_back(pp);
      auto t1 = memmodel::check_theorem1(p);
      auto t2 = memmodel::check_theorem2(p);
      if (t1.holds_iff) t1_ok++;
      if (t2.premise_ok) {
        t2_premise++;
        if (t2.holds) t2_ok++;
      }
      if (csv && i < 10000) {
        using memmodel::ModelDesign;
        csv_rows << p.te << ',' << p.ba << ',' << p.sf << ',' << p.se_fs << ','
                 << p.sf_fs << ',' << p.bp << ',' << p.nt << ',' << nc << ','
                 << pp.st << ',' << pp.at[0] << ','
                 << memmodel::predict(ModelDesign::CS, p) << ','
                 << memmodel::predict(ModelDesign::NS, p) << ','
                 << memmodel::predict(ModelDesign::SS, p) << ','
                 << memmodel::predict(ModelDesign::FS, p) << ','
                 << memmodel::predict(ModelDesign::PAS, p) << ','
                 << t1.holds_iff << ',' << t2.holds << '\n';
      }
    }
    json out{{"checked", count},
             {"theorem1_iff_ok", t1_ok},
             {"theorem2_premise_ok", t2_premise},
             {"theorem2_holds", t2_ok}};
    if (csv) out["csv"] = csv_rows.str();
    *result_json = dup_string(out.dump(2));
  });
}

struct tk_engine {
  EvalConfig cfg;
  bool census = false;
  std::string program_text;
  std::unique_ptr<Engine> engine;
};

tk_status tk_engine_create(const char* config_json, tk_engine** out) {
  if (!out) {
    g_last_error = "null argument";
    return TK_ERR_INVALID;
  }
  return guarded([&] {
    json jc = config_json && *config_json ? json::parse(config_json) : json::object();
    auto* e = new tk_engine;
    e->cfg = config_from_json(jc);
    e->census = jc.value("census", false);
    *out = e;
  });
}

tk_status tk_engine_load(tk_engine* e, const char* program_text) {
  if (!e || !program_text) {
    g_last_error = "null argument";
    return TK_ERR_INVALID;
  }
  return guarded([&] {
    Program prog = compile_program_text(program_text);  // validate eagerly
    (void)prog;
    e->program_text += program_text;
    e->program_text += "\n";
    e->engine.reset();
  });
}

tk_status tk_engine_solve(tk_engine* e, const char* query, char** result_json) {
  if (!e || !query || !result_json) {
    g_last_error = "null argument";
    return TK_ERR_INVALID;
  }
  return guarded([&] {
    Program prog = compile_program_text(e->program_text);
    e->engine = std::make_unique<Engine>(std::move(prog), e->cfg);
    SolveResult res = e->engine->solve(parse_term_text(query));
    json out{{"query_answers", res.answers.size()},
             {"unique", res.stats.unique},
             {"repeated", res.stats.repeated},
             {"calls", res.stats.calls},
             {"threads_agree", res.threads_agree}};
    if (e->census) {
      Census c = e->engine->tables().census();
      auto rep = memmodel::reconcile(e->cfg.design, c, e->cfg.threads);
      out["reconcile"] = json{{"predicted", rep.predicted},
                              {"measured", rep.measured},
                              {"delta", rep.delta}};
    }
    *result_json = dup_string(out.dump(2));
  });
}

tk_status tk_engine_answers(tk_engine* e, const char* goal, char** answers_json) {
  if (!e || !goal || !answers_json) {
    g_last_error = "null argument";
    return TK_ERR_INVALID;
  }
  return guarded([&] {
    if (!e->engine) throw contract_error("no query has been solved yet");
    std::vector<Term> ans = e->engine->consume_answers(parse_term_text(goal));
    json arr = json::array();
    for (const Term& t : ans) arr.push_back(t.to_string());
    *answers_json = dup_string(arr.dump(2));
  });
}

tk_status tk_engine_abolish(tk_engine* e) {
  if (!e) {
    g_last_error = "null argument";
    return TK_ERR_INVALID;
  }
  return guarded([&] {
    if (e->engine) e->engine->abolish();
  });
}

void tk_engine_destroy(tk_engine* e) { delete e; }

}  // extern "C"
