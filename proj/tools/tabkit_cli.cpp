// tabkit command line: drives the shared library through the C API only.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tabkit.h"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("cannot open file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_output(const std::string& out_path, const char* text) {
  if (out_path.empty()) {
    std::cout << text << "\n";
    return;
  }
  std::ofstream out(out_path);
  out << text << "\n";
}

int fail(tk_status st) {
  std::cerr << "error (" << tk_status_name(st) << "): " << tk_last_error() << "\n";
  return 1;
}

// "path-left:cycle:2000" -> {"direction":"left","shape":"cycle","depth":2000}
std::string bench_spec_json(const std::string& s) {
  std::string dir, shape, depth;
  size_t p1 = s.find(':');
  size_t p2 = s.find(':', p1 == std::string::npos ? p1 : p1 + 1);
  if (p1 == std::string::npos || p2 == std::string::npos)
    throw CLI::ValidationError("bench spec must look like path-left:cycle:2000");
  std::string kind = s.substr(0, p1);
  shape = s.substr(p1 + 1, p2 - p1 - 1);
  depth = s.substr(p2 + 1);
  if (kind == "path-left") dir = "left";
  else if (kind == "path-right") dir = "right";
  else throw CLI::ValidationError("bench kind must be path-left or path-right");
  return "{\"direction\":\"" + dir + "\",\"shape\":\"" + shape +
         "\",\"depth\":" + depth + "}";
}

struct CommonOpts {
  std::string design = "ns";
  std::string sched = "local";
  unsigned threads = 1;
  uint64_t seed = 0;
  std::string scheme = "hashtrie";
  std::string out;

  void add(CLI::App* app) {
    app->add_option("--design", design, "table space design: ns|ss|fs|pas|pac");
    app->add_option("--sched", sched, "scheduling: local|batched");
    app->add_option("--threads", threads, "worker threads (1..1024)");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--scheme", scheme, "hash scheme: hashtrie|doubling");
    app->add_option("--out", out, "write the JSON report to a file");
  }
  std::string config_fields() const {
    std::ostringstream os;
    os << "\"design\":\"" << design << "\",\"sched\":\"" << sched
       << "\",\"threads\":" << threads << ",\"seed\":" << seed
       << ",\"scheme\":\"" << scheme << "\"";
    return os.str();
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tabkit: concurrent tabling engine and benchmark harness"};
  app.require_subcommand(1);

  // ---- run ----
  auto* run = app.add_subcommand("run", "solve a query against a program file");
  CommonOpts run_opts;
  std::string program_path, query;
  bool run_census = false, run_answers = false;
  run->add_option("--program", program_path, "program file")->required();
  run->add_option("--query", query, "query goal, e.g. 'path(X,Y)'")->required();
  run->add_flag("--census", run_census, "reconcile against the memory model");
  run->add_flag("--answers", run_answers, "include the answer terms");
  run_opts.add(run);

  // ---- bench ----
  auto* bench = app.add_subcommand("bench", "path benchmark harness");
  CommonOpts bench_opts;
  std::vector<std::string> bench_specs;
  unsigned repeat = 10;
  bool census = false, overhead = false, no_verify = false;
  bench->add_option("--bench", bench_specs,
                    "benchmark spec, e.g. path-left:cycle:2000 (repeatable)")
      ->required();
  bench->add_option("--repeat", repeat, "runs to average (default 10)");
  bench->add_flag("--census", census, "reconcile against the memory model");
  bench->add_flag("--overhead", overhead, "also run the NS one-thread base");
  bench->add_flag("--no-verify", no_verify, "skip per-thread answer-set checks");
  bench_opts.add(bench);

  // ---- dp ----
  auto* dp = app.add_subcommand("dp", "knapsack / LCS schedulers");
  CommonOpts dp_opts;
  dp_opts.design = "pas";
  std::string problem = "knapsack", approach = "bu";
  unsigned dp_n = 200, dp_c = 400;
  double frac = 0.5;
  dp->add_option("--problem", problem, "knapsack|lcs")->required();
  dp->add_option("--approach", approach, "td1|td2|bu")->required();
  dp->add_option("--n", dp_n, "items / sequence length");
  dp->add_option("--c", dp_c, "knapsack capacity");
  dp->add_option("--frac", frac, "value range fraction (0.10/0.30/0.50)");
  dp_opts.add(dp);

  // ---- memmodel ----
  auto* mm = app.add_subcommand("memmodel", "memory-usage model evaluation");
  std::string params_path, sweep_path, mm_out;
  uint64_t sweep_count = 0, sweep_seed = 1;
  bool mm_csv = false;
  mm->add_option("--params", params_path, "JSON parameter file");
  mm->add_option("--sweep", sweep_path, "JSON sweep spec file");
  mm->add_option("--sweep-count", sweep_count, "randomized tuples to sweep");
  mm->add_option("--sweep-seed", sweep_seed, "sweep seed");
  mm->add_flag("--csv", mm_csv, "emit a CSV table in the sweep report");
  mm->add_option("--out", mm_out, "write the report to a file");

  CLI11_PARSE(app, argc, argv);

  char* result = nullptr;
  tk_status st = TK_OK;

  if (run->parsed()) {
    std::string cfg = "{" + run_opts.config_fields() +
                      (run_census ? ",\"census\":true" : "") +
                      (run_answers ? ",\"answers\":true" : "") + "}";
    std::string text = read_file(program_path);
    st = tk_run_program(text.c_str(), query.c_str(), cfg.c_str(), &result);
    if (st != TK_OK) return fail(st);
    write_output(run_opts.out, result);
  } else if (bench->parsed()) {
    std::ostringstream spec;
    spec << "{\"benches\":[";
    for (size_t i = 0; i < bench_specs.size(); ++i) {
      if (i) spec << ',';
      spec << bench_spec_json(bench_specs[i]);
    }
    spec << "]," << bench_opts.config_fields() << ",\"repeat\":" << repeat;
    if (census) spec << ",\"census\":true";
    if (overhead) spec << ",\"overhead\":true";
    if (no_verify) spec << ",\"verify\":false";
    spec << "}";
    st = tk_run_path_bench(spec.str().c_str(), &result);
    if (st != TK_OK) return fail(st);
    write_output(bench_opts.out, result);
  } else if (dp->parsed()) {
    std::ostringstream spec;
    spec << "{\"problem\":\"" << problem << "\",\"approach\":\"" << approach
         << "\",\"n\":" << dp_n << ",\"c\":" << dp_c << ",\"frac\":" << frac << ","
         << dp_opts.config_fields() << "}";
    st = tk_run_dp(spec.str().c_str(), &result);
    if (st != TK_OK) return fail(st);
    write_output(dp_opts.out, result);
  } else if (mm->parsed()) {
    if (!params_path.empty()) {
      std::string params = read_file(params_path);
      st = tk_memmodel_eval(params.c_str(), &result);
    } else {
      std::string spec;
      if (!sweep_path.empty()) {
        spec = read_file(sweep_path);
      } else {
        std::ostringstream os;
        os << "{\"count\":" << (sweep_count ? sweep_count : 10000)
           << ",\"seed\":" << sweep_seed << (mm_csv ? ",\"csv\":true" : "") << "}";
        spec = os.str();
      }
      st = tk_memmodel_sweep(spec.c_str(), &result);
    }
    if (st != TK_OK) return fail(st);
    write_output(mm_out, result);
  }
  tk_string_free(result);
  return 0;
}
