#include "tabkit.h"

#include <string>

#include "doctest.h"
#include "json.hpp"

using nlohmann::json;

namespace {
const char* kPathProgram =
    ":- table path/2.\n"
    "path(X,Z) :- path(X,Y), edge(Y,Z).\n"
    "path(X,Z) :- edge(X,Z).\n"
    "edge(1,2).\nedge(2,3).\nedge(3,1).\n";

struct Str {
  char* p = nullptr;
  ~Str() { tk_string_free(p); }
};
}  // namespace

TEST_CASE("tk_run_program solves and reports statistics") {
  Str out;
  tk_status st = tk_run_program(kPathProgram, "path(X,Y)",
                                "{\"design\":\"pac\",\"threads\":2,"
                                "\"census\":true,\"answers\":true}",
                                &out.p);
  REQUIRE(st == TK_OK);
  json j = json::parse(out.p);
  CHECK(j["stats"]["query_answers"] == 9);
  CHECK(j["stats"]["threads_agree"] == true);
  CHECK(j["stats"]["allocator_clean"] == true);
  CHECK(j["stats"]["reconcile"]["delta"] == 0);
  CHECK(j["answers"].size() == 9);
}

TEST_CASE("syntax errors map to the parse status") {
  Str out;
  CHECK(tk_run_program("path(X :-", "path(X,Y)", "{}", &out.p) == TK_ERR_PARSE);
  CHECK(std::string(tk_last_error()).size() > 0);
}

TEST_CASE("unsupported configurations map to the config status") {
  Str out;
  tk_status st = tk_run_program(kPathProgram, "path(X,Y)",
                                "{\"design\":\"fs\",\"sched\":\"batched\"}", &out.p);
  CHECK(st == TK_ERR_CONFIG);
}

TEST_CASE("the bench entry point emits runs and overhead aggregates") {
  Str out;
  const char* spec =
      "{\"benches\":[{\"direction\":\"left\",\"shape\":\"cycle\",\"depth\":20}],"
      "\"design\":\"ss\",\"threads\":2,\"repeat\":2,\"overhead\":true}";
  REQUIRE(tk_run_path_bench(spec, &out.p) == TK_OK);
  json j = json::parse(out.p);
  REQUIRE(j["runs"].size() == 1);
  CHECK(j["runs"][0]["stats"]["query_answers"] == 400);
  CHECK(j.contains("overhead"));
  CHECK(j["overhead"]["benchmarks"] == 1);
}

TEST_CASE("the dp entry point returns the optimal value") {
  Str out;
  const char* spec =
      "{\"problem\":\"knapsack\",\"approach\":\"td2\",\"n\":20,\"c\":40,"
      "\"frac\":0.5,\"threads\":2,\"seed\":9}";
  REQUIRE(tk_run_dp(spec, &out.p) == TK_OK);
  json j = json::parse(out.p);
  CHECK(j["value"].get<int64_t>() > 0);
  CHECK(j["threads_agree"] == true);
  CHECK(j["config"]["design"] == "pas");
}

TEST_CASE("memmodel evaluation exposes the equations and theorems") {
  Str out;
  const char* params =
      "{\"te\":1,\"ba\":4,\"sf\":2,\"se_fs\":1,\"sf_fs\":1,\"bp\":0,\"nt\":4,"
      "\"preds\":[{\"st\":10,\"at\":[7,7,7]}]}";
  REQUIRE(tk_memmodel_eval(params, &out.p) == TK_OK);
  json j = json::parse(out.p);
  CHECK(j["mu"]["ns"] == 153);
  CHECK(j["mu"]["ss"] == 131);
  CHECK(j["theorem1"]["holds_iff"] == true);
}

TEST_CASE("memmodel sweep checks the theorems on randomized tuples") {
  Str out;
  REQUIRE(tk_memmodel_sweep("{\"count\":500,\"seed\":3,\"csv\":true}", &out.p) ==
          TK_OK);
  json j = json::parse(out.p);
  CHECK(j["checked"] == 500);
  CHECK(j["theorem1_iff_ok"] == 500);
  CHECK(j["theorem2_holds"] == j["theorem2_premise_ok"]);
  CHECK(j["csv"].get<std::string>().find("mu_cs") != std::string::npos);
}

TEST_CASE("the incremental engine handle loads, solves and answers") {
  tk_engine* e = nullptr;
  REQUIRE(tk_engine_create("{\"design\":\"pas\",\"threads\":2}", &e) == TK_OK);
  REQUIRE(tk_engine_load(e, kPathProgram) == TK_OK);
  Str res;
  REQUIRE(tk_engine_solve(e, "path(X,Y)", &res.p) == TK_OK);
  json j = json::parse(res.p);
  CHECK(j["query_answers"] == 9);
  Str ans;
  REQUIRE(tk_engine_answers(e, "path(X,Y)", &ans.p) == TK_OK);
  json a = json::parse(ans.p);
  CHECK(a.size() == 9);
  // variant tabling: a never-called instance has no table of its own
  Str none;
  REQUIRE(tk_engine_answers(e, "path(1,Y)", &none.p) == TK_OK);
  CHECK(json::parse(none.p).empty());
  CHECK(tk_engine_abolish(e) == TK_OK);
  tk_engine_destroy(e);
}

TEST_CASE("null arguments are rejected up front") {
  CHECK(tk_run_program(nullptr, "q", "{}", nullptr) == TK_ERR_INVALID);
  tk_engine* e = nullptr;
  CHECK(tk_engine_create("{}", &e) == TK_OK);
  CHECK(tk_engine_solve(e, nullptr, nullptr) == TK_ERR_INVALID);
  tk_engine_destroy(e);
}
