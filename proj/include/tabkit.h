/* tabkit C API: concurrent tabling engine with pluggable table-space
 * designs, fixed-size allocation, lock-free tries, mode-directed
 * aggregation and a benchmark harness.
 *
 * All functions return TK_OK (0) on success. On failure the return code
 * classifies the error and tk_last_error() carries the message (thread
 * local). Strings returned through `char**` are heap-allocated JSON and
 * must be released with tk_string_free().
 */
#ifndef TABKIT_H
#define TABKIT_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef int32_t tk_status;

enum {
  TK_OK = 0,
  TK_ERR_INVALID = 1,    /* bad arguments / malformed JSON */
  TK_ERR_PARSE = 2,      /* program or term syntax error */
  TK_ERR_STRUCTURAL = 3, /* ill-formed term or program */
  TK_ERR_CONTRACT = 4,   /* API precondition violated */
  TK_ERR_CONFIG = 5,     /* unsupported configuration */
  TK_ERR_RESOURCE = 6,   /* host out of memory */
  TK_ERR_INTERNAL = 7
};

const char* tk_version(void);
const char* tk_status_name(tk_status st);
const char* tk_last_error(void);
void tk_string_free(char* s);

/* Engine configuration JSON (all fields optional):
 *   {"design":"ns|ss|fs|pas|pac", "sched":"local|batched", "threads":N,
 *    "seed":N, "scheme":"hashtrie|doubling", "threshold":N,
 *    "initial_buckets":N, "hash_bits":N, "page_bytes":N,
 *    "debug_alloc":bool, "census":bool}
 */

/* Solves `query` against a tabled logic program; result JSON carries the
 * answer count, table statistics and (with "census") the memory-model
 * reconciliation. */
tk_status tk_run_program(const char* program_text, const char* query,
                         const char* config_json, char** result_json);

/* Path benchmark harness. Spec JSON:
 *   {"benches":[{"direction":"left|right","shape":"btree|cycle|grid|pyramid",
 *                "depth":N}, ...],
 *    "design":..., "sched":..., "threads":N, "repeat":N, "seed":N,
 *    "census":bool, "overhead":bool}
 * With "overhead", each benchmark also runs the one-thread NS/local base
 * configuration and the report aggregates the overhead ratios. */
tk_status tk_run_path_bench(const char* spec_json, char** result_json);

/* Dynamic-programming schedulers. Spec JSON:
 *   {"problem":"knapsack|lcs", "approach":"td1|td2|bu", "n":N, "c":N,
 *    "frac":0.5, "design":..., "threads":N, "seed":N}
 */
tk_status tk_run_dp(const char* spec_json, char** result_json);

/* Memory model: evaluates the per-design usage equations and the two
 * theorems on explicit parameters, or sweeps randomized parameter tuples.
 *   params: {"te":..,"ba":..,"sf":..,"se_fs":..,"sf_fs":..,"bp":..,"nt":..,
 *            "preds":[{"st":..,"at":[..],"nt_private":[..]}]}
 *   sweep:  {"count":N,"seed":N,"csv":bool}
 */
tk_status tk_memmodel_eval(const char* params_json, char** result_json);
tk_status tk_memmodel_sweep(const char* sweep_json, char** result_json);

/* Incremental engine handle. */
typedef struct tk_engine tk_engine;

tk_status tk_engine_create(const char* config_json, tk_engine** out);
tk_status tk_engine_load(tk_engine* e, const char* program_text);
tk_status tk_engine_solve(tk_engine* e, const char* query, char** result_json);
/* Completed answers of `goal` as a JSON array of term strings. */
tk_status tk_engine_answers(tk_engine* e, const char* goal, char** answers_json);
tk_status tk_engine_abolish(tk_engine* e);
void tk_engine_destroy(tk_engine* e);

#ifdef __cplusplus
}
#endif

#endif /* TABKIT_H */
