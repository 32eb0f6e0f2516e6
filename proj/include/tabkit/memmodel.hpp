#pragma once

#include <cstdint>
#include <vector>

#include "tabkit/tablespace.hpp"

namespace tabkit {
namespace memmodel {

// Analytic designs: CS exists only here (its runtime needs the or-parallel
// engine); the explicit designs mirror the table-space module.
enum class ModelDesign : uint8_t { CS, NS, SS, FS, PAS, PAC };
const char* to_string(ModelDesign d);
bool model_design_from_string(const std::string& s, ModelDesign& out);

struct PredParams {
  uint64_t st = 0;                    // ST(Pi) bytes
  std::vector<uint64_t> at;           // AT(Pi.j) bytes, j = 1..NC(Pi)
  std::vector<uint64_t> nt_private;   // NT(Pi.j), PAS only; empty means NT
};

// Every symbol of the per-design memory-usage equations. All byte values
// are exact unsigned integers; no floating point anywhere in the model.
struct MemParams {
  uint64_t te = 0;
  uint64_t ba = 0;
  uint64_t sf = 0;
  uint64_t se_fs = 0;
  uint64_t sf_fs = 0;
  uint64_t bp = 0;
  uint64_t nt = 1;
  std::vector<PredParams> preds;

  void validate() const;
};

// Memory usage of one predicate under a design.
uint64_t predict_pred(ModelDesign d, const MemParams& p, size_t pred_index);
// Total memory usage: sum over all predicates.
uint64_t predict(ModelDesign d, const MemParams& p);

struct Theorem1Result {
  bool holds_lhs;  // MU_SS <= MU_NS
  bool condition;  // [NC-1]*BA <= [NT-1]*ST
  bool holds_iff;  // the two agree (must always be true)
};
// Theorem: MU_SS(Pi) <= MU_NS(Pi) iff [NC(Pi)-1]*BA <= [NT-1]*ST(Pi).
Theorem1Result check_theorem1(const MemParams& p, size_t pred_index = 0);

struct Theorem2Result {
  bool premise_ok;  // SF_FS + BP < SF (strict-negativity premise)
  bool holds;       // NT>1: MU_FS < MU_SS; NT=1: MU_FS > MU_SS
};
Theorem2Result check_theorem2(const MemParams& p, size_t pred_index = 0);

struct MemReport {
  uint64_t predicted = 0;
  uint64_t measured = 0;
  int64_t delta = 0;  // predicted - measured
  uint64_t discarded_frames = 0;
  bool uniform = true;  // census satisfied the uniform worst-case assumptions
  MemParams params;     // parameters derived from the census
};

// Grounds the equations against a measured structure census. The census and
// the prediction share one counting convention (block sizes x counts), so a
// correct implementation yields delta == 0 exactly.
MemReport reconcile(Design design, const Census& census, unsigned nt);

}  // namespace memmodel
}  // namespace tabkit
