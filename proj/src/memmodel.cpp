#include "tabkit/memmodel.hpp"

namespace tabkit {
namespace memmodel {

const char* to_string(ModelDesign d) {
  switch (d) {
    case ModelDesign::CS: return "cs";
    case ModelDesign::NS: return "ns";
    case ModelDesign::SS: return "ss";
    case ModelDesign::FS: return "fs";
    case ModelDesign::PAS: return "pas";
    case ModelDesign::PAC: return "pac";
  }
  return "?";
}

bool model_design_from_string(const std::string& s, ModelDesign& out) {
  if (s == "cs") out = ModelDesign::CS;
  else if (s == "ns") out = ModelDesign::NS;
  else if (s == "ss") out = ModelDesign::SS;
  else if (s == "fs") out = ModelDesign::FS;
  else if (s == "pas") out = ModelDesign::PAS;
  else if (s == "pac") out = ModelDesign::PAC;
  else return false;
  return true;
}

void MemParams::validate() const {
  if (nt < 1) throw contract_error("NT must be >= 1");
  if (se_fs + sf_fs != sf)
    throw contract_error("SE_FS + SF_FS must equal SF");
  for (const auto& pp : preds) {
    if (!pp.nt_private.empty()) {
      if (pp.nt_private.size() != pp.at.size())
        throw contract_error("NT(Pi.j) must be given per call");
      for (uint64_t v : pp.nt_private)
        if (v > nt) throw contract_error("NT(Pi.j) must not exceed NT");
    }
  }
}

uint64_t predict_pred(ModelDesign d, const MemParams& p, size_t i) {
  const PredParams& pp = p.preds.at(i);
  const uint64_t nc = pp.at.size();
  uint64_t mu = 0;
  switch (d) {
    case ModelDesign::CS: {
      mu = p.te + pp.st;
      for (uint64_t at : pp.at) mu += p.sf + at;
      break;
    }
    case ModelDesign::NS: {
      // TE_NS = TE + BA; per thread: ST plus the frame/answer-trie pairs
      uint64_t inner = pp.st;
      for (uint64_t at : pp.at) inner += p.sf + at;
      mu = p.te + p.ba + p.nt * inner;
      break;
    }
    case ModelDesign::SS: {
      mu = p.te + pp.st;
      for (uint64_t at : pp.at) mu += p.ba + p.nt * (p.sf + at);
      break;
    }
    case ModelDesign::FS:
    case ModelDesign::PAC: {
      // PAC's private chains are gone once tables complete; its resident
      // footprint matches the FS equation
      mu = p.te + pp.st;
      for (uint64_t at : pp.at)
        mu += p.se_fs + p.ba + p.nt * (p.sf_fs + p.bp) + at;
      break;
    }
    case ModelDesign::PAS: {
      mu = p.te + pp.st;
      for (size_t j = 0; j < pp.at.size(); ++j) {
        uint64_t ntj = pp.nt_private.empty() ? p.nt : pp.nt_private[j];
        mu += ntj * (p.sf + pp.at[j]);
      }
      break;
    }
  }
  (void)nc;
  return mu;
}

uint64_t predict(ModelDesign d, const MemParams& p) {
  p.validate();
  uint64_t total = 0;
  for (size_t i = 0; i < p.preds.size(); ++i) total += predict_pred(d, p, i);
  return total;
}

Theorem1Result check_theorem1(const MemParams& p, size_t i) {
  p.validate();
  if (p.preds.at(i).at.empty()) throw contract_error("NC(Pi) must be >= 1");
  Theorem1Result r{};
  uint64_t mu_ss = predict_pred(ModelDesign::SS, p, i);
  uint64_t mu_ns = predict_pred(ModelDesign::NS, p, i);
  const PredParams& pp = p.preds.at(i);
  uint64_t nc = pp.at.size();
  r.holds_lhs = mu_ss <= mu_ns;
  r.condition = (nc - 1) * p.ba <= (p.nt - 1) * pp.st;
  r.holds_iff = r.holds_lhs == r.condition;
  return r;
}

Theorem2Result check_theorem2(const MemParams& p, size_t i) {
  p.validate();
  if (p.preds.at(i).at.empty()) throw contract_error("NC(Pi) must be >= 1");
  Theorem2Result r{};
  // the strict-negativity premise, plus a real (non-empty) back pointer,
  // without which the one-thread corollary degenerates to equality
  r.premise_ok = p.sf_fs + p.bp < p.sf && p.bp >= 1;
  if (!r.premise_ok) {
    r.holds = false;
    return r;
  }
  uint64_t mu_fs = predict_pred(ModelDesign::FS, p, i);
  uint64_t mu_ss = predict_pred(ModelDesign::SS, p, i);
  r.holds = p.nt > 1 ? mu_fs < mu_ss : mu_fs > mu_ss;
  return r;
}

MemReport reconcile(Design design, const Census& census, unsigned nt) {
  MemReport rep;
  MemParams& p = rep.params;
  p.te = blk::kTableEntry;
  p.sf = blk::kSubgoalFrame;
  p.se_fs = blk::kSubgoalEntry;
  p.sf_fs = blk::kSfFs;
  p.bp = blk::kBackPointer;
  p.nt = nt;
  p.ba = blk::kBucketArray;  // refined below from the measured group count

  uint64_t measured = 0;
  bool ba_set = false;

  for (const PredCensus& pc : census.preds) {
    PredParams pp;
    pp.st = blk::kTrieHeader + pc.st_nodes * blk::kTrieNode;
    if (!pc.st_uniform) rep.uniform = false;

    measured += blk::kTableEntry;
    switch (design) {
      case Design::NS: {
        if (pc.calls.empty() && pc.st_tries == 0) pp.st = 0;  // never called
        if (!pc.calls.empty() && pc.st_tries != nt) rep.uniform = false;
        uint64_t ba_bytes = blk::kBucketArray + pc.bucket_groups * blk::kBucketGroup;
        if (!ba_set) {
          p.ba = ba_bytes;
          ba_set = true;
        } else if (p.ba != ba_bytes) {
          rep.uniform = false;
        }
        measured += ba_bytes;
        measured += uint64_t{pc.st_tries} *
                    (blk::kTrieHeader + pc.st_nodes * blk::kTrieNode);
        for (const CallCensus& cc : pc.calls) {
          if (!cc.at_uniform || cc.frames != nt) rep.uniform = false;
          pp.at.push_back(cc.at_nodes * blk::kTrieNode);
          measured += uint64_t{cc.frames} *
                      (blk::kSubgoalFrame + cc.at_nodes * blk::kTrieNode);
        }
        break;
      }
      case Design::SS: {
        measured += pp.st;
        for (const CallCensus& cc : pc.calls) {
          if (!cc.at_uniform || cc.frames != nt) rep.uniform = false;
          uint64_t ba_bytes =
              blk::kBucketArray + cc.bucket_groups * blk::kBucketGroup;
          if (!ba_set) {
            p.ba = ba_bytes;
            ba_set = true;
          } else if (p.ba != ba_bytes) {
            rep.uniform = false;
          }
          pp.at.push_back(cc.at_nodes * blk::kTrieNode);
          measured += ba_bytes;
          measured += uint64_t{cc.frames} *
                      (blk::kSubgoalFrame + cc.at_nodes * blk::kTrieNode);
        }
        break;
      }
      case Design::FS:
      case Design::PAC: {
        measured += pp.st;
        for (const CallCensus& cc : pc.calls) {
          if (cc.entries != 1 || cc.frames != nt) rep.uniform = false;
          uint64_t ba_bytes =
              blk::kBucketArray + cc.bucket_groups * blk::kBucketGroup;
          if (!ba_set) {
            p.ba = ba_bytes;
            ba_set = true;
          } else if (p.ba != ba_bytes) {
            rep.uniform = false;
          }
          pp.at.push_back(cc.at_nodes * blk::kTrieNode);
          measured += uint64_t{cc.entries} * blk::kSubgoalEntry + ba_bytes;
          measured += uint64_t{cc.frames} * blk::kFsFrame;
          measured += cc.at_nodes * blk::kTrieNode;
          measured += cc.chain_nodes * blk::kAnswerChainNode;
          if (cc.chain_nodes) rep.uniform = false;  // tables not yet complete
        }
        break;
      }
      case Design::PAS: {
        measured += pp.st;
        for (const CallCensus& cc : pc.calls) {
          if (!cc.at_uniform) rep.uniform = false;
          pp.at.push_back(cc.at_nodes * blk::kTrieNode);
          pp.nt_private.push_back(cc.frames);
          rep.discarded_frames += cc.discarded_frames;
          measured += uint64_t{cc.frames} *
                      (blk::kSubgoalFrame + cc.at_nodes * blk::kTrieNode);
        }
        break;
      }
    }
    p.preds.push_back(std::move(pp));
  }

  ModelDesign md;
  switch (design) {
    case Design::NS: md = ModelDesign::NS; break;
    case Design::SS: md = ModelDesign::SS; break;
    case Design::FS: md = ModelDesign::FS; break;
    case Design::PAS: md = ModelDesign::PAS; break;
    case Design::PAC: md = ModelDesign::PAC; break;
    default: md = ModelDesign::CS; break;
  }
  rep.predicted = predict(md, p);
  rep.measured = measured;
  rep.delta = static_cast<int64_t>(rep.predicted) - static_cast<int64_t>(rep.measured);
  return rep;
}

}  // namespace memmodel
}  // namespace tabkit
