#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tabkit/config.hpp"
#include "tabkit/pagealloc.hpp"
#include "tabkit/term.hpp"
#include "tabkit/trie.hpp"

namespace tabkit {

// Worker thread index (0-based, dense). The orchestrating thread uses
// kMainWorker and never owns table-space cells.
using WorkerId = uint32_t;
inline constexpr WorkerId kMainWorker = ~WorkerId{0};

enum class Mode : uint8_t { Index, First, Last, Min, Max, Sum, All };
bool mode_from_string(const std::string& s, Mode& out);
const char* to_string(Mode m);

enum class FrameState : uint16_t { Evaluating = 0, Complete = 1, Discarded = 2 };

struct BucketGroup {
  std::atomic<void*> cells[kBucketGroupSize];
};
static_assert(sizeof(BucketGroup) == 256);

// Per-structure array with one cell per thread: a small direct part plus
// indirect groups allocated only when a high thread id shows up.
struct BucketArray {
  std::atomic<void*> direct[kBucketDirect];
  std::atomic<BucketGroup*> groups[kBucketGroups];
};
static_assert(sizeof(BucketArray) == 320);

struct TableEntry {
  uint64_t pred = 0;
  Trie* subgoal_trie = nullptr;               // shared designs; null under NS
  std::atomic<BucketArray*> ns_roots{nullptr};  // NS: per-thread subgoal tries
  uint8_t arity = 0;
  bool moded = false;
  uint8_t n_output = 0;
  uint8_t pad_ = 0;
  Mode modes[8] = {};
};
static_assert(sizeof(TableEntry) <= 64);

// Mode split of one subgoal's variables; output arguments must be single
// free variables at call time.
struct SubstInfo {
  uint8_t nvars = 0;
  uint8_t moded = 0;
  uint8_t var_arg[14] = {};  // argument index owning each variable
};
static_assert(sizeof(SubstInfo) == 16);

// Subgoal frame for the NS, SS and PAS designs: private answer trie plus
// completion state. PAS chains frames of the same subgoal via `next`.
struct SubgoalFrame {
  Trie answers;
  std::atomic<uint16_t> state{0};
  uint16_t owner = 0;
  uint32_t epoch = 0;  // bumped when invalid leaves are physically removed
  std::atomic<SubgoalFrame*> next{nullptr};
  TrieNode* subgoal_leaf = nullptr;
  SubstInfo subst;
};
static_assert(sizeof(SubgoalFrame) <= 96);

// Shared half of the split frame (FS/PAC): the answer trie, the bucket
// array of per-thread frames, the completion flag and the chaining latch.
struct SubgoalEntry {
  Trie answers;
  std::atomic<BucketArray*> ba{nullptr};
  std::atomic<uint32_t> completed{0};
  std::atomic<uint32_t> latch{0};
};
static_assert(sizeof(SubgoalEntry) <= 56);

struct AnswerChainNode {
  TrieNode* leaf;
  AnswerChainNode* next;
};
static_assert(sizeof(AnswerChainNode) == 16);

// Private half of the split frame. `entry` is the back pointer to the
// shared subgoal entry; the chain fields hold PAC's private answer chain.
struct FsFrame {
  SubgoalEntry* entry = nullptr;
  AnswerChainNode* chain_head = nullptr;
  AnswerChainNode* chain_tail = nullptr;
  HashArray* chain_hash = nullptr;  // private hash past the chain threshold
  uint32_t chain_count = 0;
  std::atomic<uint16_t> state{0};
  uint16_t owner = 0;
};
static_assert(sizeof(FsFrame) <= 48);

// Registered block sizes; these are also the memory-model symbol values.
namespace blk {
inline constexpr uint64_t kTableEntry = 64;
inline constexpr uint64_t kBucketArray = 320;
inline constexpr uint64_t kBucketGroup = 256;
inline constexpr uint64_t kSubgoalFrame = 96;   // SF
inline constexpr uint64_t kSubgoalEntry = 56;   // SE_FS
inline constexpr uint64_t kFsFrame = 48;        // SF_FS + BP
inline constexpr uint64_t kBackPointer = 8;     // BP
inline constexpr uint64_t kSfFs = kFsFrame - kBackPointer;  // SF_FS
inline constexpr uint64_t kTrieNode = 40;
inline constexpr uint64_t kTrieHeader = 48;
inline constexpr uint64_t kChainCell = 16;
inline constexpr uint64_t kHashArray = 64;
inline constexpr uint64_t kAnswerChainNode = 16;
static_assert(kSubgoalEntry + kSfFs == kSubgoalFrame);  // SE_FS + SF_FS = SF
}  // namespace blk

struct SubgoalHandle {
  TableEntry* entry = nullptr;
  TrieNode* leaf = nullptr;          // leaf in the governing subgoal trie
  SubgoalFrame* frame = nullptr;     // NS/SS/PAS
  FsFrame* fsframe = nullptr;        // FS/PAC
  SubgoalEntry* se = nullptr;        // FS/PAC
  bool consumer_only = false;        // PAS: adopted a completed frame
  bool created_frame = false;

  bool valid() const { return entry != nullptr; }
};

struct RecordResult {
  TrieNode* leaf = nullptr;
  bool new_for_thread = false;  // drives batched scheduling
  bool new_in_trie = false;     // unique-answer accounting
};

enum class ModeOutcome : uint8_t { Kept, Replaced, Discarded };

struct ModeResult {
  ModeOutcome outcome;
  TrieNode* leaf = nullptr;  // current leaf for the group after the call
  bool new_in_trie = false;
};

// Post-run structure census, the measured side of the memory model.
struct CallCensus {
  uint64_t at_nodes = 0;  // nodes of one retained answer trie
  uint64_t answers = 0;
  uint32_t frames = 0;  // retained frames (SF or split frames)
  uint32_t discarded_frames = 0;
  uint32_t entries = 0;
  uint32_t bucket_arrays = 0;
  uint32_t bucket_groups = 0;
  uint64_t chain_nodes = 0;
  bool at_uniform = true;  // every retained trie has the same node count
};

struct PredCensus {
  uint64_t pred = 0;
  uint64_t st_nodes = 0;  // nodes of one subgoal trie (plus header bytes elsewhere)
  uint32_t st_tries = 0;
  bool st_uniform = true;
  uint32_t bucket_arrays = 0;  // entry-level (NS)
  uint32_t bucket_groups = 0;
  std::vector<CallCensus> calls;
};

struct Census {
  Design design;
  std::vector<PredCensus> preds;
};

// The five explicit table-space organizations over shared tries, following
// the per-design private/shared access matrix.
class TableSpace {
 public:
  TableSpace(Design design, TrieConfig tcfg, PageAllocator& alloc);
  ~TableSpace();

  TableSpace(const TableSpace&) = delete;
  TableSpace& operator=(const TableSpace&) = delete;

  Design design() const { return design_; }
  PageAllocator& allocator() { return *alloc_; }
  TrieEnv& env() { return env_; }

  TableEntry* register_predicate(uint64_t pred, std::span<const Mode> modes = {});
  TableEntry* find_predicate(uint64_t pred) const;
  const std::vector<TableEntry*>& entries() const { return entries_; }

  SubgoalHandle subgoal_lookup_insert(TableEntry* te, const SubgoalKey& key,
                                      WorkerId w);

  // Re-checks cross-thread completion (PAS published frame, FS/PAC flag);
  // swaps the handle to the completed view when one exists.
  bool refresh_completion(SubgoalHandle& h, WorkerId w,
                          std::vector<SubgoalFrame*>* my_discards);

  RecordResult record_answer(SubgoalHandle& h, std::span<const Token> tokens,
                             WorkerId w);

  // Mode-directed aggregation (NS/SS/PAS only). `var_ends[i]` is the end
  // offset of variable i's token run inside `tokens`.
  ModeResult mode_directed_insert(SubgoalHandle& h, std::span<const Token> tokens,
                                  std::span<const uint32_t> var_ends, WorkerId w);

  // Tags `leaf` invalid and frees intermediate nodes serving it alone.
  void invalidate_answer(SubgoalHandle& h, TrieNode* leaf, WorkerId w);

  void complete_subgoal(SubgoalHandle& h, WorkerId w);
  bool is_complete(const SubgoalHandle& h) const;

  // Answer stream of the handle under the design's visibility rules.
  // kind 0: answer-trie leaf list; kind 1: PAC private chain.
  struct Stream {
    const Trie* trie = nullptr;
    const FsFrame* pac_frame = nullptr;
    uint64_t size() const;
  };
  Stream answer_stream(const SubgoalHandle& h) const;

  void abolish_tables();
  Census census() const;

  // Aggregated trie statistics over every table in the space.
  struct SpaceStats {
    TrieStats subgoal;
    TrieStats answer;
  };
  SpaceStats aggregate_stats() const;

  uint64_t subgoal_count(const TableEntry* te) const;  // distinct calls

  static HeapId heap_of(WorkerId w) { return w == kMainWorker ? 0 : w + 1; }

  StructType type_subgoal_node() const { return t_subgoal_node_; }
  StructType type_answer_node() const { return t_answer_node_; }
  StructType type_frame() const { return t_frame_; }
  StructType type_fsframe() const { return t_fsframe_; }
  StructType type_entry() const { return t_entry_; }
  StructType type_sentry() const { return t_sentry_; }
  StructType type_chain_node() const { return t_chain_; }

 private:
  friend class ModeInserter;
  std::atomic<void*>& ba_cell(BucketArray* ba, WorkerId w, HeapId heap, bool create);
  SubgoalFrame* new_frame(HeapId heap, WorkerId w, TrieNode* leaf,
                          const TableEntry* te, const SubgoalKey* key);
  FsFrame* new_fsframe(HeapId heap, WorkerId w, SubgoalEntry* se);
  void fill_subst(SubstInfo& s, const TableEntry* te, const SubgoalKey& key) const;
  bool private_chain_insert(FsFrame* f, TrieNode* leaf, HeapId heap);
  void free_private_chain(FsFrame* f, HeapId heap);
  bool purge_invalid_leaves(Trie& trie, HeapId heap);
  void destroy_frame(SubgoalFrame* f, HeapId heap);

  Design design_;
  PageAllocator* alloc_;
  TrieEnv env_;
  Arena arena_;
  std::vector<TableEntry*> entries_;
  std::map<uint64_t, TableEntry*> by_pred_;
  mutable std::mutex reg_mu_;

  StructType t_subgoal_node_, t_answer_node_, t_trie_hdr_, t_entry_, t_ba_,
      t_group_, t_frame_, t_sentry_, t_fsframe_, t_chain_, t_cell_, t_harray_;
};

}  // namespace tabkit
