#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <mutex>
#include <span>
#include <vector>

#include "tabkit/config.hpp"
#include "tabkit/pagealloc.hpp"
#include "tabkit/term.hpp"

namespace tabkit {

// Bump arena backing the doubling scheme's variable-size bucket arrays.
// The doubling scheme does not fit the fixed-size allocator; its arrays and
// cells live here and are reclaimed wholesale.
class Arena {
 public:
  Arena() = default;
  ~Arena() { reset(); }
  void* alloc(size_t bytes);
  void reset();
  uint64_t bytes_allocated() const { return used_.load(std::memory_order_relaxed); }

 private:
  struct Chunk {
    Chunk* next;
    std::atomic<size_t> off;
    size_t cap;
  };
  std::atomic<Chunk*> head_{nullptr};
  std::atomic<uint64_t> used_{0};
  std::mutex grow_mu_;
};

struct TrieEnv {
  PageAllocator* alloc = nullptr;
  StructType cell_type = 0;
  StructType harray_type = 0;
  TrieConfig cfg;
  Arena* arena = nullptr;
};

struct TrieNode;

// Sibling chain cell. Immutable once published, which lets a compare-and-
// exchange of a chain head validate the entire chain behind it.
struct ChainCell {
  TrieNode* node;
  ChainCell* next;
};
static_assert(sizeof(ChainCell) == 16);

inline constexpr unsigned kHashFanout = 8;  // 2^w with w = 3

// One fixed-size level of the hash-trie scheme.
struct HashArray {
  std::atomic<uintptr_t> entry[kHashFanout];
};
static_assert(sizeof(HashArray) == 64);

// Bucket array of the doubling scheme; allocated from the arena.
struct DoublingHash {
  uint32_t size;
  std::atomic<uint32_t> total;  // nodes under this array (expansion trigger)
  std::atomic<DoublingHash*> next_version;
  std::atomic<uintptr_t> buckets[1];  // trailing array of `size` entries

  static size_t bytes_for(uint32_t size) {
    return sizeof(DoublingHash) + (size - 1) * sizeof(std::atomic<uintptr_t>);
  }
};

inline constexpr Token kRootToken = ~Token{0};

// next_leaf low bits
inline constexpr uintptr_t kLeafBit = 1;     // node terminates an inserted sequence
inline constexpr uintptr_t kInvalidBit = 2;  // invalidated answer, skipped by consumers
inline constexpr uintptr_t kLeafPtrMask = ~uintptr_t{7};

struct TrieNode {
  Token token;
  TrieNode* parent;
  // Child level, tagged: chain cell / direct node / hash array / doubling hash.
  std::atomic<uintptr_t> children;
  // Leaf-list link plus leaf/invalid flags. Subgoal tries leave the pointer
  // bits to the table-space design (PAS completion slot).
  std::atomic<uintptr_t> next_leaf;
  // Leaf payload: design structure pointer (subgoal leaves) or the current
  // answer leaf of a mode-directed group (interior group nodes).
  std::atomic<uintptr_t> aux;

  bool is_leaf() const { return next_leaf.load(std::memory_order_acquire) & kLeafBit; }
  bool is_invalid() const {
    return next_leaf.load(std::memory_order_acquire) & kInvalidBit;
  }
  TrieNode* leaf_next() const {
    return reinterpret_cast<TrieNode*>(next_leaf.load(std::memory_order_acquire) &
                                       kLeafPtrMask);
  }
};
static_assert(sizeof(TrieNode) == 40);

enum class LevelKind : uint8_t { Empty, Chain, HashTrie, Doubling };

struct TrieStats {
  uint64_t nodes = 0;   // includes one root node when the trie is non-empty
  uint64_t leaves = 0;  // invalid-tagged leaves still count until removed
  uint64_t min_depth = 0;
  uint64_t max_depth = 0;
  double avg_depth = 0.0;
  uint64_t depth_total = 0;
};

// Insertion-ordered list of answer leaves. The trie root doubles as the
// queue dummy node.
struct LeafList {
  std::atomic<TrieNode*> tail{nullptr};
  std::atomic<uint64_t> count{0};

  void append(TrieNode* root, TrieNode* leaf);
  uint64_t size() const { return count.load(std::memory_order_acquire); }
};

// Shared trie with per-level hash mechanisms. Lookups and inserts are
// lock-free under full concurrency; at most one expander works on a level
// or bucket at a time (claim bit / next-version pointer). stats, destroy
// and the single-writer editing helpers require external quiescence.
class Trie {
 public:
  void init(StructType node_type, uint8_t hash_bits = 3) {
    node_type_ = node_type;
    hash_bits_ = hash_bits;
    root_.store(nullptr, std::memory_order_relaxed);
    retired_.store(nullptr, std::memory_order_relaxed);
    leaves_.tail.store(nullptr, std::memory_order_relaxed);
    leaves_.count.store(0, std::memory_order_relaxed);
  }

  TrieNode* root() const { return root_.load(std::memory_order_acquire); }
  LeafList& leaves() { return leaves_; }
  const LeafList& leaves() const { return leaves_; }
  StructType node_type() const { return node_type_; }

  struct InsertResult {
    TrieNode* leaf;
    bool inserted;
  };

  // Single-pass lookup-or-insert of a token sequence. `append_list` links a
  // freshly inserted leaf onto the leaf list (answer tries; PAC defers).
  InsertResult check_insert(TrieEnv& env, HeapId tid, std::span<const Token> tokens,
                            bool append_list);
  TrieNode* lookup(std::span<const Token> tokens) const;

  // Ensures the root exists (first-insert path shares this).
  TrieNode* ensure_root(TrieEnv& env, HeapId tid);

  // Child-level operations; each walks one token.
  TrieNode* find_or_insert_child(TrieEnv& env, HeapId tid, TrieNode* parent,
                                 Token token, bool* created);
  TrieNode* find_child(const TrieNode* parent, Token token) const;

  static LevelKind level_kind(const TrieNode* parent);

  // Quiescent traversal of all children of a node.
  static void for_each_child(const TrieNode* parent,
                             const std::function<void(TrieNode*)>& fn);

  TrieStats stats() const;

  // Single-writer editing (mode-directed invalidation): detaches `child`
  // from `parent`'s level. Quiescent or private tries only.
  void remove_child(TrieEnv& env, HeapId tid, TrieNode* parent, TrieNode* child);
  static size_t count_children(const TrieNode* parent, size_t limit);

  // Frees every node, cell and hash array of this trie, including orphaned
  // invalid leaves reachable only through the leaf list.
  void destroy(TrieEnv& env, HeapId tid);

  uint64_t leaf_count() const { return leaves_.size(); }

 private:
  TrieNode* new_node(TrieEnv& env, HeapId tid, Token token, TrieNode* parent);
  ChainCell* new_cell(TrieEnv& env, HeapId tid, TrieNode* n, ChainCell* next);
  void retire_chain(TrieEnv& env, HeapId tid, ChainCell* head);
  TrieNode* level_insert(TrieEnv& env, HeapId tid, std::atomic<uintptr_t>* slot,
                         TrieNode* parent, Token token, bool* created);
  TrieNode* harray_insert(TrieEnv& env, HeapId tid, HashArray* ha, TrieNode* parent,
                          Token token, uint64_t h, unsigned shift, bool* created);
  TrieNode* doubling_insert(TrieEnv& env, HeapId tid, std::atomic<uintptr_t>* owner,
                            DoublingHash* dh, TrieNode* parent, Token token,
                            uint64_t h, bool* created);
  void doubling_migrate(TrieEnv& env, HeapId tid, std::atomic<uintptr_t>* owner,
                        DoublingHash* dh, TrieNode* parent);
  TrieNode* install_hash(TrieEnv& env, HeapId tid, std::atomic<uintptr_t>* slot,
                         uintptr_t claimed, TrieNode* parent, Token token,
                         bool* created);

  std::atomic<TrieNode*> root_{nullptr};
  std::atomic<ChainCell*> retired_{nullptr};
  LeafList leaves_;
  StructType node_type_ = 0;
  uint8_t hash_bits_ = 3;
};
static_assert(sizeof(Trie) <= 48);

uint64_t token_hash(Token t);

}  // namespace tabkit
