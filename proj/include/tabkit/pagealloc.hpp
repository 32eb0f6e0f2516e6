#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include "tabkit/config.hpp"

namespace tabkit {

// Owner id of a thread-local heap. Heap 0 belongs to the orchestrating
// (main) thread; workers use 1..max_threads.
using HeapId = unsigned;
inline constexpr int kGlobalOwner = -1;

using StructType = uint32_t;
inline constexpr StructType kFreePage = 0xffffffffu;

struct TypeStats {
  uint64_t local_pages = 0;
  uint64_t global_pages = 0;
  uint64_t live_blocks = 0;
  uint64_t bytes = 0;        // pages * page payload
  uint64_t waste_bytes = 0;  // unused page tails
};

struct HeapStats {
  std::vector<TypeStats> per_type;
  uint64_t free_local_pages = 0;
  uint64_t free_global_pages = 0;
  uint64_t total_pages = 0;  // monotone; changes only via host requests
  uint64_t page_payload = 0;

  uint64_t live_blocks(StructType t) const { return per_type.at(t).live_blocks; }
  uint64_t total_live_blocks() const {
    uint64_t n = 0;
    for (auto& s : per_type) n += s.live_blocks;
    return n;
  }
  uint64_t typed_pages() const {
    uint64_t n = 0;
    for (auto& s : per_type) n += s.local_pages + s.global_pages;
    return n;
  }
};

// Fixed-size user-level allocator: per-thread local heaps plus one global
// heap, pages formatted in same-size blocks of a single structure type.
// Local operations are single-owner and constant-time; only page transfers
// to and from the global heap synchronize.
class PageAllocator {
 public:
  explicit PageAllocator(AllocConfig cfg = {});
  ~PageAllocator();

  PageAllocator(const PageAllocator&) = delete;
  PageAllocator& operator=(const PageAllocator&) = delete;

  // Registration fixes block sizes before any allocation. Returns the type id.
  StructType register_type(const std::string& name, size_t block_size);
  size_t block_size(StructType t) const;
  const std::string& type_name(StructType t) const;
  size_t num_types() const { return types_.size(); }

  void* alloc_block(HeapId tid, StructType type);
  void free_block(HeapId tid, void* block);

  // Moves every page still owned by `tid` to the global heap.
  void release_thread(HeapId tid);
  // Re-owns all global pages of `type`; returns the number adopted.
  size_t adopt_pages(HeapId tid, StructType type);
  size_t adopt_all(HeapId tid);

  HeapStats heap_stats() const;

  const AllocConfig& config() const { return cfg_; }

  // Chain operations performed by the last alloc/free on this thread;
  // the fast-path constancy test asserts a fixed bound.
  static uint32_t last_op_cost();

 private:
  struct PageHdr;
  struct TypeLists;
  struct Heap;
  struct PageDir;

  PageHdr* page_of(void* block) const;
  PageHdr* take_page_for(HeapId tid, StructType type);
  PageHdr* new_host_page();
  void format_page(PageHdr* p, StructType type);

  AllocConfig cfg_;
  size_t payload_shift_ = 0;
  struct TypeInfo {
    std::string name;
    size_t block_size;
    size_t capacity;  // blocks per page
  };
  std::vector<TypeInfo> types_;
  std::vector<Heap*> heaps_;
  mutable std::mutex global_mu_;
  std::vector<PageHdr*> global_typed_;  // guarded by global_mu_
  PageHdr* global_free_ = nullptr;      // guarded by global_mu_
  uint64_t global_free_count_ = 0;      // guarded by global_mu_
  std::atomic<uint64_t> total_pages_{0};
  std::vector<std::atomic<uint64_t>> live_counts_;
  PageDir* dir_;
};

}  // namespace tabkit
