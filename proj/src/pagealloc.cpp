#include "tabkit/pagealloc.hpp"

#include <cstdlib>
#include <cstring>
#include <new>

namespace tabkit {

namespace {
thread_local uint32_t g_op_cost = 0;
inline bool is_pow2(size_t v) { return v && (v & (v - 1)) == 0; }
inline unsigned log2u(size_t v) {
  unsigned s = 0;
  while ((size_t{1} << s) < v) ++s;
  return s;
}
}  // namespace

struct PageAllocator::PageHdr {
  std::byte* payload;
  void* free_head;  // intrusive chain through the first word of each slot
  PageHdr* next;
  PageHdr* prev;
  uint32_t type;
  int32_t owner;
  uint32_t block_size;
  uint32_t capacity;
  uint32_t in_use;
  uint32_t bump;  // slots never yet handed out (lazy formatting)
  uint64_t* debug_bits;
};

struct PageAllocator::TypeLists {
  PageHdr* avail = nullptr;  // pages with at least one free slot
  PageHdr* full = nullptr;
  uint64_t pages = 0;
};

struct PageAllocator::Heap {
  std::vector<TypeLists> by_type;
  PageHdr* free_pages = nullptr;
  uint64_t free_count = 0;
};

namespace {
template <typename P>
inline void list_push(P*& head, P* p) {
  p->prev = nullptr;
  p->next = head;
  if (head) head->prev = p;
  head = p;
}
template <typename P>
inline void list_remove(P*& head, P* p) {
  if (p->prev)
    p->prev->next = p->next;
  else
    head = p->next;
  if (p->next) p->next->prev = p->prev;
  p->next = p->prev = nullptr;
}
}  // namespace

// payload address -> header; reads are lock-free, inserts happen under the
// global mutex (page creation only).
struct PageAllocator::PageDir {
  static constexpr unsigned kRootBits = 18;
  static constexpr unsigned kLeafBits = 18;
  static constexpr size_t kLeafSize = size_t{1} << kLeafBits;
  std::vector<std::atomic<std::atomic<PageHdr*>*>> root;
  unsigned shift;

  explicit PageDir(unsigned payload_shift)
      : root(size_t{1} << kRootBits), shift(payload_shift) {}
  ~PageDir() {
    for (auto& slot : root) delete[] slot.load(std::memory_order_relaxed);
  }
  void insert(std::byte* payload, PageHdr* hdr) {
    uintptr_t pn = reinterpret_cast<uintptr_t>(payload) >> shift;
    size_t i1 = (pn >> kLeafBits) & (root.size() - 1);
    auto* leaf = root[i1].load(std::memory_order_acquire);
    if (!leaf) {
      leaf = new std::atomic<PageHdr*>[kLeafSize]();
      root[i1].store(leaf, std::memory_order_release);
    }
    leaf[pn & (kLeafSize - 1)].store(hdr, std::memory_order_release);
  }
  PageHdr* find(const void* block) const {
    uintptr_t pn = reinterpret_cast<uintptr_t>(block) >> shift;
    size_t i1 = (pn >> kLeafBits) & (root.size() - 1);
    auto* leaf = root[i1].load(std::memory_order_acquire);
    if (!leaf) return nullptr;
    return leaf[pn & (kLeafSize - 1)].load(std::memory_order_acquire);
  }
};

PageAllocator::PageAllocator(AllocConfig cfg)
    : cfg_(cfg), live_counts_(64) {
  if (!is_pow2(cfg_.page_payload) || cfg_.page_payload < 256)
    throw config_error("page payload must be a power of two >= 256");
  payload_shift_ = log2u(cfg_.page_payload);
  heaps_.resize(cfg_.max_threads + 1);
  for (auto& h : heaps_) h = new Heap;
  dir_ = new PageDir(static_cast<unsigned>(payload_shift_));
}

PageAllocator::~PageAllocator() {
  std::vector<PageHdr*> all;
  auto collect = [&](PageHdr* head) {
    for (PageHdr* p = head; p; p = p->next) all.push_back(p);
  };
  for (auto* h : heaps_) {
    for (auto& tl : h->by_type) {
      collect(tl.avail);
      collect(tl.full);
    }
    collect(h->free_pages);
  }
  for (auto* head : global_typed_) collect(head);
  collect(global_free_);
  for (PageHdr* p : all) {
    std::free(p->payload);
    delete[] p->debug_bits;
    delete p;
  }
  for (auto* h : heaps_) delete h;
  delete dir_;
}

StructType PageAllocator::register_type(const std::string& name, size_t block_size) {
  if (block_size < sizeof(void*) || block_size > cfg_.page_payload)
    throw config_error("bad block size for type " + name);
  if (types_.size() >= live_counts_.size())
    throw config_error("too many structure types");
  types_.push_back(TypeInfo{name, block_size, cfg_.page_payload / block_size});
  StructType id = static_cast<StructType>(types_.size() - 1);
  for (auto* h : heaps_) h->by_type.resize(types_.size());
  global_typed_.resize(types_.size(), nullptr);
  return id;
}

size_t PageAllocator::block_size(StructType t) const { return types_.at(t).block_size; }
const std::string& PageAllocator::type_name(StructType t) const {
  return types_.at(t).name;
}

PageAllocator::PageHdr* PageAllocator::page_of(void* block) const {
  void* base = reinterpret_cast<void*>(reinterpret_cast<uintptr_t>(block) &
                                       ~(uintptr_t(cfg_.page_payload) - 1));
  PageHdr* p = dir_->find(base);
  if (!p || p->payload != base)
    throw contract_error("free of a block outside any page");
  return p;
}

PageAllocator::PageHdr* PageAllocator::new_host_page() {
  void* mem = std::aligned_alloc(cfg_.page_payload, cfg_.page_payload);
  if (!mem) throw resource_error("host out of memory");
  PageHdr* p = new PageHdr{};
  p->payload = static_cast<std::byte*>(mem);
  p->type = kFreePage;
  p->owner = kGlobalOwner;
  total_pages_.fetch_add(1, std::memory_order_relaxed);
  {
    // the directory is written only while holding the global mutex
    dir_->insert(p->payload, p);
  }
  return p;
}

void PageAllocator::format_page(PageHdr* p, StructType type) {
  const TypeInfo& ti = types_[type];
  p->type = type;
  p->block_size = static_cast<uint32_t>(ti.block_size);
  p->capacity = static_cast<uint32_t>(ti.capacity);
  p->in_use = 0;
  p->bump = 0;
  p->free_head = nullptr;
  if (cfg_.debug_accounting) {
    size_t words = (ti.capacity + 63) / 64;
    if (!p->debug_bits) p->debug_bits = new uint64_t[words]();
    else std::memset(p->debug_bits, 0, words * 8);
  }
}

// Cold path: no local page of `type` has a free slot. Order of preference:
// local free page, typed global page, free global page, host.
PageAllocator::PageHdr* PageAllocator::take_page_for(HeapId tid, StructType type) {
  Heap& h = *heaps_.at(tid);
  if (h.free_pages) {
    PageHdr* p = h.free_pages;
    list_remove(h.free_pages, p);
    h.free_count--;
    format_page(p, type);
    return p;
  }
  {
    std::lock_guard<std::mutex> g(global_mu_);
    PageHdr*& typed = global_typed_[type];
    if (typed) {
      PageHdr* p = typed;
      list_remove(typed, p);
      p->owner = static_cast<int32_t>(tid);
      return p;
    }
    if (global_free_) {
      PageHdr* p = global_free_;
      list_remove(global_free_, p);
      global_free_count_--;
      p->owner = static_cast<int32_t>(tid);
      format_page(p, type);
      return p;
    }
    PageHdr* p = new_host_page();
    p->owner = static_cast<int32_t>(tid);
    format_page(p, type);
    return p;
  }
}

void* PageAllocator::alloc_block(HeapId tid, StructType type) {
  g_op_cost = 1;
  Heap& h = *heaps_.at(tid);
  TypeLists& tl = h.by_type.at(type);
  PageHdr* p = tl.avail;
  if (!p) {
    p = take_page_for(tid, type);
    list_push(tl.avail, p);
    tl.pages++;
  }
  void* slot;
  if (p->free_head) {
    slot = p->free_head;
    p->free_head = *reinterpret_cast<void**>(slot);
  } else {
    slot = p->payload + size_t{p->bump} * p->block_size;
    p->bump++;
  }
  p->in_use++;
  if (p->in_use == p->capacity && p->bump == p->capacity) {
    list_remove(tl.avail, p);
    list_push(tl.full, p);
    g_op_cost++;
  }
  live_counts_[type].fetch_add(1, std::memory_order_relaxed);
  if (cfg_.debug_accounting) {
    size_t idx = (static_cast<std::byte*>(slot) - p->payload) / p->block_size;
    uint64_t& w = p->debug_bits[idx / 64];
    if (w & (uint64_t{1} << (idx % 64)))
      throw contract_error("allocator bitmap corruption");
    w |= uint64_t{1} << (idx % 64);
  }
  return slot;
}

void PageAllocator::free_block(HeapId tid, void* block) {
  g_op_cost = 1;
  PageHdr* p = page_of(block);
  if (p->owner != static_cast<int32_t>(tid))
    throw contract_error("free on a page owned by another thread (adopt first)");
  if (p->type == kFreePage) throw contract_error("free into an unformatted page");
  if (cfg_.debug_accounting) {
    size_t idx = (static_cast<std::byte*>(block) - p->payload) / p->block_size;
    uint64_t& w = p->debug_bits[idx / 64];
    if (!(w & (uint64_t{1} << (idx % 64)))) throw contract_error("double free");
    w &= ~(uint64_t{1} << (idx % 64));
  }
  Heap& h = *heaps_.at(tid);
  TypeLists& tl = h.by_type.at(p->type);
  if (p->in_use == p->capacity && p->bump == p->capacity) {
    list_remove(tl.full, p);
    list_push(tl.avail, p);
    g_op_cost++;
  }
  *reinterpret_cast<void**>(block) = p->free_head;
  p->free_head = block;
  p->in_use--;
  live_counts_[p->type].fetch_sub(1, std::memory_order_relaxed);
  if (p->in_use == 0) {
    list_remove(tl.avail, p);
    tl.pages--;
    p->type = kFreePage;
    p->free_head = nullptr;
    list_push(h.free_pages, p);
    h.free_count++;
    g_op_cost++;
  }
}

void PageAllocator::release_thread(HeapId tid) {
  Heap& h = *heaps_.at(tid);
  std::lock_guard<std::mutex> g(global_mu_);
  for (StructType t = 0; t < h.by_type.size(); ++t) {
    TypeLists& tl = h.by_type[t];
    auto migrate = [&](PageHdr*& head) {
      while (head) {
        PageHdr* p = head;
        list_remove(head, p);
        p->owner = kGlobalOwner;
        list_push(global_typed_[t], p);
      }
    };
    migrate(tl.avail);
    migrate(tl.full);
    tl.pages = 0;
  }
  while (h.free_pages) {
    PageHdr* p = h.free_pages;
    list_remove(h.free_pages, p);
    p->owner = kGlobalOwner;
    list_push(global_free_, p);
    global_free_count_++;
  }
  h.free_count = 0;
}

size_t PageAllocator::adopt_pages(HeapId tid, StructType type) {
  Heap& h = *heaps_.at(tid);
  size_t n = 0;
  std::lock_guard<std::mutex> g(global_mu_);
  PageHdr*& typed = global_typed_.at(type);
  while (typed) {
    PageHdr* p = typed;
    list_remove(typed, p);
    p->owner = static_cast<int32_t>(tid);
    TypeLists& tl = h.by_type.at(type);
    if (p->in_use == p->capacity && p->bump == p->capacity)
      list_push(tl.full, p);
    else
      list_push(tl.avail, p);
    tl.pages++;
    n++;
  }
  return n;
}

size_t PageAllocator::adopt_all(HeapId tid) {
  size_t n = 0;
  for (StructType t = 0; t < types_.size(); ++t) n += adopt_pages(tid, t);
  return n;
}

HeapStats PageAllocator::heap_stats() const {
  HeapStats st;
  st.per_type.resize(types_.size());
  st.page_payload = cfg_.page_payload;
  st.total_pages = total_pages_.load(std::memory_order_relaxed);
  std::lock_guard<std::mutex> g(global_mu_);
  for (size_t t = 0; t < types_.size(); ++t) {
    TypeStats& ts = st.per_type[t];
    for (auto* h : heaps_)
      if (t < h->by_type.size()) ts.local_pages += h->by_type[t].pages;
    for (PageHdr* p = global_typed_[t]; p; p = p->next) ts.global_pages++;
    ts.live_blocks = live_counts_[t].load(std::memory_order_relaxed);
    uint64_t pages = ts.local_pages + ts.global_pages;
    ts.bytes = pages * cfg_.page_payload;
    ts.waste_bytes =
        pages * (cfg_.page_payload - types_[t].capacity * types_[t].block_size);
  }
  for (auto* h : heaps_) st.free_local_pages += h->free_count;
  st.free_global_pages = global_free_count_;
  return st;
}

uint32_t PageAllocator::last_op_cost() { return g_op_cost; }

}  // namespace tabkit
