#include "tabkit/pagealloc.hpp"

#include <atomic>
#include <random>
#include <thread>
#include <vector>

#include "doctest.h"

using namespace tabkit;

TEST_CASE("64-byte blocks pack 64 per page; 100 allocations span two pages") {
  PageAllocator a;
  StructType t = a.register_type("node", 64);
  std::vector<void*> blocks;
  for (int i = 0; i < 100; ++i) blocks.push_back(a.alloc_block(1, t));
  HeapStats st = a.heap_stats();
  CHECK(st.per_type[t].local_pages == 2);
  CHECK(st.per_type[t].live_blocks == 100);
  CHECK(st.total_pages == 2);
  for (void* b : blocks) a.free_block(1, b);
  CHECK(a.heap_stats().per_type[t].live_blocks == 0);
}

TEST_CASE("first allocation turns exactly one free page into a typed page") {
  PageAllocator a;
  StructType t = a.register_type("node", 40);
  CHECK(a.heap_stats().total_pages == 0);
  void* b = a.alloc_block(2, t);
  HeapStats st = a.heap_stats();
  CHECK(st.total_pages == 1);
  CHECK(st.per_type[t].local_pages == 1);
  a.free_block(2, b);
}

TEST_CASE("freed slots are reused LIFO") {
  PageAllocator a;
  StructType t = a.register_type("node", 48);
  void* b1 = a.alloc_block(1, t);
  void* b2 = a.alloc_block(1, t);
  a.free_block(1, b2);
  void* b3 = a.alloc_block(1, t);
  CHECK(b3 == b2);
  a.free_block(1, b1);
  a.free_block(1, b3);
}

TEST_CASE("a fully freed page joins the free-page chain and can be retyped") {
  AllocConfig cfg;
  cfg.page_payload = 512;
  PageAllocator a(cfg);
  StructType t64 = a.register_type("t64", 64);
  StructType t32 = a.register_type("t32", 32);
  std::vector<void*> blocks;
  for (int i = 0; i < 8; ++i) blocks.push_back(a.alloc_block(1, t64));
  CHECK(a.heap_stats().per_type[t64].local_pages == 1);
  for (int i = 0; i < 7; ++i) a.free_block(1, blocks[i]);
  // one block still live: page stays typed
  CHECK(a.heap_stats().per_type[t64].local_pages == 1);
  a.free_block(1, blocks[7]);
  HeapStats st = a.heap_stats();
  CHECK(st.per_type[t64].local_pages == 0);
  CHECK(st.free_local_pages == 1);
  // reassignment to a different type reuses the page, no host request
  void* b = a.alloc_block(1, t32);
  st = a.heap_stats();
  CHECK(st.total_pages == 1);
  CHECK(st.per_type[t32].local_pages == 1);
  a.free_block(1, b);
}

TEST_CASE("release_thread migrates local pages to the global heap") {
  AllocConfig cfg;
  cfg.page_payload = 512;
  PageAllocator a(cfg);
  StructType t = a.register_type("t", 64);
  StructType u = a.register_type("u", 32);
  std::vector<void*> keep;
  for (int i = 0; i < 20; ++i) keep.push_back(a.alloc_block(3, t));  // 3 pages
  void* tmp = a.alloc_block(3, u);
  a.free_block(3, tmp);  // one free local page
  HeapStats st = a.heap_stats();
  CHECK(st.per_type[t].local_pages == 3);
  CHECK(st.free_local_pages == 1);
  a.release_thread(3);
  st = a.heap_stats();
  CHECK(st.per_type[t].local_pages == 0);
  CHECK(st.per_type[t].global_pages == 3);
  CHECK(st.free_local_pages == 0);
  CHECK(st.free_global_pages == 1);
  CHECK(st.total_pages == 4);  // conservation

  SUBCASE("adopt_pages re-owns them") {
    CHECK(a.adopt_pages(0, t) == 3);
    CHECK(a.heap_stats().per_type[t].local_pages == 3);
    CHECK(a.adopt_pages(0, t) == 0);
    for (void* b : keep) a.free_block(0, b);
  }
}

TEST_CASE("release with zero pages is a no-op") {
  PageAllocator a;
  a.register_type("t", 64);
  a.release_thread(5);
  CHECK(a.heap_stats().total_pages == 0);
}

TEST_CASE("typed global pages are preferred, then free pages, then the host") {
  AllocConfig cfg;
  cfg.page_payload = 512;
  PageAllocator a(cfg);
  StructType t = a.register_type("t", 64);
  void* b = a.alloc_block(1, t);
  a.release_thread(1);  // page (with a live block) goes global
  CHECK(a.heap_stats().per_type[t].global_pages == 1);
  void* b2 = a.alloc_block(2, t);  // must adopt the global typed page
  HeapStats st = a.heap_stats();
  CHECK(st.total_pages == 1);
  CHECK(st.per_type[t].global_pages == 0);
  CHECK(st.per_type[t].local_pages == 1);
  a.free_block(2, b);
  a.free_block(2, b2);
}

TEST_CASE("debug accounting catches double free and foreign free") {
  AllocConfig cfg;
  cfg.debug_accounting = true;
  PageAllocator a(cfg);
  StructType t = a.register_type("t", 64);
  void* b = a.alloc_block(1, t);
  CHECK_THROWS_AS(a.free_block(2, b), contract_error);  // wrong owner
  a.free_block(1, b);
  CHECK_THROWS_AS(a.free_block(1, b), contract_error);  // double free
}

TEST_CASE("alloc and free are constant-time chain operations") {
  PageAllocator a;
  StructType t = a.register_type("t", 64);
  std::vector<void*> blocks;
  uint32_t worst = 0;
  for (int i = 0; i < 10000; ++i) {
    blocks.push_back(a.alloc_block(1, t));
    worst = std::max(worst, PageAllocator::last_op_cost());
  }
  for (void* b : blocks) {
    a.free_block(1, b);
    worst = std::max(worst, PageAllocator::last_op_cost());
  }
  // no operation walks blocks: a bounded number of chain moves only
  CHECK(worst <= 3);
}

TEST_CASE("page conservation holds under concurrent churn") {
  AllocConfig cfg;
  cfg.page_payload = 512;
  cfg.max_threads = 8;
  PageAllocator a(cfg);
  StructType t = a.register_type("t", 64);
  std::atomic<bool> stop{false};
  std::vector<std::thread> threads;
  for (unsigned w = 1; w <= 4; ++w) {
    threads.emplace_back([&, w] {
      std::mt19937_64 rng(w);
      std::vector<void*> mine;
      for (int i = 0; i < 20000; ++i) {
        if (mine.empty() || rng() % 2) {
          mine.push_back(a.alloc_block(w, t));
        } else {
          a.free_block(w, mine.back());
          mine.pop_back();
        }
        if (i % 4096 == 0) a.adopt_pages(w, t);
      }
      for (void* b : mine) a.free_block(w, b);
      a.release_thread(w);
    });
  }
  for (auto& th : threads) th.join();
  (void)stop;
  HeapStats st = a.heap_stats();
  CHECK(st.per_type[t].live_blocks == 0);
  CHECK(st.per_type[t].local_pages == 0);
  // every page is accounted for: typed global + free pools == total
  CHECK(st.per_type[t].global_pages + st.free_global_pages + st.free_local_pages ==
        st.total_pages);
}
