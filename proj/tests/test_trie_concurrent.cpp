#include <atomic>
#include <mutex>
#include <random>
#include <set>
#include <thread>
#include <vector>

#include "doctest.h"
#include "tabkit/tablespace.hpp"
#include "tabkit/trie.hpp"

using namespace tabkit;

namespace {

struct ConcurrentFixture {
  PageAllocator alloc;
  Arena arena;
  TrieEnv env;
  Trie trie;

  explicit ConcurrentFixture(HashScheme scheme, unsigned nthreads)
      : alloc(AllocConfig{4096, false, nthreads + 1}) {
    StructType node_t = alloc.register_type("node", blk::kTrieNode);
    env.cell_type = alloc.register_type("cell", blk::kChainCell);
    env.harray_type = alloc.register_type("harray", blk::kHashArray);
    env.alloc = &alloc;
    env.arena = &arena;
    env.cfg.scheme = scheme;
    trie.init(node_t);
  }
};

std::vector<std::vector<Token>> random_sequences(size_t n, uint64_t seed,
                                                 int64_t alphabet, size_t max_len) {
  std::mt19937_64 rng(seed);
  std::set<std::vector<Token>> uniq;
  while (uniq.size() < n) {
    std::vector<Token> s;
    size_t len = 1 + rng() % max_len;
    for (size_t k = 0; k < len; ++k)
      s.push_back(tok::integer(static_cast<int64_t>(rng() % alphabet)));
    uniq.insert(std::move(s));
  }
  return {uniq.begin(), uniq.end()};
}

}  // namespace

TEST_CASE("exactly one inserter wins per distinct sequence across 8 threads") {
  for (HashScheme scheme : {HashScheme::HashTrie, HashScheme::Doubling}) {
    CAPTURE(static_cast<int>(scheme));
    const unsigned kThreads = 8;
    ConcurrentFixture f(scheme, kThreads);
    auto seqs = random_sequences(1000, 17, 40, 3);

    std::atomic<uint64_t> inserted_total{0};
    std::vector<std::thread> threads;
    for (unsigned w = 0; w < kThreads; ++w) {
      threads.emplace_back([&, w] {
        std::mt19937_64 rng(w);
        auto order = seqs;
        std::shuffle(order.begin(), order.end(), rng);
        uint64_t mine = 0;
        for (const auto& s : order) {
          auto r = f.trie.check_insert(f.env, w + 1, s, true);
          if (r.inserted) mine++;
        }
        inserted_total.fetch_add(mine);
      });
    }
    for (auto& t : threads) t.join();

    // sequential oracle on the same sequence set
    CHECK(inserted_total.load() == seqs.size());
    CHECK(f.trie.stats().leaves == seqs.size());
    CHECK(f.trie.leaves().size() == seqs.size());
    for (const auto& s : seqs) CHECK(f.trie.lookup(s) != nullptr);

    // distinct sequences map to distinct leaves
    std::set<const TrieNode*> leaves;
    for (const auto& s : seqs) leaves.insert(f.trie.lookup(s));
    CHECK(leaves.size() == seqs.size());

    for (unsigned w = 0; w < kThreads; ++w) f.alloc.release_thread(w + 1);
    f.alloc.adopt_all(0);
    f.trie.destroy(f.env, 0);
    CHECK(f.alloc.heap_stats().total_live_blocks() == 0);
  }
}

TEST_CASE("single-token keys hammered by 16 threads expand without loss") {
  const unsigned kThreads = 16;
  ConcurrentFixture f(HashScheme::HashTrie, kThreads);
  std::vector<std::vector<Token>> seqs;
  for (int64_t i = 0; i < 4000; ++i) seqs.push_back({tok::integer(i)});

  std::atomic<uint64_t> wins{0};
  std::vector<std::thread> threads;
  for (unsigned w = 0; w < kThreads; ++w) {
    threads.emplace_back([&, w] {
      std::mt19937_64 rng(w * 31 + 1);
      auto order = seqs;
      std::shuffle(order.begin(), order.end(), rng);
      uint64_t mine = 0;
      for (const auto& s : order)
        if (f.trie.check_insert(f.env, w + 1, s, true).inserted) mine++;
      wins.fetch_add(mine);
    });
  }
  for (auto& t : threads) t.join();
  CHECK(wins.load() == seqs.size());
  CHECK(f.trie.stats().leaves == seqs.size());
  for (const auto& s : seqs) CHECK(f.trie.lookup(s) != nullptr);
  for (unsigned w = 0; w < kThreads; ++w) f.alloc.release_thread(w + 1);
}

TEST_CASE("doubling expansion under concurrent writers keeps the union") {
  // 7 writer threads insert during expansions; final membership equals the
  // union of all inserted keys, nothing lost, nothing duplicated
  const unsigned kThreads = 7;
  ConcurrentFixture f(HashScheme::Doubling, kThreads);
  std::mutex mu;
  std::set<std::vector<Token>> oracle;
  std::vector<std::thread> threads;
  for (unsigned w = 0; w < kThreads; ++w) {
    threads.emplace_back([&, w] {
      std::mt19937_64 rng(w + 100);
      std::vector<std::vector<Token>> mine;
      for (int i = 0; i < 6000; ++i) {
        std::vector<Token> s{tok::integer(static_cast<int64_t>(rng() % 3000)),
                             tok::integer(static_cast<int64_t>(rng() % 7))};
        f.trie.check_insert(f.env, w + 1, s, true);
        mine.push_back(std::move(s));
      }
      std::lock_guard<std::mutex> g(mu);
      for (auto& s : mine) oracle.insert(std::move(s));
    });
  }
  for (auto& t : threads) t.join();
  CHECK(f.trie.stats().leaves == oracle.size());
  for (const auto& s : oracle) CHECK(f.trie.lookup(s) != nullptr);
  for (unsigned w = 0; w < kThreads; ++w) f.alloc.release_thread(w + 1);
}

TEST_CASE("lookups during installation find pre-existing children") {
  // readers race the chain -> hash transition: a snapshot inserted before
  // the expansion must stay visible throughout
  for (HashScheme scheme : {HashScheme::HashTrie, HashScheme::Doubling}) {
    ConcurrentFixture f(scheme, 4);
    std::vector<std::vector<Token>> snapshot;
    for (int64_t i = 0; i < 7; ++i) {
      snapshot.push_back({tok::integer(i)});
      f.trie.check_insert(f.env, 0, snapshot.back(), true);
    }
    std::atomic<bool> stop{false};
    std::atomic<bool> failed{false};
    std::thread reader([&] {
      while (!stop.load(std::memory_order_acquire)) {
        for (const auto& s : snapshot)
          if (f.trie.lookup(s) == nullptr) failed.store(true);
      }
    });
    std::thread writer([&] {
      for (int64_t i = 7; i < 2000; ++i) {
        Token t = tok::integer(i);
        f.trie.check_insert(f.env, 2, std::span<const Token>(&t, 1), true);
      }
    });
    writer.join();
    stop.store(true, std::memory_order_release);
    reader.join();
    CHECK_FALSE(failed.load());
    f.alloc.release_thread(2);
  }
}

TEST_CASE("mixed-operation stress equals a sequential set oracle") {
  for (HashScheme scheme : {HashScheme::HashTrie, HashScheme::Doubling}) {
    CAPTURE(static_cast<int>(scheme));
    const unsigned kThreads = 8;
    ConcurrentFixture f(scheme, kThreads);
    auto seqs = random_sequences(3000, 99, 25, 4);

    std::atomic<uint64_t> wins{0};
    std::vector<std::thread> threads;
    for (unsigned w = 0; w < kThreads; ++w) {
      threads.emplace_back([&, w] {
        std::mt19937_64 rng(w * 7 + 3);
        uint64_t mine = 0;
        for (int op = 0; op < 25000; ++op) {
          const auto& s = seqs[rng() % seqs.size()];
          if (rng() % 3 == 0) {
            f.trie.lookup(s);
          } else {
            if (f.trie.check_insert(f.env, w + 1, s, true).inserted) mine++;
          }
        }
        wins.fetch_add(mine);
      });
    }
    for (auto& t : threads) t.join();
    // exactly-one-inserter: total wins match the leaves actually present
    CHECK(wins.load() == f.trie.stats().leaves);
    CHECK(wins.load() == f.trie.leaves().size());
    for (unsigned w = 0; w < kThreads; ++w) f.alloc.release_thread(w + 1);
  }
}
