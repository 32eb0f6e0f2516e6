#include "tabkit/tablespace.hpp"

#include <set>
#include <thread>

#include "doctest.h"

using namespace tabkit;

namespace {

struct Space {
  PageAllocator alloc;
  TableSpace ts;

  explicit Space(Design d, unsigned nthreads = 8)
      : alloc(AllocConfig{4096, false, nthreads + 1}), ts(d, TrieConfig{}, alloc) {}
};

SubgoalKey key_of(const char* pred, std::vector<Token> toks, uint32_t nvars) {
  SubgoalKey k;
  k.pred = predicate_id(SymbolTable::intern(pred), static_cast<uint32_t>(toks.size()));
  k.tokens = std::move(toks);
  k.nvars = nvars;
  return k;
}

std::vector<Token> ans(std::initializer_list<int64_t> xs) {
  std::vector<Token> out;
  for (int64_t x : xs) out.push_back(tok::integer(x));
  return out;
}

uint64_t stream_valid_count(const TableSpace::Stream& s) {
  uint64_t n = 0;
  if (s.pac_frame) {
    for (auto* c = s.pac_frame->chain_head; c; c = c->next)
      if (!c->leaf->is_invalid()) n++;
    return n;
  }
  if (!s.trie || !s.trie->root()) return 0;
  for (const TrieNode* l = s.trie->root()->leaf_next(); l; l = l->leaf_next())
    if (!l->is_invalid()) n++;
  return n;
}

}  // namespace

TEST_CASE("registration is once per predicate and read-only afterwards") {
  Space sp(Design::SS);
  uint64_t pred = predicate_id(SymbolTable::intern("path"), 2);
  TableEntry* te = sp.ts.register_predicate(pred);
  CHECK(te->pred == pred);
  CHECK_THROWS_AS(sp.ts.register_predicate(pred), contract_error);
  CHECK(sp.ts.find_predicate(pred) == te);

  // arity 0 is a valid degenerate entry
  uint64_t p0 = predicate_id(SymbolTable::intern("flag"), 0);
  TableEntry* t0 = sp.ts.register_predicate(p0);
  SubgoalHandle h = sp.ts.subgoal_lookup_insert(t0, key_of("flag", {}, 0), 0);
  CHECK(h.frame != nullptr);
}

TEST_CASE("mode arrays are stored on the entry") {
  Space sp(Design::PAS);
  uint64_t pred = predicate_id(SymbolTable::intern("ks"), 3);
  Mode modes[3] = {Mode::Index, Mode::Index, Mode::Max};
  TableEntry* te = sp.ts.register_predicate(pred, modes);
  CHECK(te->moded);
  CHECK(te->modes[2] == Mode::Max);
}

TEST_CASE("mode-directed registration is rejected under FS and PAC") {
  Mode modes[2] = {Mode::Index, Mode::Max};
  for (Design d : {Design::FS, Design::PAC}) {
    Space sp(d);
    uint64_t pred = predicate_id(SymbolTable::intern("m2"), 2);
    CHECK_THROWS_AS(sp.ts.register_predicate(pred, modes), config_error);
  }
}

TEST_CASE("NS gives each thread fully private tables") {
  Space sp(Design::NS);
  TableEntry* te =
      sp.ts.register_predicate(predicate_id(SymbolTable::intern("p"), 2));
  SubgoalKey k = key_of("p", {tok::integer(1), tok::var(0)}, 1);
  SubgoalHandle h1 = sp.ts.subgoal_lookup_insert(te, k, 0);
  SubgoalHandle h2 = sp.ts.subgoal_lookup_insert(te, k, 1);
  CHECK(h1.frame != h2.frame);
  CHECK(h1.leaf != h2.leaf);  // separate private subgoal tries
  sp.ts.record_answer(h1, ans({5}), 0);
  CHECK(stream_valid_count(sp.ts.answer_stream(h2)) == 0);  // no sharing

  Census c = sp.ts.census();
  REQUIRE(c.preds.size() == 1);
  CHECK(c.preds[0].st_tries == 2);
  REQUIRE(c.preds[0].calls.size() == 1);
  CHECK(c.preds[0].calls[0].frames == 2);
}

TEST_CASE("FS shares the subgoal path, entry and answer trie") {
  Space sp(Design::FS);
  TableEntry* te =
      sp.ts.register_predicate(predicate_id(SymbolTable::intern("p"), 2));
  SubgoalKey k = key_of("p", {tok::integer(1), tok::var(0)}, 1);
  SubgoalHandle h1 = sp.ts.subgoal_lookup_insert(te, k, 0);
  SubgoalHandle h2 = sp.ts.subgoal_lookup_insert(te, k, 1);
  CHECK(h1.leaf == h2.leaf);
  CHECK(h1.se == h2.se);
  CHECK(h1.fsframe != h2.fsframe);
  auto r1 = sp.ts.record_answer(h1, ans({5}), 0);
  CHECK(r1.new_in_trie);
  // the answer is immediately visible to the other thread
  CHECK(stream_valid_count(sp.ts.answer_stream(h2)) == 1);

  Census c = sp.ts.census();
  REQUIRE(c.preds[0].calls.size() == 1);
  CHECK(c.preds[0].calls[0].entries == 1);
  CHECK(c.preds[0].calls[0].frames == 2);
  CHECK(c.preds[0].st_tries == 1);
}

TEST_CASE("record_answer discriminates repeats per design") {
  for (Design d : {Design::NS, Design::SS, Design::PAS, Design::FS, Design::PAC}) {
    CAPTURE(to_string(d));
    Space sp(d);
    TableEntry* te =
        sp.ts.register_predicate(predicate_id(SymbolTable::intern("p"), 1));
    SubgoalKey k = key_of("p", {tok::var(0)}, 1);
    SubgoalHandle h = sp.ts.subgoal_lookup_insert(te, k, 0);
    auto r1 = sp.ts.record_answer(h, ans({1}), 0);
    auto r2 = sp.ts.record_answer(h, ans({1}), 0);
    CHECK(r1.new_for_thread);
    CHECK(r1.new_in_trie);
    CHECK_FALSE(r2.new_for_thread);  // same thread re-derives: repeated
    CHECK_FALSE(r2.new_in_trie);
  }
}

TEST_CASE("PAC splits propagation from representation") {
  Space sp(Design::PAC);
  TableEntry* te =
      sp.ts.register_predicate(predicate_id(SymbolTable::intern("p"), 1));
  SubgoalKey k = key_of("p", {tok::var(0)}, 1);
  SubgoalHandle ha = sp.ts.subgoal_lookup_insert(te, k, 0);
  SubgoalHandle hb = sp.ts.subgoal_lookup_insert(te, k, 1);
  auto ra = sp.ts.record_answer(ha, ans({7}), 0);
  CHECK(ra.new_in_trie);
  CHECK(ra.new_for_thread);
  // thread B first derives the same answer: already represented in the
  // shared trie, but new for B's propagation
  auto rb = sp.ts.record_answer(hb, ans({7}), 1);
  CHECK_FALSE(rb.new_in_trie);
  CHECK(rb.new_for_thread);
  auto rb2 = sp.ts.record_answer(hb, ans({7}), 1);
  CHECK_FALSE(rb2.new_for_thread);  // re-derivation: repeated for B

  // pre-completion each thread consumes its own chain only
  sp.ts.record_answer(ha, ans({8}), 0);
  CHECK(stream_valid_count(sp.ts.answer_stream(ha)) == 2);
  CHECK(stream_valid_count(sp.ts.answer_stream(hb)) == 1);

  // exactly one thread chains the leaves publicly at completion
  sp.ts.complete_subgoal(ha, 0);
  sp.ts.refresh_completion(hb, 1, nullptr);
  CHECK(sp.ts.is_complete(hb));
  auto s = sp.ts.answer_stream(hb);
  CHECK(s.pac_frame == nullptr);  // public chain now
  CHECK(stream_valid_count(s) == 2);

  // the public chain enumerates exactly the leaf set of the shared trie
  std::set<const TrieNode*> chain;
  for (const TrieNode* l = s.trie->root()->leaf_next(); l; l = l->leaf_next())
    chain.insert(l);
  std::set<const TrieNode*> trie_leaves;
  struct W {
    std::set<const TrieNode*>& out;
    void walk(const TrieNode* n) {
      if (n->is_leaf()) out.insert(n);
      Trie::for_each_child(n, [&](TrieNode* c) { walk(c); });
    }
  } walker{trie_leaves};
  walker.walk(s.trie->root());
  CHECK(chain == trie_leaves);

  // census shows private chains fully reclaimed
  Census c = sp.ts.census();
  CHECK(c.preds[0].calls[0].chain_nodes == 0);
}

TEST_CASE("PAC private chains switch to the hash mechanism past the threshold") {
  Space sp(Design::PAC);
  TableEntry* te =
      sp.ts.register_predicate(predicate_id(SymbolTable::intern("p"), 1));
  SubgoalHandle h = sp.ts.subgoal_lookup_insert(te, key_of("p", {tok::var(0)}, 1), 0);
  for (int64_t i = 0; i < 100; ++i) {
    auto r = sp.ts.record_answer(h, ans({i}), 0);
    CHECK(r.new_for_thread);
  }
  CHECK(h.fsframe->chain_hash != nullptr);
  // membership probes stay exact after the switch
  for (int64_t i = 0; i < 100; ++i)
    CHECK_FALSE(sp.ts.record_answer(h, ans({i}), 0).new_for_thread);
  CHECK(h.fsframe->chain_count == 100);
}

TEST_CASE("FS eight threads recording the same answers yield one trie") {
  Space sp(Design::FS, 8);
  TableEntry* te =
      sp.ts.register_predicate(predicate_id(SymbolTable::intern("p"), 1));
  SubgoalKey k = key_of("p", {tok::var(0)}, 1);
  std::vector<std::thread> threads;
  for (unsigned w = 0; w < 8; ++w) {
    threads.emplace_back([&, w] {
      SubgoalHandle h = sp.ts.subgoal_lookup_insert(te, k, w);
      for (int64_t i = 0; i < 1000; ++i) sp.ts.record_answer(h, ans({i}), w);
    });
  }
  for (auto& t : threads) t.join();
  SubgoalHandle h = sp.ts.subgoal_lookup_insert(te, k, 0);
  CHECK(sp.ts.answer_stream(h).trie->stats().leaves == 1000);
  for (unsigned w = 0; w < 8; ++w) sp.alloc.release_thread(w + 1);
}

TEST_CASE("PAS consumers reuse completed frames without allocating") {
  Space sp(Design::PAS);
  TableEntry* te =
      sp.ts.register_predicate(predicate_id(SymbolTable::intern("p"), 1));
  SubgoalKey k = key_of("p", {tok::var(0)}, 1);
  SubgoalHandle h1 = sp.ts.subgoal_lookup_insert(te, k, 0);
  sp.ts.record_answer(h1, ans({1}), 0);
  sp.ts.record_answer(h1, ans({2}), 0);
  sp.ts.complete_subgoal(h1, 0);

  SubgoalHandle h2 = sp.ts.subgoal_lookup_insert(te, k, 1);
  CHECK(h2.consumer_only);
  CHECK(h2.frame == h1.frame);
  CHECK_FALSE(h2.created_frame);
  CHECK(sp.ts.is_complete(h2));
  CHECK(stream_valid_count(sp.ts.answer_stream(h2)) == 2);
  CHECK_THROWS_AS(sp.ts.record_answer(h2, ans({3}), 1), contract_error);

  Census c = sp.ts.census();
  CHECK(c.preds[0].calls[0].frames == 1);  // a single retained frame
}

TEST_CASE("PAS late completers discard their private copies") {
  Space sp(Design::PAS);
  TableEntry* te =
      sp.ts.register_predicate(predicate_id(SymbolTable::intern("p"), 1));
  SubgoalKey k = key_of("p", {tok::var(0)}, 1);
  SubgoalHandle h1 = sp.ts.subgoal_lookup_insert(te, k, 0);
  SubgoalHandle h2 = sp.ts.subgoal_lookup_insert(te, k, 1);
  CHECK(h1.frame != h2.frame);
  sp.ts.record_answer(h1, ans({1}), 0);
  sp.ts.record_answer(h2, ans({1}), 1);
  sp.ts.complete_subgoal(h1, 0);  // first published wins
  SubgoalFrame* winner = h1.frame;
  sp.ts.complete_subgoal(h2, 1);  // loser discards, adopts the winner
  CHECK(h2.frame == winner);
  CHECK(h2.consumer_only);
  Census c = sp.ts.census();
  CHECK(c.preds[0].calls[0].frames == 1);
  CHECK(c.preds[0].calls[0].discarded_frames == 1);
  sp.alloc.release_thread(2);
}

TEST_CASE("PAS mid-evaluation refresh abandons the private evaluation") {
  Space sp(Design::PAS);
  TableEntry* te =
      sp.ts.register_predicate(predicate_id(SymbolTable::intern("p"), 1));
  SubgoalKey k = key_of("p", {tok::var(0)}, 1);
  SubgoalHandle h1 = sp.ts.subgoal_lookup_insert(te, k, 0);
  SubgoalHandle h2 = sp.ts.subgoal_lookup_insert(te, k, 1);
  sp.ts.record_answer(h2, ans({9}), 1);  // partial private work on thread 1
  sp.ts.record_answer(h1, ans({1}), 0);
  sp.ts.complete_subgoal(h1, 0);
  std::vector<SubgoalFrame*> discards;
  CHECK(sp.ts.refresh_completion(h2, 1, &discards));
  CHECK(h2.consumer_only);
  CHECK(h2.frame == h1.frame);
  CHECK(discards.size() == 1);
  sp.alloc.release_thread(2);
}

TEST_CASE("completing an empty table leaves a consumable empty set") {
  for (Design d : {Design::NS, Design::SS, Design::PAS, Design::FS, Design::PAC}) {
    Space sp(d);
    TableEntry* te =
        sp.ts.register_predicate(predicate_id(SymbolTable::intern("p"), 1));
    SubgoalHandle h = sp.ts.subgoal_lookup_insert(te, key_of("p", {tok::var(0)}, 1), 0);
    sp.ts.complete_subgoal(h, 0);
    CHECK(sp.ts.is_complete(h));
    CHECK(stream_valid_count(sp.ts.answer_stream(h)) == 0);
    sp.ts.complete_subgoal(h, 0);  // idempotent
  }
}

TEST_CASE("bucket arrays allocate indirect groups only for high thread ids") {
  Space sp(Design::SS, 64);
  TableEntry* te =
      sp.ts.register_predicate(predicate_id(SymbolTable::intern("p"), 1));
  SubgoalKey k = key_of("p", {tok::var(0)}, 1);
  for (WorkerId w = 0; w < kBucketDirect; ++w) sp.ts.subgoal_lookup_insert(te, k, w);
  Census c = sp.ts.census();
  CHECK(c.preds[0].calls[0].bucket_groups == 0);
  sp.ts.subgoal_lookup_insert(te, k, 17);  // beyond the direct range
  c = sp.ts.census();
  CHECK(c.preds[0].calls[0].bucket_groups == 1);
  CHECK(c.preds[0].calls[0].frames == kBucketDirect + 1);
  for (WorkerId w = 0; w < kBucketDirect; ++w) sp.alloc.release_thread(w + 1);
  sp.alloc.release_thread(18);
}

TEST_CASE("thread ids beyond the ceiling are rejected") {
  Space sp(Design::SS);
  TableEntry* te =
      sp.ts.register_predicate(predicate_id(SymbolTable::intern("p"), 1));
  CHECK_THROWS_AS(
      sp.ts.subgoal_lookup_insert(te, key_of("p", {tok::var(0)}, 1), kThreadCeiling),
      contract_error);
}

TEST_CASE("abolish frees every structure and is idempotent") {
  for (Design d : {Design::NS, Design::SS, Design::PAS, Design::FS, Design::PAC}) {
    CAPTURE(to_string(d));
    Space sp(d, 4);
    TableEntry* te =
        sp.ts.register_predicate(predicate_id(SymbolTable::intern("p"), 2));
    std::vector<std::thread> threads;
    for (unsigned w = 0; w < 4; ++w) {
      threads.emplace_back([&, w] {
        for (int64_t g = 0; g < 5; ++g) {
          SubgoalKey k = key_of("p", {tok::integer(g), tok::var(0)}, 1);
          SubgoalHandle h = sp.ts.subgoal_lookup_insert(te, k, w);
          for (int64_t i = 0; i < 50; ++i)
            if (!h.consumer_only) sp.ts.record_answer(h, ans({i}), w);
          sp.ts.complete_subgoal(h, w);
        }
      });
    }
    for (auto& t : threads) t.join();
    for (unsigned w = 0; w < 4; ++w) sp.alloc.release_thread(w + 1);
    sp.ts.abolish_tables();
    CHECK(sp.alloc.heap_stats().total_live_blocks() == 0);
    sp.ts.abolish_tables();  // no-op
    CHECK(sp.alloc.heap_stats().total_live_blocks() == 0);
  }
}

TEST_CASE("census live-structure counts match the allocator per type") {
  Space sp(Design::SS, 2);
  TableEntry* te =
      sp.ts.register_predicate(predicate_id(SymbolTable::intern("p"), 1));
  SubgoalKey k = key_of("p", {tok::var(0)}, 1);
  for (unsigned w = 0; w < 2; ++w) {
    SubgoalHandle h = sp.ts.subgoal_lookup_insert(te, k, w);
    for (int64_t i = 0; i < 20; ++i) sp.ts.record_answer(h, ans({i}), w);
  }
  Census c = sp.ts.census();
  HeapStats hs = sp.alloc.heap_stats();
  uint64_t frames = c.preds[0].calls[0].frames;
  CHECK(hs.live_blocks(sp.ts.type_frame()) == frames);
  CHECK(hs.live_blocks(sp.ts.type_entry()) == 1);
  uint64_t at_total = 0;
  // uniform worst case: every frame carries an identical answer trie
  at_total = frames * c.preds[0].calls[0].at_nodes;
  CHECK(hs.live_blocks(sp.ts.type_answer_node()) == at_total);
  sp.alloc.release_thread(1);
  sp.alloc.release_thread(2);
}
