#include "tabkit/trie.hpp"

#include <cassert>
#include <cstring>
#include <new>

namespace tabkit {

uint64_t token_hash(Token t) {
  // splitmix64 finalizer; deterministic across runs for reproducible stats
  uint64_t z = t + 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Arena

void* Arena::alloc(size_t bytes) {
  bytes = (bytes + 15) & ~size_t{15};
  for (;;) {
    Chunk* c = head_.load(std::memory_order_acquire);
    if (c) {
      size_t off = c->off.fetch_add(bytes, std::memory_order_relaxed);
      if (off + bytes <= c->cap) {
        used_.fetch_add(bytes, std::memory_order_relaxed);
        return reinterpret_cast<std::byte*>(c + 1) + off;
      }
    }
    std::lock_guard<std::mutex> g(grow_mu_);
    Chunk* cur = head_.load(std::memory_order_acquire);
    if (cur != c) continue;  // someone else grew it
    size_t cap = bytes > (size_t{1} << 20) ? bytes : (size_t{1} << 20);
    void* mem = ::operator new(sizeof(Chunk) + cap);
    Chunk* nc = new (mem) Chunk{cur, {}, cap};
    nc->off.store(0, std::memory_order_relaxed);
    head_.store(nc, std::memory_order_release);
  }
}

void Arena::reset() {
  Chunk* c = head_.exchange(nullptr, std::memory_order_acq_rel);
  while (c) {
    Chunk* n = c->next;
    c->~Chunk();
    ::operator delete(c);
    c = n;
  }
  used_.store(0, std::memory_order_relaxed);
}

// ---------------------------------------------------------------------------
// Tagged child-slot encoding.
//
//   bits [0..1]  0 = cell chain (possibly empty), 1 = single direct node,
//                2 = hash-trie array, 3 = doubling hash
//   bit 2        expansion claim (chain kinds) / frozen (doubling buckets)
//
// Chain cells are immutable once published, so a successful head CAS
// validates the whole chain it saw.

namespace {
constexpr uintptr_t kKindMask = 3;
constexpr uintptr_t kClaimBit = 4;
constexpr uintptr_t kPtrMask = ~uintptr_t{7};
constexpr uintptr_t kKindChain = 0;
constexpr uintptr_t kKindNode = 1;
constexpr uintptr_t kKindHash = 2;
constexpr uintptr_t kKindDoubling = 3;

// Scans a chain state (kind 0 or 1) for `token`; returns the match and the
// chain length.
inline TrieNode* scan_chain(uintptr_t v, Token token, size_t& len) {
  len = 0;
  uintptr_t ptr = v & kPtrMask;
  if ((v & kKindMask) == kKindNode) {
    auto* n = reinterpret_cast<TrieNode*>(ptr);
    len = 1;
    return n->token == token ? n : nullptr;
  }
  TrieNode* found = nullptr;
  for (auto* c = reinterpret_cast<ChainCell*>(ptr); c; c = c->next) {
    ++len;
    if (!found && c->node->token == token) found = c->node;
  }
  return found;
}

template <typename Fn>
inline void chain_for_each(uintptr_t v, Fn&& fn) {
  uintptr_t ptr = v & kPtrMask;
  if ((v & kKindMask) == kKindNode) {
    fn(reinterpret_cast<TrieNode*>(ptr));
    return;
  }
  if ((v & kKindMask) == kKindChain) {
    for (auto* c = reinterpret_cast<ChainCell*>(ptr); c; c = c->next) fn(c->node);
  }
}
}  // namespace

TrieNode* Trie::new_node(TrieEnv& env, HeapId tid, Token token, TrieNode* parent) {
  void* mem = env.alloc->alloc_block(tid, node_type_);
  auto* n = new (mem) TrieNode{};
  n->token = token;
  n->parent = parent;
  n->children.store(0, std::memory_order_relaxed);
  n->next_leaf.store(0, std::memory_order_relaxed);
  n->aux.store(0, std::memory_order_relaxed);
  return n;
}

ChainCell* Trie::new_cell(TrieEnv& env, HeapId tid, TrieNode* n, ChainCell* next) {
  auto* c = static_cast<ChainCell*>(env.alloc->alloc_block(tid, env.cell_type));
  c->node = n;
  c->next = next;
  return c;
}

// Replaced chains stay readable for concurrent scanners; they are parked on
// a Treiber stack and reclaimed at destroy time. The stack reuses ChainCell
// blocks: `node` holds the retired chain head.
void Trie::retire_chain(TrieEnv& env, HeapId tid, ChainCell* head) {
  if (!head) return;
  ChainCell* rc = new_cell(env, tid, reinterpret_cast<TrieNode*>(head), nullptr);
  ChainCell* top = retired_.load(std::memory_order_relaxed);
  do {
    rc->next = top;
  } while (!retired_.compare_exchange_weak(top, rc, std::memory_order_acq_rel,
                                           std::memory_order_relaxed));
}

TrieNode* Trie::ensure_root(TrieEnv& env, HeapId tid) {
  TrieNode* r = root_.load(std::memory_order_acquire);
  if (r) return r;
  TrieNode* fresh = new_node(env, tid, kRootToken, nullptr);
  if (root_.compare_exchange_strong(r, fresh, std::memory_order_acq_rel,
                                    std::memory_order_acquire))
    return fresh;
  env.alloc->free_block(tid, fresh);
  return r;
}

TrieNode* Trie::find_or_insert_child(TrieEnv& env, HeapId tid, TrieNode* parent,
                                     Token token, bool* created) {
  return level_insert(env, tid, &parent->children, parent, token, created);
}

TrieNode* Trie::level_insert(TrieEnv& env, HeapId tid, std::atomic<uintptr_t>* slot,
                             TrieNode* parent, Token token, bool* created) {
  for (;;) {
    uintptr_t v = slot->load(std::memory_order_acquire);
    uintptr_t kind = v & kKindMask;
    uintptr_t ptr = v & kPtrMask;
    if (kind == kKindHash)
      return harray_insert(env, tid, reinterpret_cast<HashArray*>(ptr), parent, token,
                           token_hash(token), 0, created);
    if (kind == kKindDoubling)
      return doubling_insert(env, tid, slot, reinterpret_cast<DoublingHash*>(ptr),
                             parent, token, token_hash(token), created);

    size_t len = 0;
    if (TrieNode* hit = scan_chain(v, token, len)) return hit;

    if (len < env.cfg.saturation_threshold || (v & kClaimBit)) {
      // Chain push. A claimed level still accepts inserts; only expansion
      // is reserved to the claim holder.
      TrieNode* n = new_node(env, tid, token, parent);
      ChainCell* c1 = nullptr;
      ChainCell* c2 = nullptr;
      uintptr_t nv;
      if (kind == kKindNode) {
        c2 = new_cell(env, tid, reinterpret_cast<TrieNode*>(ptr), nullptr);
        c1 = new_cell(env, tid, n, c2);
        nv = reinterpret_cast<uintptr_t>(c1) | kKindChain | (v & kClaimBit);
      } else if (ptr == 0) {
        nv = reinterpret_cast<uintptr_t>(n) | kKindNode | (v & kClaimBit);
      } else {
        c1 = new_cell(env, tid, n, reinterpret_cast<ChainCell*>(ptr));
        nv = reinterpret_cast<uintptr_t>(c1) | kKindChain | (v & kClaimBit);
      }
      if (slot->compare_exchange_strong(v, nv, std::memory_order_acq_rel,
                                        std::memory_order_acquire)) {
        *created = true;
        return n;
      }
      if (c1) env.alloc->free_block(tid, c1);
      if (c2) env.alloc->free_block(tid, c2);
      env.alloc->free_block(tid, n);
      continue;
    }
    // Saturated, unclaimed: claim the level and install the hash mechanism.
    if (!slot->compare_exchange_strong(v, v | kClaimBit, std::memory_order_acq_rel,
                                       std::memory_order_acquire))
      continue;
    return install_hash(env, tid, slot, v | kClaimBit, parent, token, created);
  }
}

// Builds the scheme's structure from the claimed chain and swaps it in.
// Concurrent inserters may keep prepending cells; each CAS failure hands us
// exactly the new prefix to absorb.
TrieNode* Trie::install_hash(TrieEnv& env, HeapId tid, std::atomic<uintptr_t>* slot,
                             uintptr_t claimed, TrieNode* parent, Token token,
                             bool* created) {
  std::vector<TrieNode*> absorbed;
  uintptr_t cur = claimed;
  if (env.cfg.scheme == HashScheme::HashTrie) {
    auto* ha = static_cast<HashArray*>(env.alloc->alloc_block(tid, env.harray_type));
    for (auto& e : ha->entry) e.store(0, std::memory_order_relaxed);
    const unsigned w = env.cfg.hash_bits;
    for (;;) {
      chain_for_each(cur, [&](TrieNode* n) {
        for (TrieNode* seen : absorbed)
          if (seen == n) return;
        absorbed.push_back(n);
        // private until published: plain insertion
        uint64_t h = token_hash(n->token);
        HashArray* a = ha;
        unsigned shift = 0;
        for (;;) {
          auto& e = a->entry[(h >> shift) & ((1u << w) - 1)];
          uintptr_t ev = e.load(std::memory_order_relaxed);
          if ((ev & kKindMask) == kKindHash) {
            a = reinterpret_cast<HashArray*>(ev & kPtrMask);
            shift += w;
            continue;
          }
          if (ev == 0) {
            e.store(reinterpret_cast<uintptr_t>(n) | kKindNode,
                    std::memory_order_relaxed);
          } else if ((ev & kKindMask) == kKindNode) {
            auto* cold = new_cell(env, tid, reinterpret_cast<TrieNode*>(ev & kPtrMask),
                                  nullptr);
            auto* cnew = new_cell(env, tid, n, cold);
            e.store(reinterpret_cast<uintptr_t>(cnew) | kKindChain,
                    std::memory_order_relaxed);
          } else {
            auto* cnew = new_cell(env, tid, n,
                                  reinterpret_cast<ChainCell*>(ev & kPtrMask));
            e.store(reinterpret_cast<uintptr_t>(cnew) | kKindChain,
                    std::memory_order_relaxed);
          }
          break;
        }
      });
      uintptr_t target = reinterpret_cast<uintptr_t>(ha) | kKindHash;
      if (slot->compare_exchange_strong(cur, target, std::memory_order_acq_rel,
                                        std::memory_order_acquire)) {
        if ((cur & kKindMask) == kKindChain)
          retire_chain(env, tid, reinterpret_cast<ChainCell*>(cur & kPtrMask));
        break;
      }
    }
    return harray_insert(env, tid, ha, parent, token, token_hash(token), 0, created);
  }

  // Doubling scheme: initial bucket array of S entries from the arena.
  uint32_t size = env.cfg.initial_buckets;
  void* mem = env.arena->alloc(DoublingHash::bytes_for(size));
  auto* dh = new (mem) DoublingHash{};
  dh->size = size;
  dh->total.store(0, std::memory_order_relaxed);
  dh->next_version.store(nullptr, std::memory_order_relaxed);
  for (uint32_t i = 0; i < size; ++i) dh->buckets[i].store(0, std::memory_order_relaxed);
  for (;;) {
    chain_for_each(cur, [&](TrieNode* n) {
      for (TrieNode* seen : absorbed)
        if (seen == n) return;
      absorbed.push_back(n);
      uint64_t h = token_hash(n->token);
      auto& b = dh->buckets[h & (size - 1)];
      uintptr_t bv = b.load(std::memory_order_relaxed);
      if (bv == 0) {
        b.store(reinterpret_cast<uintptr_t>(n) | kKindNode, std::memory_order_relaxed);
      } else {
        ChainCell* tail = nullptr;
        if ((bv & kKindMask) == kKindNode) {
          auto* cold = static_cast<ChainCell*>(env.arena->alloc(sizeof(ChainCell)));
          cold->node = reinterpret_cast<TrieNode*>(bv & kPtrMask);
          cold->next = nullptr;
          tail = cold;
        } else {
          tail = reinterpret_cast<ChainCell*>(bv & kPtrMask);
        }
        auto* cnew = static_cast<ChainCell*>(env.arena->alloc(sizeof(ChainCell)));
        cnew->node = n;
        cnew->next = tail;
        b.store(reinterpret_cast<uintptr_t>(cnew) | kKindChain,
                std::memory_order_relaxed);
      }
      dh->total.fetch_add(1, std::memory_order_relaxed);
    });
    uintptr_t target = reinterpret_cast<uintptr_t>(dh) | kKindDoubling;
    if (slot->compare_exchange_strong(cur, target, std::memory_order_acq_rel,
                                      std::memory_order_acquire)) {
      if ((cur & kKindMask) == kKindChain)
        retire_chain(env, tid, reinterpret_cast<ChainCell*>(cur & kPtrMask));
      break;
    }
  }
  return doubling_insert(env, tid, slot, dh, parent, token, token_hash(token), created);
}

TrieNode* Trie::harray_insert(TrieEnv& env, HeapId tid, HashArray* ha, TrieNode* parent,
                              Token token, uint64_t h, unsigned shift, bool* created) {
  const unsigned w = env.cfg.hash_bits;
  const unsigned fanout = 1u << w;
  for (;;) {
    auto* slot = &ha->entry[(h >> shift) & (fanout - 1)];
    uintptr_t v = slot->load(std::memory_order_acquire);
    uintptr_t kind = v & kKindMask;
    uintptr_t ptr = v & kPtrMask;
    if (kind == kKindHash) {
      ha = reinterpret_cast<HashArray*>(ptr);
      shift += w;
      continue;
    }
    size_t len = 0;
    if (TrieNode* hit = scan_chain(v, token, len)) return hit;

    bool deepest = shift + w >= 64;
    if (len < env.cfg.saturation_threshold || deepest || (v & kClaimBit)) {
      TrieNode* n = new_node(env, tid, token, parent);
      ChainCell* c1 = nullptr;
      ChainCell* c2 = nullptr;
      uintptr_t nv;
      if (kind == kKindNode) {
        c2 = new_cell(env, tid, reinterpret_cast<TrieNode*>(ptr), nullptr);
        c1 = new_cell(env, tid, n, c2);
        nv = reinterpret_cast<uintptr_t>(c1) | kKindChain | (v & kClaimBit);
      } else if (ptr == 0) {
        nv = reinterpret_cast<uintptr_t>(n) | kKindNode | (v & kClaimBit);
      } else {
        c1 = new_cell(env, tid, n, reinterpret_cast<ChainCell*>(ptr));
        nv = reinterpret_cast<uintptr_t>(c1) | kKindChain | (v & kClaimBit);
      }
      if (slot->compare_exchange_strong(v, nv, std::memory_order_acq_rel,
                                        std::memory_order_acquire)) {
        *created = true;
        return n;
      }
      if (c1) env.alloc->free_block(tid, c1);
      if (c2) env.alloc->free_block(tid, c2);
      env.alloc->free_block(tid, n);
      continue;
    }
    // Saturated bucket: claim it and expand one level deeper. Only this
    // bucket entry blocks for expansion; everything else proceeds.
    if (!slot->compare_exchange_strong(v, v | kClaimBit, std::memory_order_acq_rel,
                                       std::memory_order_acquire))
      continue;
    uintptr_t cur = v | kClaimBit;
    auto* child = static_cast<HashArray*>(env.alloc->alloc_block(tid, env.harray_type));
    for (auto& e : child->entry) e.store(0, std::memory_order_relaxed);
    std::vector<TrieNode*> absorbed;
    for (;;) {
      chain_for_each(cur, [&](TrieNode* n) {
        for (TrieNode* seen : absorbed)
          if (seen == n) return;
        absorbed.push_back(n);
        uint64_t nh = token_hash(n->token);
        auto& e = child->entry[(nh >> (shift + w)) & (fanout - 1)];
        uintptr_t ev = e.load(std::memory_order_relaxed);
        if (ev == 0) {
          e.store(reinterpret_cast<uintptr_t>(n) | kKindNode, std::memory_order_relaxed);
        } else if ((ev & kKindMask) == kKindNode) {
          auto* cold =
              new_cell(env, tid, reinterpret_cast<TrieNode*>(ev & kPtrMask), nullptr);
          auto* cnew = new_cell(env, tid, n, cold);
          e.store(reinterpret_cast<uintptr_t>(cnew) | kKindChain,
                  std::memory_order_relaxed);
        } else {
          auto* cnew =
              new_cell(env, tid, n, reinterpret_cast<ChainCell*>(ev & kPtrMask));
          e.store(reinterpret_cast<uintptr_t>(cnew) | kKindChain,
                  std::memory_order_relaxed);
        }
      });
      uintptr_t target = reinterpret_cast<uintptr_t>(child) | kKindHash;
      if (slot->compare_exchange_strong(cur, target, std::memory_order_acq_rel,
                                        std::memory_order_acquire)) {
        if ((v & kKindMask) == kKindChain)
          retire_chain(env, tid, reinterpret_cast<ChainCell*>(cur & kPtrMask));
        break;
      }
    }
    ha = child;
    shift += w;
  }
}

TrieNode* Trie::doubling_insert(TrieEnv& env, HeapId tid,
                                std::atomic<uintptr_t>* owner, DoublingHash* dh,
                                TrieNode* parent, Token token, uint64_t h,
                                bool* created) {
  for (;;) {
    auto* b = &dh->buckets[h & (dh->size - 1)];
    uintptr_t v = b->load(std::memory_order_acquire);
    size_t len = 0;
    if (TrieNode* hit = scan_chain(v, token, len)) return hit;
    if (v & kClaimBit) {
      // Frozen: everything not in this immutable chain lives in the next
      // version by now (or will be inserted there).
      DoublingHash* nv = dh->next_version.load(std::memory_order_acquire);
      assert(nv);
      dh = nv;
      continue;
    }
    DoublingHash* nv = dh->next_version.load(std::memory_order_acquire);
    bool trigger = len >= env.cfg.saturation_threshold &&
                   dh->total.load(std::memory_order_relaxed) > dh->size;
    if (!trigger || nv) {
      TrieNode* n = new_node(env, tid, token, parent);
      uintptr_t nvv;
      if ((v & kKindMask) == kKindNode) {
        auto* cold = static_cast<ChainCell*>(env.arena->alloc(sizeof(ChainCell)));
        cold->node = reinterpret_cast<TrieNode*>(v & kPtrMask);
        cold->next = nullptr;
        auto* cnew = static_cast<ChainCell*>(env.arena->alloc(sizeof(ChainCell)));
        cnew->node = n;
        cnew->next = cold;
        nvv = reinterpret_cast<uintptr_t>(cnew) | kKindChain;
      } else if ((v & kPtrMask) == 0) {
        nvv = reinterpret_cast<uintptr_t>(n) | kKindNode;
      } else {
        auto* cnew = static_cast<ChainCell*>(env.arena->alloc(sizeof(ChainCell)));
        cnew->node = n;
        cnew->next = reinterpret_cast<ChainCell*>(v & kPtrMask);
        nvv = reinterpret_cast<uintptr_t>(cnew) | kKindChain;
      }
      if (b->compare_exchange_strong(v, nvv, std::memory_order_acq_rel,
                                     std::memory_order_acquire)) {
        dh->total.fetch_add(1, std::memory_order_relaxed);
        *created = true;
        return n;
      }
      env.alloc->free_block(tid, n);
      continue;
    }
    // Become the expander; losers observe next_version and keep inserting.
    void* mem = env.arena->alloc(DoublingHash::bytes_for(dh->size * 2));
    auto* fresh = new (mem) DoublingHash{};
    fresh->size = dh->size * 2;
    fresh->total.store(0, std::memory_order_relaxed);
    fresh->next_version.store(nullptr, std::memory_order_relaxed);
    for (uint32_t i = 0; i < fresh->size; ++i)
      fresh->buckets[i].store(0, std::memory_order_relaxed);
    DoublingHash* expect = nullptr;
    if (dh->next_version.compare_exchange_strong(expect, fresh,
                                                 std::memory_order_acq_rel,
                                                 std::memory_order_acquire))
      doubling_migrate(env, tid, owner, dh, parent);
    // else: lost the claim; the fresh array is arena garbage
  }
}

namespace {
// Inserts an already-existing node into a doubling hash during migration.
void doubling_put_existing(TrieEnv& env, DoublingHash* dh, TrieNode* n) {
  uint64_t h = token_hash(n->token);
  for (;;) {
    auto* b = &dh->buckets[h & (dh->size - 1)];
    uintptr_t v = b->load(std::memory_order_acquire);
    if (v & kClaimBit) {  // nested expansion already freezing this bucket
      DoublingHash* nv = dh->next_version.load(std::memory_order_acquire);
      assert(nv);
      dh = nv;
      continue;
    }
    uintptr_t nvv;
    if ((v & kPtrMask) == 0) {
      nvv = reinterpret_cast<uintptr_t>(n) | kKindNode;
    } else if ((v & kKindMask) == kKindNode) {
      auto* cold = static_cast<ChainCell*>(env.arena->alloc(sizeof(ChainCell)));
      cold->node = reinterpret_cast<TrieNode*>(v & kPtrMask);
      cold->next = nullptr;
      auto* cnew = static_cast<ChainCell*>(env.arena->alloc(sizeof(ChainCell)));
      cnew->node = n;
      cnew->next = cold;
      nvv = reinterpret_cast<uintptr_t>(cnew) | kKindChain;
    } else {
      auto* cnew = static_cast<ChainCell*>(env.arena->alloc(sizeof(ChainCell)));
      cnew->node = n;
      cnew->next = reinterpret_cast<ChainCell*>(v & kPtrMask);
      nvv = reinterpret_cast<uintptr_t>(cnew) | kKindChain;
    }
    if (b->compare_exchange_strong(v, nvv, std::memory_order_acq_rel,
                                   std::memory_order_acquire)) {
      dh->total.fetch_add(1, std::memory_order_relaxed);
      return;
    }
  }
}
}  // namespace

// Migration: freeze each bucket with one CAS, move its nodes into the next
// version, then swing the level reference. A suspended expander leaves
// readers scanning frozen chains and inserters redirecting to the next
// version; nothing blocks.
void Trie::doubling_migrate(TrieEnv& env, HeapId tid, std::atomic<uintptr_t>* owner,
                            DoublingHash* dh, TrieNode* parent) {
  (void)tid;
  (void)parent;
  DoublingHash* nv = dh->next_version.load(std::memory_order_acquire);
  for (uint32_t i = 0; i < dh->size; ++i) {
    auto* b = &dh->buckets[i];
    uintptr_t v = b->load(std::memory_order_acquire);
    while (!b->compare_exchange_weak(v, v | kClaimBit, std::memory_order_acq_rel,
                                     std::memory_order_acquire)) {
    }
    chain_for_each(v, [&](TrieNode* n) { doubling_put_existing(env, nv, n); });
  }
  uintptr_t expect = reinterpret_cast<uintptr_t>(dh) | kKindDoubling;
  owner->compare_exchange_strong(expect,
                                 reinterpret_cast<uintptr_t>(nv) | kKindDoubling,
                                 std::memory_order_acq_rel, std::memory_order_acquire);
}

TrieNode* Trie::find_child(const TrieNode* parent, Token token) const {
  uintptr_t v = parent->children.load(std::memory_order_acquire);
  uint64_t h = 0;
  unsigned shift = 0;
  const unsigned w = hash_bits_;
  bool hashed = false;
  for (;;) {
    uintptr_t kind = v & kKindMask;
    uintptr_t ptr = v & kPtrMask;
    if (kind == kKindHash) {
      if (!hashed) {
        h = token_hash(token);
        hashed = true;
      }
      auto* ha = reinterpret_cast<HashArray*>(ptr);
      v = ha->entry[(h >> shift) & ((1u << w) - 1)].load(std::memory_order_acquire);
      shift += w;
      continue;
    }
    if (kind == kKindDoubling) {
      if (!hashed) {
        h = token_hash(token);
        hashed = true;
      }
      auto* dh = reinterpret_cast<DoublingHash*>(ptr);
      for (;;) {
        uintptr_t bv = dh->buckets[h & (dh->size - 1)].load(std::memory_order_acquire);
        size_t len;
        if (TrieNode* hit = scan_chain(bv, token, len)) return hit;
        if (bv & kClaimBit) {
          DoublingHash* nvv = dh->next_version.load(std::memory_order_acquire);
          if (!nvv) return nullptr;
          dh = nvv;
          continue;
        }
        return nullptr;
      }
    }
    size_t len;
    return scan_chain(v, token, len);
  }
}

LevelKind Trie::level_kind(const TrieNode* parent) {
  uintptr_t v = parent->children.load(std::memory_order_acquire);
  switch (v & kKindMask) {
    case kKindHash:
      return LevelKind::HashTrie;
    case kKindDoubling:
      return LevelKind::Doubling;
    default:
      return (v & kPtrMask) ? LevelKind::Chain : LevelKind::Empty;
  }
}

namespace {
void for_each_in_slot(uintptr_t v, const std::function<void(TrieNode*)>& fn,
                      unsigned fanout) {
  uintptr_t kind = v & kKindMask;
  uintptr_t ptr = v & kPtrMask;
  if (kind == kKindHash) {
    auto* ha = reinterpret_cast<HashArray*>(ptr);
    for (unsigned i = 0; i < fanout; ++i)
      for_each_in_slot(ha->entry[i].load(std::memory_order_acquire), fn, fanout);
    return;
  }
  if (kind == kKindDoubling) {
    auto* dh = reinterpret_cast<DoublingHash*>(ptr);
    assert(dh->next_version.load(std::memory_order_acquire) == nullptr);
    for (uint32_t i = 0; i < dh->size; ++i)
      for_each_in_slot(dh->buckets[i].load(std::memory_order_acquire) & ~kClaimBit, fn,
                       fanout);
    return;
  }
  chain_for_each(v, fn);
}
}  // namespace

void Trie::for_each_child(const TrieNode* parent,
                          const std::function<void(TrieNode*)>& fn) {
  for_each_in_slot(parent->children.load(std::memory_order_acquire), fn, kHashFanout);
}

Trie::InsertResult Trie::check_insert(TrieEnv& env, HeapId tid,
                                      std::span<const Token> tokens, bool append_list) {
  if (tokens.empty()) throw contract_error("check_insert: empty token sequence");
  TrieNode* root = ensure_root(env, tid);
  TrieNode* cur = root;
  for (Token t : tokens) {
    bool created = false;
    cur = find_or_insert_child(env, tid, cur, t, &created);
  }
  uintptr_t prev = cur->next_leaf.fetch_or(kLeafBit, std::memory_order_acq_rel);
  bool inserted = !(prev & kLeafBit);
  if (inserted && append_list) leaves_.append(root, cur);
  return {cur, inserted};
}

TrieNode* Trie::lookup(std::span<const Token> tokens) const {
  TrieNode* cur = root_.load(std::memory_order_acquire);
  if (!cur) return nullptr;
  for (Token t : tokens) {
    cur = find_child(cur, t);
    if (!cur) return nullptr;
  }
  return cur->is_leaf() ? cur : nullptr;
}

void LeafList::append(TrieNode* root, TrieNode* leaf) {
  for (;;) {
    TrieNode* t = tail.load(std::memory_order_acquire);
    if (!t) {
      TrieNode* expect = nullptr;
      if (!tail.compare_exchange_strong(expect, root, std::memory_order_acq_rel,
                                        std::memory_order_acquire))
        continue;
      t = root;
    }
    uintptr_t tv = t->next_leaf.load(std::memory_order_acquire);
    TrieNode* next = reinterpret_cast<TrieNode*>(tv & kLeafPtrMask);
    if (next) {
      tail.compare_exchange_strong(t, next, std::memory_order_acq_rel,
                                   std::memory_order_acquire);
      continue;
    }
    uintptr_t desired = tv | reinterpret_cast<uintptr_t>(leaf);
    if (t->next_leaf.compare_exchange_strong(tv, desired, std::memory_order_acq_rel,
                                             std::memory_order_acquire)) {
      tail.compare_exchange_strong(t, leaf, std::memory_order_acq_rel,
                                   std::memory_order_acquire);
      count.fetch_add(1, std::memory_order_release);
      return;
    }
  }
}

TrieStats Trie::stats() const {
  TrieStats st;
  const TrieNode* root = root_.load(std::memory_order_acquire);
  if (!root) return st;
  st.min_depth = ~uint64_t{0};
  struct Walker {
    TrieStats& st;
    void walk(const TrieNode* n, uint64_t depth) {
      st.nodes++;
      if (n->is_leaf()) {
        st.leaves++;
        st.depth_total += depth;
        if (depth < st.min_depth) st.min_depth = depth;
        if (depth > st.max_depth) st.max_depth = depth;
      }
      Trie::for_each_child(n, [&](TrieNode* c) { walk(c, depth + 1); });
    }
  } w{st};
  w.walk(root, 0);
  // orphaned invalid leaves unlinked from the tree but still on the list
  for (TrieNode* l = root->leaf_next(); l; l = l->leaf_next()) {
    if (l->parent == nullptr) {
      st.nodes++;
      st.leaves++;
      st.depth_total += 0;
    }
  }
  if (st.min_depth == ~uint64_t{0}) st.min_depth = 0;
  if (st.leaves > 0)
    st.avg_depth = static_cast<double>(st.depth_total) / static_cast<double>(st.leaves);
  return st;
}

void Trie::remove_child(TrieEnv& env, HeapId tid, TrieNode* parent, TrieNode* child) {
  // Single-writer editing; plain loads and stores throughout.
  std::atomic<uintptr_t>* slot = &parent->children;
  uint64_t h = token_hash(child->token);
  unsigned shift = 0;
  const unsigned w = hash_bits_;
  bool in_arena = false;  // doubling bucket cells live in the arena
  for (;;) {
    uintptr_t v = slot->load(std::memory_order_relaxed);
    uintptr_t kind = v & kKindMask;
    uintptr_t ptr = v & kPtrMask;
    if (kind == kKindHash) {
      auto* ha = reinterpret_cast<HashArray*>(ptr);
      slot = &ha->entry[(h >> shift) & ((1u << w) - 1)];
      shift += w;
      continue;
    }
    if (kind == kKindDoubling) {
      auto* dh = reinterpret_cast<DoublingHash*>(ptr);
      slot = &dh->buckets[h & (dh->size - 1)];
      in_arena = true;
      v = slot->load(std::memory_order_relaxed);
      kind = v & kKindMask;
      ptr = v & kPtrMask;
    }
    if (kind == kKindNode) {
      if (reinterpret_cast<TrieNode*>(ptr) == child)
        slot->store(0, std::memory_order_relaxed);
      return;
    }
    ChainCell* prev = nullptr;
    for (auto* c = reinterpret_cast<ChainCell*>(ptr); c; c = c->next) {
      if (c->node == child) {
        if (prev)
          prev->next = c->next;
        else
          slot->store(reinterpret_cast<uintptr_t>(c->next) | kKindChain,
                      std::memory_order_relaxed);
        if (!in_arena) env.alloc->free_block(tid, c);
        return;
      }
      prev = c;
    }
    return;
  }
}

size_t Trie::count_children(const TrieNode* parent, size_t limit) {
  size_t n = 0;
  // bounded quiescent count; fine to enumerate fully for small levels
  for_each_child(parent, [&](TrieNode*) { n++; });
  (void)limit;
  return n;
}

namespace {
void free_slot(TrieEnv& env, HeapId tid, uintptr_t v, PageAllocator* alloc,
               const std::function<void(TrieNode*)>& free_node) {
  uintptr_t kind = v & kKindMask;
  uintptr_t ptr = v & kPtrMask;
  if (ptr == 0) return;
  if (kind == kKindHash) {
    auto* ha = reinterpret_cast<HashArray*>(ptr);
    for (auto& e : ha->entry)
      free_slot(env, tid, e.load(std::memory_order_relaxed), alloc, free_node);
    alloc->free_block(tid, ha);
    return;
  }
  if (kind == kKindDoubling) {
    auto* dh = reinterpret_cast<DoublingHash*>(ptr);
    for (uint32_t i = 0; i < dh->size; ++i) {
      uintptr_t bv = dh->buckets[i].load(std::memory_order_relaxed) & ~kClaimBit;
      // arena cells: only the nodes are reclaimed here
      chain_for_each(bv, free_node);
    }
    return;  // arrays live in the arena
  }
  if (kind == kKindNode) {
    free_node(reinterpret_cast<TrieNode*>(ptr));
    return;
  }
  auto* c = reinterpret_cast<ChainCell*>(ptr);
  while (c) {
    ChainCell* nx = c->next;
    if (c->node) free_node(c->node);
    alloc->free_block(tid, c);
    c = nx;
  }
}
}  // namespace

void Trie::destroy(TrieEnv& env, HeapId tid) {
  TrieNode* root = root_.exchange(nullptr, std::memory_order_acq_rel);
  if (!root) return;
  // invalid leaves orphaned by invalidation: reachable only via the list
  std::vector<TrieNode*> orphans;
  for (TrieNode* l = root->leaf_next(); l; l = l->leaf_next())
    if (l->parent == nullptr) orphans.push_back(l);

  std::function<void(TrieNode*)> free_node = [&](TrieNode* n) {
    free_slot(env, tid, n->children.load(std::memory_order_relaxed), env.alloc,
              free_node);
    env.alloc->free_block(tid, n);
  };
  free_node(root);
  for (TrieNode* l : orphans) env.alloc->free_block(tid, l);

  ChainCell* rc = retired_.exchange(nullptr, std::memory_order_acq_rel);
  while (rc) {
    ChainCell* next_rc = rc->next;
    auto* chain = reinterpret_cast<ChainCell*>(rc->node);
    while (chain) {
      ChainCell* nx = chain->next;
      env.alloc->free_block(tid, chain);
      chain = nx;
    }
    env.alloc->free_block(tid, rc);
    rc = next_rc;
  }
  leaves_.tail.store(nullptr, std::memory_order_relaxed);
  leaves_.count.store(0, std::memory_order_relaxed);
}

}  // namespace tabkit
