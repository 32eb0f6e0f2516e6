#include "tabkit/tablespace.hpp"

#include <algorithm>
#include <cassert>
#include <cstring>

namespace tabkit {

bool mode_from_string(const std::string& s, Mode& out) {
  if (s == "index") out = Mode::Index;
  else if (s == "first") out = Mode::First;
  else if (s == "last") out = Mode::Last;
  else if (s == "min") out = Mode::Min;
  else if (s == "max") out = Mode::Max;
  else if (s == "sum") out = Mode::Sum;
  else if (s == "all") out = Mode::All;
  else return false;
  return true;
}

const char* to_string(Mode m) {
  switch (m) {
    case Mode::Index: return "index";
    case Mode::First: return "first";
    case Mode::Last: return "last";
    case Mode::Min: return "min";
    case Mode::Max: return "max";
    case Mode::Sum: return "sum";
    case Mode::All: return "all";
  }
  return "?";
}

TableSpace::TableSpace(Design design, TrieConfig tcfg, PageAllocator& alloc)
    : design_(design), alloc_(&alloc) {
  t_subgoal_node_ = alloc.register_type("subgoal_trie_node", blk::kTrieNode);
  t_answer_node_ = alloc.register_type("answer_trie_node", blk::kTrieNode);
  t_trie_hdr_ = alloc.register_type("subgoal_trie_header", blk::kTrieHeader);
  t_entry_ = alloc.register_type("table_entry", blk::kTableEntry);
  t_ba_ = alloc.register_type("bucket_array", blk::kBucketArray);
  t_group_ = alloc.register_type("bucket_group", blk::kBucketGroup);
  t_frame_ = alloc.register_type("subgoal_frame", blk::kSubgoalFrame);
  t_sentry_ = alloc.register_type("subgoal_entry", blk::kSubgoalEntry);
  t_fsframe_ = alloc.register_type("fs_subgoal_frame", blk::kFsFrame);
  t_chain_ = alloc.register_type("answer_chain_node", blk::kAnswerChainNode);
  t_cell_ = alloc.register_type("trie_chain_cell", blk::kChainCell);
  t_harray_ = alloc.register_type("trie_hash_array", blk::kHashArray);
  env_.alloc = &alloc;
  env_.cell_type = t_cell_;
  env_.harray_type = t_harray_;
  env_.cfg = tcfg;
  env_.arena = &arena_;
  if (tcfg.hash_bits < 1 || tcfg.hash_bits > 3)
    throw config_error("hash bits must be in [1,3] (arrays are fixed 64-byte blocks)");
}

TableSpace::~TableSpace() {
  // Tables are normally abolished explicitly; fall back for tests that
  // drop the space while structures are live.
  if (!entries_.empty()) {
    try {
      abolish_tables();
    } catch (...) {
    }
  }
}

TableEntry* TableSpace::register_predicate(uint64_t pred, std::span<const Mode> modes) {
  std::lock_guard<std::mutex> g(reg_mu_);
  if (by_pred_.count(pred))
    throw contract_error("predicate already registered: " + predicate_name(pred));
  uint32_t arity = pred_arity(pred);
  if (!modes.empty()) {
    if (modes.size() != arity)
      throw config_error("mode array length must match arity");
    if (arity > 8) throw config_error("mode-directed predicates support arity <= 8");
    if (design_ == Design::FS || design_ == Design::PAC)
      throw config_error("mode-directed tabling is limited to NS/SS/PAS");
    unsigned numeric = 0, outputs = 0;
    Mode agg = Mode::Index;
    for (Mode m : modes) {
      if (m == Mode::Index) continue;
      outputs++;
      if (m == Mode::Min || m == Mode::Max || m == Mode::Sum) numeric++;
      if (agg == Mode::Index) agg = m;
      else if (agg != m)
        throw config_error("output arguments must share one mode");
    }
    if (outputs == 0) throw config_error("mode array declares no output argument");
    if (numeric > 1)
      throw config_error("min/max/sum support a single output argument");
  }
  auto* te = new (alloc_->alloc_block(0, t_entry_)) TableEntry{};
  te->pred = pred;
  te->arity = static_cast<uint8_t>(arity);
  te->moded = !modes.empty();
  for (size_t i = 0; i < modes.size(); ++i) {
    te->modes[i] = modes[i];
    if (modes[i] != Mode::Index) te->n_output++;
  }
  if (design_ == Design::NS) {
    auto* ba = new (alloc_->alloc_block(0, t_ba_)) BucketArray{};
    te->ns_roots.store(ba, std::memory_order_release);
  } else {
    auto* hdr = new (alloc_->alloc_block(0, t_trie_hdr_)) Trie{};
    hdr->init(t_subgoal_node_, static_cast<uint8_t>(env_.cfg.hash_bits));
    te->subgoal_trie = hdr;
  }
  entries_.push_back(te);
  by_pred_[pred] = te;
  return te;
}

TableEntry* TableSpace::find_predicate(uint64_t pred) const {
  std::lock_guard<std::mutex> g(reg_mu_);
  auto it = by_pred_.find(pred);
  return it == by_pred_.end() ? nullptr : it->second;
}

std::atomic<void*>& TableSpace::ba_cell(BucketArray* ba, WorkerId w, HeapId heap,
                                        bool create) {
  if (w < kBucketDirect) return ba->direct[w];
  unsigned gi = (w - kBucketDirect) / kBucketGroupSize;
  unsigned ci = (w - kBucketDirect) % kBucketGroupSize;
  BucketGroup* g = ba->groups[gi].load(std::memory_order_acquire);
  if (!g) {
    if (!create) {
      static std::atomic<void*> nil{nullptr};
      return nil;
    }
    auto* fresh = new (alloc_->alloc_block(heap, t_group_)) BucketGroup{};
    if (ba->groups[gi].compare_exchange_strong(g, fresh, std::memory_order_acq_rel,
                                               std::memory_order_acquire)) {
      g = fresh;
    } else {
      alloc_->free_block(heap, fresh);
    }
  }
  return g->cells[ci];
}

void TableSpace::fill_subst(SubstInfo& s, const TableEntry* te,
                            const SubgoalKey& key) const {
  s.nvars = static_cast<uint8_t>(key.nvars);
  s.moded = te->moded;
  if (!te->moded) return;
  if (key.nvars > sizeof(s.var_arg))
    throw config_error("mode-directed subgoal has too many variables");
  // walk argument boundaries in the token sequence
  size_t pos = 0;
  for (uint32_t a = 0; a < te->arity; ++a) {
    size_t remaining = 1;
    bool single_var = true;
    size_t arg_vars = 0;
    while (remaining > 0) {
      Token t = key.tokens.at(pos++);
      remaining--;
      switch (tok::tag(t)) {
        case tok::kVar:
          s.var_arg[tok::var_index(t)] = static_cast<uint8_t>(a);
          arg_vars++;
          break;
        case tok::kFunctor:
          remaining += tok::functor_arity(t);
          single_var = false;
          break;
        default:
          single_var = false;
          break;
      }
    }
    if (te->modes[a] != Mode::Index) {
      if (!(single_var && arg_vars == 1))
        throw contract_error(
            "output argument of a mode-directed call must be a free variable");
    }
  }
}

SubgoalFrame* TableSpace::new_frame(HeapId heap, WorkerId w, TrieNode* leaf,
                                    const TableEntry* te, const SubgoalKey* key) {
  auto* f = new (alloc_->alloc_block(heap, t_frame_)) SubgoalFrame{};
  f->answers.init(t_answer_node_, static_cast<uint8_t>(env_.cfg.hash_bits));
  f->owner = static_cast<uint16_t>(w);
  f->subgoal_leaf = leaf;
  if (key) fill_subst(f->subst, te, *key);
  return f;
}

FsFrame* TableSpace::new_fsframe(HeapId heap, WorkerId w, SubgoalEntry* se) {
  auto* f = new (alloc_->alloc_block(heap, t_fsframe_)) FsFrame{};
  f->entry = se;
  f->owner = static_cast<uint16_t>(w);
  return f;
}

SubgoalHandle TableSpace::subgoal_lookup_insert(TableEntry* te, const SubgoalKey& key,
                                                WorkerId w) {
  if (w >= kThreadCeiling)
    throw contract_error("thread capacity exceeded (ceiling 1024)");
  HeapId heap = heap_of(w);
  SubgoalHandle h;
  h.entry = te;

  // arity-0 subgoals use the predicate symbol as their single trie token
  std::vector<Token> zero;
  std::span<const Token> tokens(key.tokens);
  if (tokens.empty()) {
    zero.push_back(tok::atom(pred_sym(te->pred)));
    tokens = zero;
  }

  switch (design_) {
    case Design::NS: {
      BucketArray* ba = te->ns_roots.load(std::memory_order_acquire);
      auto& cell = ba_cell(ba, w, heap, true);
      Trie* mine = static_cast<Trie*>(cell.load(std::memory_order_acquire));
      if (!mine) {
        mine = new (alloc_->alloc_block(heap, t_trie_hdr_)) Trie{};
        mine->init(t_subgoal_node_, static_cast<uint8_t>(env_.cfg.hash_bits));
        cell.store(mine, std::memory_order_release);  // cell k written by thread k only
      }
      auto r = mine->check_insert(env_, heap, tokens, false);
      h.leaf = r.leaf;
      uintptr_t aux = r.leaf->aux.load(std::memory_order_acquire);
      if (!aux) {
        SubgoalFrame* f = new_frame(heap, w, r.leaf, te, &key);
        r.leaf->aux.store(reinterpret_cast<uintptr_t>(f), std::memory_order_release);
        h.frame = f;
        h.created_frame = true;
      } else {
        h.frame = reinterpret_cast<SubgoalFrame*>(aux);
      }
      return h;
    }
    case Design::SS: {
      auto r = te->subgoal_trie->check_insert(env_, heap, tokens, false);
      h.leaf = r.leaf;
      uintptr_t aux = r.leaf->aux.load(std::memory_order_acquire);
      if (!aux) {
        auto* ba = new (alloc_->alloc_block(heap, t_ba_)) BucketArray{};
        uintptr_t expect = 0;
        if (r.leaf->aux.compare_exchange_strong(expect,
                                                reinterpret_cast<uintptr_t>(ba),
                                                std::memory_order_acq_rel,
                                                std::memory_order_acquire)) {
          aux = reinterpret_cast<uintptr_t>(ba);
        } else {
          alloc_->free_block(heap, ba);
          aux = expect;
        }
      }
      auto* ba = reinterpret_cast<BucketArray*>(aux);
      auto& cell = ba_cell(ba, w, heap, true);
      auto* f = static_cast<SubgoalFrame*>(cell.load(std::memory_order_acquire));
      if (!f) {
        f = new_frame(heap, w, r.leaf, te, &key);
        cell.store(f, std::memory_order_release);
        h.created_frame = true;
      }
      h.frame = f;
      return h;
    }
    case Design::PAS: {
      auto r = te->subgoal_trie->check_insert(env_, heap, tokens, false);
      h.leaf = r.leaf;
      // a published completed frame is consumed immediately, no allocation
      uintptr_t pub = r.leaf->next_leaf.load(std::memory_order_acquire) & kLeafPtrMask;
      if (pub) {
        h.frame = reinterpret_cast<SubgoalFrame*>(pub);
        h.consumer_only = true;
        return h;
      }
      SubgoalFrame* head =
          reinterpret_cast<SubgoalFrame*>(r.leaf->aux.load(std::memory_order_acquire));
      for (SubgoalFrame* f = head; f; f = f->next.load(std::memory_order_acquire)) {
        if (f->owner == w &&
            f->state.load(std::memory_order_acquire) !=
                static_cast<uint16_t>(FrameState::Discarded)) {
          h.frame = f;
          return h;
        }
      }
      SubgoalFrame* f = new_frame(heap, w, r.leaf, te, &key);
      uintptr_t cur = r.leaf->aux.load(std::memory_order_acquire);
      do {
        f->next.store(reinterpret_cast<SubgoalFrame*>(cur), std::memory_order_relaxed);
      } while (!r.leaf->aux.compare_exchange_weak(
          cur, reinterpret_cast<uintptr_t>(f), std::memory_order_acq_rel,
          std::memory_order_acquire));
      h.frame = f;
      h.created_frame = true;
      return h;
    }
    case Design::FS:
    case Design::PAC: {
      auto r = te->subgoal_trie->check_insert(env_, heap, tokens, false);
      h.leaf = r.leaf;
      uintptr_t aux = r.leaf->aux.load(std::memory_order_acquire);
      if (!aux) {
        auto* se = new (alloc_->alloc_block(heap, t_sentry_)) SubgoalEntry{};
        se->answers.init(t_answer_node_, static_cast<uint8_t>(env_.cfg.hash_bits));
        uintptr_t expect = 0;
        if (r.leaf->aux.compare_exchange_strong(expect,
                                                reinterpret_cast<uintptr_t>(se),
                                                std::memory_order_acq_rel,
                                                std::memory_order_acquire)) {
          aux = reinterpret_cast<uintptr_t>(se);
        } else {
          alloc_->free_block(heap, se);
          aux = expect;
        }
      }
      auto* se = reinterpret_cast<SubgoalEntry*>(aux);
      h.se = se;
      BucketArray* ba = se->ba.load(std::memory_order_acquire);
      if (!ba) {
        auto* fresh = new (alloc_->alloc_block(heap, t_ba_)) BucketArray{};
        if (se->ba.compare_exchange_strong(ba, fresh, std::memory_order_acq_rel,
                                           std::memory_order_acquire)) {
          ba = fresh;
        } else {
          alloc_->free_block(heap, fresh);
        }
      }
      auto& cell = ba_cell(ba, w, heap, true);
      auto* f = static_cast<FsFrame*>(cell.load(std::memory_order_acquire));
      if (!f) {
        f = new_fsframe(heap, w, se);
        cell.store(f, std::memory_order_release);
        h.created_frame = true;
      }
      h.fsframe = f;
      return h;
    }
  }
  throw error("unreachable");
}

bool TableSpace::refresh_completion(SubgoalHandle& h, WorkerId w,
                                    std::vector<SubgoalFrame*>* my_discards) {
  HeapId heap = heap_of(w);
  switch (design_) {
    case Design::PAS: {
      if (h.consumer_only) return false;
      uintptr_t pub = h.leaf->next_leaf.load(std::memory_order_acquire) & kLeafPtrMask;
      auto* winner = reinterpret_cast<SubgoalFrame*>(pub);
      if (!winner || winner == h.frame) return false;
      // another thread published a completed table: abandon the private
      // evaluation, drop the private answer trie, consume the winner
      h.frame->state.store(static_cast<uint16_t>(FrameState::Discarded),
                           std::memory_order_release);
      h.frame->answers.destroy(env_, heap);
      if (my_discards) my_discards->push_back(h.frame);
      h.frame = winner;
      h.consumer_only = true;
      return true;
    }
    case Design::FS:
    case Design::PAC: {
      if (!h.se->completed.load(std::memory_order_acquire)) return false;
      if (h.fsframe->state.load(std::memory_order_acquire) ==
          static_cast<uint16_t>(FrameState::Complete))
        return false;
      h.fsframe->state.store(static_cast<uint16_t>(FrameState::Complete),
                             std::memory_order_release);
      if (design_ == Design::PAC) free_private_chain(h.fsframe, heap);
      return true;
    }
    default:
      return false;
  }
}

bool TableSpace::private_chain_insert(FsFrame* f, TrieNode* leaf, HeapId heap) {
  // Private to one thread ("without concurrency support"): plain walks.
  const unsigned w = env_.cfg.hash_bits;
  const unsigned fanout = 1u << w;
  if (f->chain_hash) {
    uint64_t h = token_hash(reinterpret_cast<uintptr_t>(leaf));
    HashArray* ha = f->chain_hash;
    unsigned shift = 0;
    for (;;) {
      auto& e = ha->entry[(h >> shift) & (fanout - 1)];
      uintptr_t v = e.load(std::memory_order_relaxed);
      if ((v & 3) == 2) {  // nested array
        ha = reinterpret_cast<HashArray*>(v & ~uintptr_t{7});
        shift += w;
        continue;
      }
      size_t len = 0;
      for (auto* c = reinterpret_cast<ChainCell*>(v & ~uintptr_t{7}); c; c = c->next) {
        if (c->node == reinterpret_cast<TrieNode*>(leaf)) return false;
        len++;
      }
      if (len >= env_.cfg.saturation_threshold && shift + w < 64) {
        auto* child = static_cast<HashArray*>(alloc_->alloc_block(heap, t_harray_));
        for (auto& ce : child->entry) ce.store(0, std::memory_order_relaxed);
        for (auto* c = reinterpret_cast<ChainCell*>(v & ~uintptr_t{7}); c;) {
          ChainCell* nx = c->next;
          uint64_t ch = token_hash(reinterpret_cast<uintptr_t>(c->node));
          auto& ce = child->entry[(ch >> (shift + w)) & (fanout - 1)];
          c->next = reinterpret_cast<ChainCell*>(ce.load(std::memory_order_relaxed) &
                                                 ~uintptr_t{7});
          ce.store(reinterpret_cast<uintptr_t>(c), std::memory_order_relaxed);
          c = nx;
        }
        e.store(reinterpret_cast<uintptr_t>(child) | 2, std::memory_order_relaxed);
        ha = child;
        shift += w;
        continue;
      }
      auto* cell = static_cast<ChainCell*>(alloc_->alloc_block(heap, t_cell_));
      cell->node = reinterpret_cast<TrieNode*>(leaf);
      cell->next = reinterpret_cast<ChainCell*>(v & ~uintptr_t{7});
      e.store(reinterpret_cast<uintptr_t>(cell), std::memory_order_relaxed);
      return true;
    }
  }
  for (AnswerChainNode* n = f->chain_head; n; n = n->next)
    if (n->leaf == leaf) return false;
  if (f->chain_count >= env_.cfg.saturation_threshold) {
    // switch the membership probe to the hash mechanism
    auto* ha = static_cast<HashArray*>(alloc_->alloc_block(heap, t_harray_));
    for (auto& ce : ha->entry) ce.store(0, std::memory_order_relaxed);
    f->chain_hash = ha;
    for (AnswerChainNode* n = f->chain_head; n; n = n->next) {
      uint64_t h = token_hash(reinterpret_cast<uintptr_t>(n->leaf));
      auto& e = ha->entry[h & (fanout - 1)];
      auto* cell = static_cast<ChainCell*>(alloc_->alloc_block(heap, t_cell_));
      cell->node = reinterpret_cast<TrieNode*>(n->leaf);
      cell->next =
          reinterpret_cast<ChainCell*>(e.load(std::memory_order_relaxed) & ~uintptr_t{7});
      e.store(reinterpret_cast<uintptr_t>(cell), std::memory_order_relaxed);
    }
    return private_chain_insert(f, leaf, heap);
  }
  return true;  // caller appends the chain node
}

void TableSpace::free_private_chain(FsFrame* f, HeapId heap) {
  for (AnswerChainNode* n = f->chain_head; n;) {
    AnswerChainNode* nx = n->next;
    alloc_->free_block(heap, n);
    n = nx;
  }
  f->chain_head = f->chain_tail = nullptr;
  f->chain_count = 0;
  if (f->chain_hash) {
    struct Rec {
      PageAllocator* alloc;
      HeapId heap;
      unsigned fanout;
      void free_ha(HashArray* ha) {
        for (unsigned i = 0; i < fanout; ++i) {
          uintptr_t v = ha->entry[i].load(std::memory_order_relaxed);
          if ((v & 3) == 2) {
            free_ha(reinterpret_cast<HashArray*>(v & ~uintptr_t{7}));
          } else {
            for (auto* c = reinterpret_cast<ChainCell*>(v & ~uintptr_t{7}); c;) {
              ChainCell* nx = c->next;
              alloc->free_block(heap, c);
              c = nx;
            }
          }
        }
        alloc->free_block(heap, ha);
      }
    } rec{alloc_, heap, 1u << env_.cfg.hash_bits};
    rec.free_ha(f->chain_hash);
    f->chain_hash = nullptr;
  }
}

RecordResult TableSpace::record_answer(SubgoalHandle& h, std::span<const Token> tokens,
                                       WorkerId w) {
  HeapId heap = heap_of(w);
  RecordResult res;
  if (tokens.empty()) {
    // zero-variable subgoal: the single empty answer is represented by a
    // reserved token so the trie keeps one leaf per proposition
    static const Token unit = tok::atom(SymbolTable::intern("$unit"));
    tokens = std::span<const Token>(&unit, 1);
  }
  switch (design_) {
    case Design::NS:
    case Design::SS:
    case Design::PAS: {
      if (h.consumer_only)
        throw contract_error("PAS consumers never record answers");
      if (h.frame->state.load(std::memory_order_acquire) ==
          static_cast<uint16_t>(FrameState::Complete))
        throw contract_error("recording on a completed table");
      auto r = h.frame->answers.check_insert(env_, heap, tokens, true);
      res.leaf = r.leaf;
      res.new_in_trie = r.inserted;
      res.new_for_thread = r.inserted;
      return res;
    }
    case Design::FS: {
      auto r = h.se->answers.check_insert(env_, heap, tokens, true);
      res.leaf = r.leaf;
      res.new_in_trie = r.inserted;
      // trie-level discrimination only: sufficient for local scheduling
      res.new_for_thread = r.inserted;
      if (r.inserted && h.se->completed.load(std::memory_order_acquire))
        throw contract_error("new answer recorded on a completed table");
      return res;
    }
    case Design::PAC: {
      auto r = h.se->answers.check_insert(env_, heap, tokens, false);
      res.leaf = r.leaf;
      res.new_in_trie = r.inserted;
      if (r.inserted && h.se->completed.load(std::memory_order_acquire))
        throw contract_error("new answer recorded on a completed table");
      // answer propagation is private: the thread's own chain decides
      if (private_chain_insert(h.fsframe, r.leaf, heap)) {
        auto* n = static_cast<AnswerChainNode*>(alloc_->alloc_block(heap, t_chain_));
        n->leaf = r.leaf;
        n->next = nullptr;
        if (h.fsframe->chain_tail)
          h.fsframe->chain_tail->next = n;
        else
          h.fsframe->chain_head = n;
        h.fsframe->chain_tail = n;
        h.fsframe->chain_count++;
        res.new_for_thread = true;
      }
      return res;
    }
  }
  throw error("unreachable");
}

namespace {
// Tokens of the path from just below `stop` down to `n`, in order.
void path_tokens_until(const TrieNode* n, const TrieNode* stop,
                       std::vector<Token>& out) {
  out.clear();
  for (const TrieNode* c = n; c && c != stop; c = c->parent) out.push_back(c->token);
  std::reverse(out.begin(), out.end());
}
}  // namespace

void TableSpace::invalidate_answer(SubgoalHandle& h, TrieNode* leaf, WorkerId w) {
  if (design_ == Design::FS || design_ == Design::PAC)
    throw config_error("invalidation on concurrently written answer tries is "
                       "unsupported (FS/PAC)");
  if (!h.frame || h.frame->owner != w)
    throw contract_error("invalidation requires the owning thread");
  HeapId heap = heap_of(w);
  Trie& trie = h.frame->answers;
  TrieNode* root = trie.root();
  if (leaf->is_invalid()) return;
  // free intermediate nodes that serve this answer alone
  TrieNode* top = leaf;
  while (top->parent && top->parent != root &&
         Trie::count_children(top->parent, 2) == 1 && !top->parent->is_leaf())
    top = top->parent;
  if (top != leaf) {
    trie.remove_child(env_, heap, top->parent, top);
    TrieNode* n = top;
    while (n != leaf) {
      TrieNode* child = nullptr;
      Trie::for_each_child(n, [&](TrieNode* c) { child = c; });
      alloc_->free_block(heap, n);
      n = child;
    }
    leaf->parent = nullptr;
  }
  leaf->next_leaf.fetch_or(kInvalidBit, std::memory_order_acq_rel);
}

// Physically removes invalid leaves at completion: unlink from the trie and
// the leaf list, then prune ancestors left without children.
bool TableSpace::purge_invalid_leaves(Trie& trie, HeapId heap) {
  TrieNode* root = trie.root();
  if (!root) return false;
  bool any = false;
  for (TrieNode* l = root->leaf_next(); l && !any; l = l->leaf_next())
    any = l->is_invalid();
  if (!any) return false;
  TrieNode* prev = root;
  uint64_t kept = 0;
  TrieNode* cur = root->leaf_next();
  while (cur) {
    TrieNode* next = cur->leaf_next();
    if (cur->is_invalid()) {
      if (cur->parent) {
        TrieNode* p = cur->parent;
        trie.remove_child(env_, heap, p, cur);
        while (p && p != root && !p->is_leaf() && Trie::count_children(p, 1) == 0) {
          TrieNode* pp = p->parent;
          trie.remove_child(env_, heap, pp, p);
          alloc_->free_block(heap, p);
          p = pp;
        }
      }
      alloc_->free_block(heap, cur);
    } else {
      uintptr_t pv = prev->next_leaf.load(std::memory_order_relaxed);
      prev->next_leaf.store((pv & ~kLeafPtrMask) | reinterpret_cast<uintptr_t>(cur),
                            std::memory_order_relaxed);
      prev = cur;
      kept++;
    }
    cur = next;
  }
  uintptr_t pv = prev->next_leaf.load(std::memory_order_relaxed);
  prev->next_leaf.store(pv & ~kLeafPtrMask, std::memory_order_relaxed);
  if (trie.leaves().tail.load(std::memory_order_relaxed))
    trie.leaves().tail.store(prev == root ? root : prev, std::memory_order_relaxed);
  trie.leaves().count.store(kept, std::memory_order_relaxed);
  return true;
}

void TableSpace::complete_subgoal(SubgoalHandle& h, WorkerId w) {
  HeapId heap = heap_of(w);
  switch (design_) {
    case Design::NS:
    case Design::SS: {
      if (purge_invalid_leaves(h.frame->answers, heap)) h.frame->epoch++;
      h.frame->state.store(static_cast<uint16_t>(FrameState::Complete),
                           std::memory_order_release);
      return;
    }
    case Design::PAS: {
      if (h.consumer_only) return;
      if (purge_invalid_leaves(h.frame->answers, heap)) h.frame->epoch++;
      // publish at the head position; the first published frame wins
      uintptr_t v = h.leaf->next_leaf.load(std::memory_order_acquire);
      for (;;) {
        if (v & kLeafPtrMask) break;  // someone else won
        uintptr_t desired = v | reinterpret_cast<uintptr_t>(h.frame);
        if (h.leaf->next_leaf.compare_exchange_weak(v, desired,
                                                    std::memory_order_acq_rel,
                                                    std::memory_order_acquire)) {
          h.frame->state.store(static_cast<uint16_t>(FrameState::Complete),
                               std::memory_order_release);
          return;
        }
      }
      auto* winner =
          reinterpret_cast<SubgoalFrame*>(v & kLeafPtrMask);
      if (winner != h.frame) {
        // completing after another thread published: discard the private copy
        h.frame->state.store(static_cast<uint16_t>(FrameState::Discarded),
                             std::memory_order_release);
        h.frame->answers.destroy(env_, heap);
        h.frame = winner;
        h.consumer_only = true;
      }
      return;
    }
    case Design::FS: {
      h.se->completed.store(1, std::memory_order_release);
      h.fsframe->state.store(static_cast<uint16_t>(FrameState::Complete),
                             std::memory_order_release);
      return;
    }
    case Design::PAC: {
      if (!h.se->completed.load(std::memory_order_acquire)) {
        // single chainer: the public chain is built inside a critical region
        uint32_t expect = 0;
        while (!h.se->latch.compare_exchange_weak(expect, 1,
                                                  std::memory_order_acq_rel,
                                                  std::memory_order_acquire)) {
          expect = 0;
        }
        if (!h.se->completed.load(std::memory_order_acquire)) {
          TrieNode* root = h.se->answers.root();
          for (AnswerChainNode* n = h.fsframe->chain_head; n; n = n->next)
            h.se->answers.leaves().append(root, n->leaf);
          h.se->completed.store(1, std::memory_order_release);
        }
        h.se->latch.store(0, std::memory_order_release);
      }
      free_private_chain(h.fsframe, heap);
      h.fsframe->state.store(static_cast<uint16_t>(FrameState::Complete),
                             std::memory_order_release);
      return;
    }
  }
}

bool TableSpace::is_complete(const SubgoalHandle& h) const {
  switch (design_) {
    case Design::FS:
    case Design::PAC:
      return h.se->completed.load(std::memory_order_acquire) != 0;
    default:
      return h.frame->state.load(std::memory_order_acquire) ==
             static_cast<uint16_t>(FrameState::Complete);
  }
}

TableSpace::Stream TableSpace::answer_stream(const SubgoalHandle& h) const {
  Stream s;
  if (design_ == Design::PAC &&
      !h.se->completed.load(std::memory_order_acquire)) {
    s.pac_frame = h.fsframe;
    return s;
  }
  if (design_ == Design::FS || design_ == Design::PAC)
    s.trie = &h.se->answers;
  else
    s.trie = &h.frame->answers;
  return s;
}

uint64_t TableSpace::Stream::size() const {
  if (pac_frame) return pac_frame->chain_count;
  return trie ? trie->leaves().size() : 0;
}

uint64_t TableSpace::subgoal_count(const TableEntry* te) const {
  if (design_ == Design::NS) {
    BucketArray* ba = te->ns_roots.load(std::memory_order_acquire);
    uint64_t best = 0;
    for (WorkerId w = 0; w < kThreadCeiling; ++w) {
      const std::atomic<void*>* cell = nullptr;
      if (w < kBucketDirect) {
        cell = &ba->direct[w];
      } else {
        BucketGroup* g =
            ba->groups[(w - kBucketDirect) / kBucketGroupSize].load(
                std::memory_order_acquire);
        if (!g) {
          w += kBucketGroupSize - 1;
          continue;
        }
        cell = &g->cells[(w - kBucketDirect) % kBucketGroupSize];
      }
      auto* t = static_cast<Trie*>(cell->load(std::memory_order_acquire));
      if (t) best = std::max(best, t->stats().leaves);
    }
    return best;
  }
  return te->subgoal_trie->stats().leaves;
}

namespace {
void for_each_leaf(const Trie& t, const std::function<void(TrieNode*)>& fn) {
  TrieNode* root = t.root();
  if (!root) return;
  struct W {
    const std::function<void(TrieNode*)>& fn;
    void walk(TrieNode* n) {
      if (n->is_leaf()) fn(n);
      Trie::for_each_child(n, [&](TrieNode* c) { walk(c); });
    }
  } w{fn};
  w.walk(root);
}
}  // namespace

Census TableSpace::census() const {
  Census c;
  c.design = design_;
  for (TableEntry* te : entries_) {
    PredCensus pc;
    pc.pred = te->pred;
    std::map<std::vector<Token>, CallCensus> calls;
    std::vector<Token> keybuf;

    auto note_at = [&](CallCensus& cc, const Trie& at) {
      TrieStats st = at.stats();
      if (cc.frames == 0 && cc.entries == 0) {
        cc.at_nodes = st.nodes;
      } else if (cc.at_nodes != st.nodes) {
        cc.at_uniform = false;
        cc.at_nodes = std::max<uint64_t>(cc.at_nodes, st.nodes);
      }
      cc.answers = std::max<uint64_t>(cc.answers, at.leaves().size());
    };

    if (design_ == Design::NS) {
      BucketArray* ba = te->ns_roots.load(std::memory_order_acquire);
      pc.bucket_arrays = ba ? 1 : 0;
      if (ba)
        for (auto& gslot : ba->groups)
          if (gslot.load(std::memory_order_acquire)) pc.bucket_groups++;
      for (WorkerId w = 0; w < kThreadCeiling && ba; ++w) {
        const std::atomic<void*>* cell;
        if (w < kBucketDirect) {
          cell = &ba->direct[w];
        } else {
          BucketGroup* g = ba->groups[(w - kBucketDirect) / kBucketGroupSize].load(
              std::memory_order_acquire);
          if (!g) {
            w += kBucketGroupSize - 1;
            continue;
          }
          cell = &g->cells[(w - kBucketDirect) % kBucketGroupSize];
        }
        auto* mytrie = static_cast<Trie*>(cell->load(std::memory_order_acquire));
        if (!mytrie) continue;
        TrieStats st = mytrie->stats();
        if (pc.st_tries == 0)
          pc.st_nodes = st.nodes;
        else if (pc.st_nodes != st.nodes)
          pc.st_uniform = false;
        pc.st_tries++;
        for_each_leaf(*mytrie, [&](TrieNode* leaf) {
          auto* f = reinterpret_cast<SubgoalFrame*>(
              leaf->aux.load(std::memory_order_acquire));
          if (!f) return;
          path_tokens_until(leaf, nullptr, keybuf);
          CallCensus& cc = calls[keybuf];
          note_at(cc, f->answers);
          cc.frames++;
        });
      }
    } else {
      TrieStats st = te->subgoal_trie->stats();
      pc.st_nodes = st.nodes;
      pc.st_tries = 1;
      for_each_leaf(*te->subgoal_trie, [&](TrieNode* leaf) {
        path_tokens_until(leaf, nullptr, keybuf);
        CallCensus& cc = calls[keybuf];
        uintptr_t aux = leaf->aux.load(std::memory_order_acquire);
        if (!aux) return;
        switch (design_) {
          case Design::SS: {
            auto* ba = reinterpret_cast<BucketArray*>(aux);
            cc.bucket_arrays++;
            for (WorkerId w = 0; w < kThreadCeiling; ++w) {
              const std::atomic<void*>* cell;
              if (w < kBucketDirect) {
                cell = &ba->direct[w];
              } else {
                unsigned gi = (w - kBucketDirect) / kBucketGroupSize;
                BucketGroup* g = ba->groups[gi].load(std::memory_order_acquire);
                if (!g) {
                  w += kBucketGroupSize - 1;
                  continue;
                }
                if ((w - kBucketDirect) % kBucketGroupSize == 0) cc.bucket_groups++;
                cell = &g->cells[(w - kBucketDirect) % kBucketGroupSize];
              }
              auto* f = static_cast<SubgoalFrame*>(cell->load(std::memory_order_acquire));
              if (!f) continue;
              note_at(cc, f->answers);
              cc.frames++;
            }
            break;
          }
          case Design::PAS: {
            for (auto* f = reinterpret_cast<SubgoalFrame*>(aux); f;
                 f = f->next.load(std::memory_order_acquire)) {
              if (f->state.load(std::memory_order_acquire) ==
                  static_cast<uint16_t>(FrameState::Discarded)) {
                cc.discarded_frames++;
                continue;
              }
              note_at(cc, f->answers);
              cc.frames++;
            }
            break;
          }
          case Design::FS:
          case Design::PAC: {
            auto* se = reinterpret_cast<SubgoalEntry*>(aux);
            cc.entries++;
            note_at(cc, se->answers);
            BucketArray* ba = se->ba.load(std::memory_order_acquire);
            if (ba) {
              cc.bucket_arrays++;
              for (WorkerId w = 0; w < kThreadCeiling; ++w) {
                const std::atomic<void*>* cell;
                if (w < kBucketDirect) {
                  cell = &ba->direct[w];
                } else {
                  unsigned gi = (w - kBucketDirect) / kBucketGroupSize;
                  BucketGroup* g = ba->groups[gi].load(std::memory_order_acquire);
                  if (!g) {
                    w += kBucketGroupSize - 1;
                    continue;
                  }
                  if ((w - kBucketDirect) % kBucketGroupSize == 0) cc.bucket_groups++;
                  cell = &g->cells[(w - kBucketDirect) % kBucketGroupSize];
                }
                auto* f = static_cast<FsFrame*>(cell->load(std::memory_order_acquire));
                if (!f) continue;
                cc.frames++;
                cc.chain_nodes += f->chain_count;
              }
            }
            break;
          }
          default:
            break;
        }
      });
    }
    for (auto& [k, cc] : calls) pc.calls.push_back(cc);
    c.preds.push_back(std::move(pc));
  }
  return c;
}

namespace {
void merge_stats(TrieStats& into, const TrieStats& s) {
  if (s.nodes == 0) return;
  if (into.nodes == 0) {
    into = s;
    return;
  }
  into.nodes += s.nodes;
  into.leaves += s.leaves;
  into.depth_total += s.depth_total;
  into.min_depth = std::min(into.min_depth, s.min_depth);
  into.max_depth = std::max(into.max_depth, s.max_depth);
  into.avg_depth = into.leaves
                       ? static_cast<double>(into.depth_total) /
                             static_cast<double>(into.leaves)
                       : 0.0;
}
}  // namespace

TableSpace::SpaceStats TableSpace::aggregate_stats() const {
  SpaceStats out;
  auto visit_frames = [&](const Trie& strie) {
    merge_stats(out.subgoal, strie.stats());
    for_each_leaf(strie, [&](TrieNode* leaf) {
      uintptr_t aux = leaf->aux.load(std::memory_order_acquire);
      if (!aux) return;
      switch (design_) {
        case Design::NS:
          merge_stats(out.answer,
                      reinterpret_cast<SubgoalFrame*>(aux)->answers.stats());
          break;
        case Design::SS: {
          auto* ba = reinterpret_cast<BucketArray*>(aux);
          for (WorkerId w = 0; w < kThreadCeiling; ++w) {
            const std::atomic<void*>* cell;
            if (w < kBucketDirect) {
              cell = &ba->direct[w];
            } else {
              BucketGroup* g = ba->groups[(w - kBucketDirect) / kBucketGroupSize].load(
                  std::memory_order_acquire);
              if (!g) {
                w += kBucketGroupSize - 1;
                continue;
              }
              cell = &g->cells[(w - kBucketDirect) % kBucketGroupSize];
            }
            auto* f = static_cast<SubgoalFrame*>(cell->load(std::memory_order_acquire));
            if (f) merge_stats(out.answer, f->answers.stats());
          }
          break;
        }
        case Design::PAS: {
          for (auto* f = reinterpret_cast<SubgoalFrame*>(aux); f;
               f = f->next.load(std::memory_order_acquire)) {
            if (f->state.load(std::memory_order_acquire) !=
                static_cast<uint16_t>(FrameState::Discarded))
              merge_stats(out.answer, f->answers.stats());
          }
          break;
        }
        case Design::FS:
        case Design::PAC:
          merge_stats(out.answer,
                      reinterpret_cast<SubgoalEntry*>(aux)->answers.stats());
          break;
      }
    });
  };
  for (TableEntry* te : entries_) {
    if (design_ == Design::NS) {
      BucketArray* ba = te->ns_roots.load(std::memory_order_acquire);
      for (WorkerId w = 0; w < kThreadCeiling && ba; ++w) {
        const std::atomic<void*>* cell;
        if (w < kBucketDirect) {
          cell = &ba->direct[w];
        } else {
          BucketGroup* g = ba->groups[(w - kBucketDirect) / kBucketGroupSize].load(
              std::memory_order_acquire);
          if (!g) {
            w += kBucketGroupSize - 1;
            continue;
          }
          cell = &g->cells[(w - kBucketDirect) % kBucketGroupSize];
        }
        auto* mytrie = static_cast<Trie*>(cell->load(std::memory_order_acquire));
        if (mytrie) visit_frames(*mytrie);
      }
    } else {
      visit_frames(*te->subgoal_trie);
    }
  }
  return out;
}

void TableSpace::abolish_tables() {
  if (entries_.empty()) return;  // abolishing twice is a no-op
  HeapId heap = 0;
  alloc_->adopt_all(heap);

  auto free_ba = [&](BucketArray* ba) {
    if (!ba) return;
    for (auto& gslot : ba->groups) {
      BucketGroup* g = gslot.load(std::memory_order_relaxed);
      if (g) alloc_->free_block(heap, g);
    }
    alloc_->free_block(heap, ba);
  };

  for (TableEntry* te : entries_) {
    if (design_ == Design::NS) {
      BucketArray* ba = te->ns_roots.load(std::memory_order_relaxed);
      for (WorkerId w = 0; w < kThreadCeiling && ba; ++w) {
        std::atomic<void*>* cell;
        if (w < kBucketDirect) {
          cell = &ba->direct[w];
        } else {
          BucketGroup* g = ba->groups[(w - kBucketDirect) / kBucketGroupSize].load(
              std::memory_order_relaxed);
          if (!g) {
            w += kBucketGroupSize - 1;
            continue;
          }
          cell = &g->cells[(w - kBucketDirect) % kBucketGroupSize];
        }
        auto* mytrie = static_cast<Trie*>(cell->load(std::memory_order_relaxed));
        if (!mytrie) continue;
        for_each_leaf(*mytrie, [&](TrieNode* leaf) {
          auto* f =
              reinterpret_cast<SubgoalFrame*>(leaf->aux.load(std::memory_order_relaxed));
          if (f) destroy_frame(f, heap);
        });
        mytrie->destroy(env_, heap);
        alloc_->free_block(heap, mytrie);
      }
      free_ba(ba);
    } else {
      for_each_leaf(*te->subgoal_trie, [&](TrieNode* leaf) {
        uintptr_t aux = leaf->aux.load(std::memory_order_relaxed);
        if (!aux) return;
        switch (design_) {
          case Design::SS: {
            auto* ba = reinterpret_cast<BucketArray*>(aux);
            for (WorkerId w = 0; w < kThreadCeiling; ++w) {
              std::atomic<void*>* cell;
              if (w < kBucketDirect) {
                cell = &ba->direct[w];
              } else {
                BucketGroup* g =
                    ba->groups[(w - kBucketDirect) / kBucketGroupSize].load(
                        std::memory_order_relaxed);
                if (!g) {
                  w += kBucketGroupSize - 1;
                  continue;
                }
                cell = &g->cells[(w - kBucketDirect) % kBucketGroupSize];
              }
              auto* f = static_cast<SubgoalFrame*>(cell->load(std::memory_order_relaxed));
              if (f) destroy_frame(f, heap);
            }
            free_ba(ba);
            break;
          }
          case Design::PAS: {
            auto* f = reinterpret_cast<SubgoalFrame*>(aux);
            while (f) {
              SubgoalFrame* nx = f->next.load(std::memory_order_relaxed);
              destroy_frame(f, heap);
              f = nx;
            }
            break;
          }
          case Design::FS:
          case Design::PAC: {
            auto* se = reinterpret_cast<SubgoalEntry*>(aux);
            BucketArray* ba = se->ba.load(std::memory_order_relaxed);
            for (WorkerId w = 0; w < kThreadCeiling && ba; ++w) {
              std::atomic<void*>* cell;
              if (w < kBucketDirect) {
                cell = &ba->direct[w];
              } else {
                BucketGroup* g =
                    ba->groups[(w - kBucketDirect) / kBucketGroupSize].load(
                        std::memory_order_relaxed);
                if (!g) {
                  w += kBucketGroupSize - 1;
                  continue;
                }
                cell = &g->cells[(w - kBucketDirect) % kBucketGroupSize];
              }
              auto* f = static_cast<FsFrame*>(cell->load(std::memory_order_relaxed));
              if (!f) continue;
              free_private_chain(f, heap);
              alloc_->free_block(heap, f);
            }
            free_ba(ba);
            se->answers.destroy(env_, heap);
            alloc_->free_block(heap, se);
            break;
          }
          default:
            break;
        }
      });
      te->subgoal_trie->destroy(env_, heap);
      alloc_->free_block(heap, te->subgoal_trie);
    }
    alloc_->free_block(heap, te);
  }
  entries_.clear();
  by_pred_.clear();
  arena_.reset();
}

void TableSpace::destroy_frame(SubgoalFrame* f, HeapId heap) {
  f->answers.destroy(env_, heap);
  alloc_->free_block(heap, f);
}

// ---------------------------------------------------------------------------
// Mode-directed insertion

ModeResult TableSpace::mode_directed_insert(SubgoalHandle& h,
                                            std::span<const Token> tokens,
                                            std::span<const uint32_t> var_ends,
                                            WorkerId w) {
  if (design_ == Design::FS || design_ == Design::PAC)
    throw config_error("mode-directed tabling is limited to NS/SS/PAS");
  if (!h.entry->moded) throw contract_error("predicate declared without modes");
  if (h.consumer_only) throw contract_error("PAS consumers never record answers");
  SubgoalFrame* f = h.frame;
  if (f->state.load(std::memory_order_acquire) ==
      static_cast<uint16_t>(FrameState::Complete))
    throw contract_error("recording on a completed table");
  HeapId heap = heap_of(w);
  const SubstInfo& si = f->subst;
  const TableEntry* te = h.entry;

  auto var_run = [&](uint32_t v) {
    uint32_t b = v == 0 ? 0 : var_ends[v - 1];
    return std::pair<uint32_t, uint32_t>(b, var_ends[v]);
  };

  // group path: index-variable runs in variable order
  std::vector<Token> group;
  std::vector<Token> out;
  for (uint32_t v = 0; v < si.nvars; ++v) {
    auto [b, e] = var_run(v);
    if (te->modes[si.var_arg[v]] == Mode::Index)
      group.insert(group.end(), tokens.begin() + b, tokens.begin() + e);
    else
      out.insert(out.end(), tokens.begin() + b, tokens.begin() + e);
  }
  Mode agg = Mode::All;
  for (uint32_t a = 0; a < te->arity; ++a)
    if (te->modes[a] != Mode::Index) {
      agg = te->modes[a];
      break;
    }
  if (out.empty()) {
    // degenerate: no output variable in this call (ground output argument)
    out.push_back(tok::atom(SymbolTable::intern("$unit")));
  }

  Trie& trie = f->answers;
  TrieNode* group_node = trie.ensure_root(env_, heap);
  for (Token t : group) {
    bool created = false;
    group_node = trie.find_or_insert_child(env_, heap, group_node, t, &created);
  }

  auto insert_under = [&](std::span<const Token> ts) -> Trie::InsertResult {
    TrieNode* cur = group_node;
    for (Token t : ts) {
      bool created = false;
      cur = trie.find_or_insert_child(env_, heap, cur, t, &created);
    }
    uintptr_t prev = cur->next_leaf.fetch_or(kLeafBit, std::memory_order_acq_rel);
    bool fresh = !(prev & kLeafBit);
    if (prev & kInvalidBit) {  // resurrected answer: clear the tag
      cur->next_leaf.fetch_and(~kInvalidBit, std::memory_order_acq_rel);
      fresh = false;
    }
    if (fresh) trie.leaves().append(trie.root(), cur);
    return {cur, fresh};
  };

  ModeResult mr{ModeOutcome::Kept, nullptr, false};

  if (agg == Mode::All) {
    auto r = insert_under(out);
    mr.leaf = r.leaf;
    mr.new_in_trie = r.inserted;
    mr.outcome = r.inserted ? ModeOutcome::Kept : ModeOutcome::Discarded;
    return mr;
  }

  auto* current =
      reinterpret_cast<TrieNode*>(group_node->aux.load(std::memory_order_relaxed));
  if (!current) {
    auto r = insert_under(out);
    group_node->aux.store(reinterpret_cast<uintptr_t>(r.leaf),
                          std::memory_order_relaxed);
    mr.leaf = r.leaf;
    mr.new_in_trie = r.inserted;
    mr.outcome = ModeOutcome::Kept;
    return mr;
  }

  std::vector<Token> old_out;
  path_tokens_until(current, group_node, old_out);

  auto replace_with = [&](std::span<const Token> ts) {
    auto r = insert_under(ts);
    group_node->aux.store(reinterpret_cast<uintptr_t>(r.leaf),
                          std::memory_order_relaxed);
    if (r.leaf != current) {
      SubgoalHandle tmp = h;
      invalidate_answer(tmp, current, w);
    }
    mr.leaf = r.leaf;
    mr.new_in_trie = r.inserted;
    mr.outcome = ModeOutcome::Replaced;
  };

  switch (agg) {
    case Mode::First:
      mr.outcome = ModeOutcome::Discarded;
      mr.leaf = current;
      break;
    case Mode::Last:
      if (old_out.size() == out.size() &&
          std::equal(out.begin(), out.end(), old_out.begin())) {
        mr.outcome = ModeOutcome::Discarded;
        mr.leaf = current;
      } else {
        replace_with(out);
      }
      break;
    case Mode::Min:
    case Mode::Max: {
      if (out.size() != 1 || tok::tag(out[0]) != tok::kInt ||
          old_out.size() != 1 || tok::tag(old_out[0]) != tok::kInt)
        throw structural_error("min/max requires integer output values");
      int64_t nv = tok::int_value(out[0]);
      int64_t ov = tok::int_value(old_out[0]);
      bool better = agg == Mode::Max ? nv > ov : nv < ov;  // ties keep the old answer
      if (better) {
        replace_with(out);
      } else {
        mr.outcome = ModeOutcome::Discarded;
        mr.leaf = current;
      }
      break;
    }
    case Mode::Sum: {
      if (out.size() != 1 || tok::tag(out[0]) != tok::kInt ||
          old_out.size() != 1 || tok::tag(old_out[0]) != tok::kInt)
        throw structural_error("sum requires integer output values");
      int64_t total = tok::int_value(out[0]) + tok::int_value(old_out[0]);
      Token t = tok::integer(total);
      if (total == tok::int_value(old_out[0])) {
        mr.outcome = ModeOutcome::Discarded;
        mr.leaf = current;
      } else {
        replace_with(std::span<const Token>(&t, 1));
      }
      break;
    }
    default:
      throw error("unreachable");
  }
  return mr;
}

}  // namespace tabkit
