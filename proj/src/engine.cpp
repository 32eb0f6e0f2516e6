#include "tabkit/engine.hpp"

#include <algorithm>
#include <cassert>
#include <thread>

namespace tabkit {

namespace {

uint64_t pred_of(const Term& t) {
  if (t.is_atom()) return predicate_id(t.symbol(), 0);
  if (t.is_compound())
    return predicate_id(t.symbol(), static_cast<uint32_t>(t.arity()));
  throw structural_error("literal must be an atom or compound term");
}

}  // namespace

Program compile_program(const ParsedProgram& parsed) {
  Program p;
  for (const TableDecl& d : parsed.tables) {
    auto& tp = p.tabled[d.pred];
    tp.modes = d.modes;
  }
  for (const Clause& cl : parsed.clauses) {
    uint64_t hp = pred_of(cl.head);
    if (cl.body.empty() && !p.tabled.count(hp)) {
      auto& e = p.edb[hp];
      e.arity = pred_arity(hp);
      if (!cl.head.ground()) throw structural_error("facts must be ground");
      std::vector<Term> row;
      if (cl.head.is_compound()) row = cl.head.args();
      e.rows.push_back(std::move(row));
      continue;
    }
    if (!p.tabled.count(hp))
      throw structural_error("rule head predicate must be tabled: " +
                             predicate_name(hp));
    p.tabled[hp].clauses.push_back(cl);
  }
  // body predicates must be defined (facts) or tabled
  for (auto& [pred, tp] : p.tabled) {
    for (auto& cl : tp.clauses)
      for (auto& lit : cl.body) {
        uint64_t bp = pred_of(lit);
        if (!p.tabled.count(bp) && !p.edb.count(bp))
          throw structural_error("body predicate neither tabled nor fact-defined: " +
                                 predicate_name(bp));
      }
  }
  // positional indexes over the extensional relations
  for (auto& [pred, e] : p.edb) {
    e.index.resize(e.arity);
    for (uint32_t i = 0; i < e.rows.size(); ++i) {
      const auto& row = e.rows[i];
      for (uint32_t a = 0; a < row.size(); ++a) {
        const Term& t = row[a];
        if (t.is_atom())
          e.index[a][tok::atom(t.symbol())].push_back(i);
        else if (t.is_int())
          e.index[a][tok::integer(t.int_value())].push_back(i);
      }
    }
  }
  return p;
}

Program compile_program_text(const std::string& text) {
  return compile_program(parse_program(text));
}

// ---------------------------------------------------------------------------
// Worker-side evaluation machinery

namespace {

using Slots = std::vector<std::optional<Term>>;

const Term* walk(const Slots& env, const Term* t) {
  while (t->is_var()) {
    const auto& s = env[t->var_id()];
    if (!s) break;
    t = &*s;
  }
  return t;
}

bool unify(Slots& env, std::vector<uint32_t>& trail, const Term& a, const Term& b) {
  const Term* x = walk(env, &a);
  const Term* y = walk(env, &b);
  if (x->is_var()) {
    if (y->is_var() && x->var_id() == y->var_id()) return true;
    env[x->var_id()] = *y;
    trail.push_back(x->var_id());
    return true;
  }
  if (y->is_var()) {
    env[y->var_id()] = *x;
    trail.push_back(y->var_id());
    return true;
  }
  if (x->tag() != y->tag()) return false;
  switch (x->tag()) {
    case TermTag::Atom:
      return x->symbol() == y->symbol();
    case TermTag::Int:
      return x->int_value() == y->int_value();
    case TermTag::Compound: {
      if (x->symbol() != y->symbol() || x->arity() != y->arity()) return false;
      // copy args: the walked pointers may alias env slots we rebind
      Term xa = *x, ya = *y;
      for (size_t i = 0; i < xa.arity(); ++i)
        if (!unify(env, trail, xa.arg(i), ya.arg(i))) return false;
      return true;
    }
    default:
      return false;
  }
}

void undo_to(Slots& env, std::vector<uint32_t>& trail, size_t mark) {
  while (trail.size() > mark) {
    env[trail.back()].reset();
    trail.pop_back();
  }
}

// Flattens `t` under the environment, numbering unbound slots canonically.
void flatten_env(const Slots& env, const Term& t, std::vector<Token>& out,
                 std::vector<std::pair<uint32_t, uint32_t>>& var_map) {
  const Term* w = walk(env, &t);
  switch (w->tag()) {
    case TermTag::Atom:
      out.push_back(tok::atom(w->symbol()));
      return;
    case TermTag::Int:
      out.push_back(tok::integer(w->int_value()));
      return;
    case TermTag::Var: {
      uint32_t slot = w->var_id();
      for (auto& [s, c] : var_map)
        if (s == slot) {
          out.push_back(tok::var(c));
          return;
        }
      uint32_t c = static_cast<uint32_t>(var_map.size());
      var_map.emplace_back(slot, c);
      out.push_back(tok::var(c));
      return;
    }
    case TermTag::Compound: {
      Term copy = *w;  // detach from env before recursive rebinding lookups
      out.push_back(tok::functor(copy.symbol(), static_cast<uint32_t>(copy.arity())));
      for (const auto& a : copy.args()) flatten_env(env, a, out, var_map);
      return;
    }
  }
}

Term offset_vars(const Term& t, uint32_t base) {
  switch (t.tag()) {
    case TermTag::Var:
      return Term::var(t.var_id() + base);
    case TermTag::Compound: {
      std::vector<Term> args;
      args.reserve(t.arity());
      for (const auto& a : t.args()) args.push_back(offset_vars(a, base));
      return Term::compound_id(t.symbol(), std::move(args));
    }
    default:
      return t;
  }
}

struct OccState {
  uint64_t prev1 = 0;
  uint64_t pending = 0;
  uint64_t touched_pass = ~uint64_t{0};
  const void* sid = nullptr;
  uint64_t epoch = 0;
  const TrieNode* rnode = nullptr;  // resume node at index prev1 (trie streams)
  const AnswerChainNode* rchain = nullptr;
};

struct CompiledRule {
  const Clause* cl = nullptr;
  Slots base_env;
  std::vector<uint32_t> tocc;  // body positions of tabled literals
  bool applicable = false;
};

struct View;

struct GenState {
  View* view = nullptr;
  uint32_t dfn = 0, low = 0;
  bool on_stack = false;
  uint64_t pass_no = 0;
  size_t scc_index = 0;
  std::vector<CompiledRule> rules;
  // watermarks per (rule, occurrence, callee)
  std::vector<std::vector<std::map<TrieNode*, OccState>>> marks;
};

struct View {
  SubgoalHandle h;
  SubgoalKey key;
  std::unique_ptr<GenState> gen;
};

struct StreamKey {
  const void* id = nullptr;
  uint64_t epoch = 0;
};

struct PassSnap {
  std::unordered_map<const void*, uint64_t> sizes;
  bool progressed = false;
};

class Worker {
 public:
  Worker(const Program& prog, TableSpace& ts, const EvalConfig& cfg, WorkerId w)
      : prog_(prog), ts_(ts), cfg_(cfg), w_(w) {}

  void run(const Term& query) {
    SubgoalKey key = canonicalize(query);
    if (!prog_.tabled.count(key.pred))
      throw contract_error("query predicate is not tabled: " +
                           predicate_name(key.pred));
    View* v = evaluate(key);
    collect(v);
  }

  EvalStats stats;
  std::vector<RecordEvent> log;
  std::vector<std::vector<Token>> final_answers;  // sorted

 private:
  StreamKey stream_key(const SubgoalHandle& h) const {
    auto s = ts_.answer_stream(h);
    if (s.pac_frame) return {s.pac_frame, 0};
    uint64_t ep = h.frame ? h.frame->epoch : 0;
    if (!h.frame) ep = ts_.is_complete(h) ? 1 : 0;
    return {s.trie, ep};
  }

  View* evaluate(const SubgoalKey& key) {
    TableEntry* te = ts_.find_predicate(key.pred);
    if (!te)
      throw contract_error("unregistered tabled predicate " +
                           predicate_name(key.pred));
    SubgoalHandle h = ts_.subgoal_lookup_insert(te, key, w_);
    auto it = views_.find(h.leaf);
    if (it != views_.end()) {
      View* v = it->second.get();
      if (v->gen && v->gen->on_stack && !callers_.empty())
        callers_.back()->low = std::min(callers_.back()->low, v->gen->dfn);
      return v;
    }
    auto owned = std::make_unique<View>();
    View* v = owned.get();
    v->h = h;
    v->key = key;
    views_.emplace(h.leaf, std::move(owned));
    if (ts_.is_complete(h) || h.consumer_only) return v;

    v->gen = std::make_unique<GenState>();
    GenState* g = v->gen.get();
    g->view = v;
    g->dfn = g->low = next_dfn_++;
    g->on_stack = true;
    g->scc_index = scc_.size();
    scc_.push_back(g);
    compile_rules(g);

    callers_.push_back(g);
    if (cfg_.sched == Scheduling::Batched) {
      while (pass(g)) {
      }
    } else {
      pass(g);
    }
    callers_.pop_back();

    if (g->low == g->dfn) leader_rounds(g);
    if (!callers_.empty())
      callers_.back()->low = std::min(callers_.back()->low, g->low);
    return v;
  }

  void compile_rules(GenState* g) {
    const auto& tp = prog_.tabled.at(g->view->key.pred);
    const SubgoalKey& key = g->view->key;
    std::vector<Term> key_args = decode_terms(key.tokens);
    for (const Clause& cl : tp.clauses) {
      CompiledRule r;
      r.cl = &cl;
      Slots env(cl.nvars + key.nvars);
      std::vector<uint32_t> trail;
      bool ok = true;
      if (cl.head.is_compound()) {
        for (size_t i = 0; ok && i < cl.head.arity(); ++i)
          ok = unify(env, trail, cl.head.arg(i), offset_vars(key_args[i], cl.nvars));
      }
      if (!ok) continue;  // head incompatible with this subgoal
      r.applicable = true;
      r.base_env = std::move(env);
      for (uint32_t li = 0; li < cl.body.size(); ++li)
        if (prog_.tabled.count(pred_of(cl.body[li]))) r.tocc.push_back(li);
      g->rules.push_back(std::move(r));
    }
    g->marks.resize(g->rules.size());
    for (size_t i = 0; i < g->rules.size(); ++i)
      g->marks[i].resize(g->rules[i].tocc.size());
  }

  void leader_rounds(GenState* g) {
    size_t base = g->scc_index;
    for (;;) {
      if (observe_external_completion(base)) break;
      bool changed = false;
      for (size_t i = base; i < scc_.size(); ++i) {
        GenState* m = scc_[i];
        if (ts_.is_complete(m->view->h) || m->view->h.consumer_only) continue;
        callers_.push_back(m);
        if (cfg_.sched == Scheduling::Batched) {
          while (pass(m)) changed = true;
        } else {
          changed |= pass(m);
        }
        callers_.pop_back();
      }
      // a late edge may reach below this segment: leadership moves down
      uint32_t mn = g->dfn;
      for (size_t i = base; i < scc_.size(); ++i) mn = std::min(mn, scc_[i]->low);
      if (mn < g->dfn) {
        g->low = mn;
        return;  // an outer leader completes this segment later
      }
      if (!changed) break;
    }
    for (size_t i = scc_.size(); i-- > base;) {
      GenState* m = scc_[i];
      m->on_stack = false;
      if (!ts_.is_complete(m->view->h)) ts_.complete_subgoal(m->view->h, w_);
    }
    scc_.resize(base);
  }

  // Cross-thread completion: a published PAS frame (singleton segments) or
  // a completed FS/PAC entry lets this worker abandon its own evaluation.
  bool observe_external_completion(size_t base) {
    if (cfg_.threads <= 1) return false;
    Design d = ts_.design();
    if (d == Design::NS || d == Design::SS) return false;
    if (d == Design::PAS) {
      if (scc_.size() - base != 1) return false;
      GenState* m = scc_[base];
      if (!ts_.refresh_completion(m->view->h, w_, nullptr)) return false;
      m->on_stack = false;
      scc_.resize(base);
      return true;
    }
    bool all = true;
    for (size_t i = base; i < scc_.size(); ++i) {
      ts_.refresh_completion(scc_[i]->view->h, w_, nullptr);
      all = all && ts_.is_complete(scc_[i]->view->h);
    }
    if (!all) return false;
    for (size_t i = base; i < scc_.size(); ++i) scc_[i]->on_stack = false;
    scc_.resize(base);
    return true;
  }

  bool pass(GenState* g) {
    if (ts_.is_complete(g->view->h) || g->view->h.consumer_only) return false;
    PassSnap snap;
    for (size_t ri = 0; ri < g->rules.size(); ++ri) {
      CompiledRule& r = g->rules[ri];
      size_t m = r.tocc.size();
      if (m == 0) {
        if (g->pass_no == 0) run_rule(g, ri, 0, snap);
      } else {
        for (uint32_t v = 0; v < m; ++v) run_rule(g, ri, v, snap);
      }
    }
    // advance watermarks touched by this pass
    for (auto& per_rule : g->marks)
      for (auto& per_occ : per_rule)
        for (auto& [leaf, oc] : per_occ)
          if (oc.touched_pass == g->pass_no) oc.prev1 = oc.pending;
    g->pass_no++;
    return snap.progressed;
  }

  struct JoinCtx {
    GenState* g;
    CompiledRule* r;
    size_t rule_index;
    uint32_t version;
    PassSnap* snap;
    Slots env;
    std::vector<uint32_t> trail;
  };

  void run_rule(GenState* g, size_t ri, uint32_t version, PassSnap& snap) {
    JoinCtx cx{g, &g->rules[ri], ri, version, &snap, g->rules[ri].base_env, {}};
    resolve(cx, 0);
  }

  void resolve(JoinCtx& cx, size_t li) {
    const Clause& cl = *cx.r->cl;
    if (li == cl.body.size()) {
      derive(cx);
      return;
    }
    const Term& lit = cl.body[li];
    uint64_t pred = pred_of(lit);
    if (prog_.tabled.count(pred)) {
      resolve_tabled(cx, li, lit);
    } else {
      resolve_edb(cx, li, lit, prog_.edb.at(pred));
    }
  }

  void resolve_edb(JoinCtx& cx, size_t li, const Term& lit, const Program::Edb& e) {
    const std::vector<uint32_t>* cand = nullptr;
    std::vector<uint32_t> empty;
    // prefer an indexed position with a ground atom/int argument
    for (uint32_t a = 0; a < e.arity && lit.is_compound(); ++a) {
      const Term* wv = walk(cx.env, &lit.arg(a));
      Token t;
      if (wv->is_atom())
        t = tok::atom(wv->symbol());
      else if (wv->is_int())
        t = tok::integer(wv->int_value());
      else
        continue;
      auto it = e.index[a].find(t);
      cand = it == e.index[a].end() ? &empty : &it->second;
      break;
    }
    auto try_row = [&](uint32_t idx) {
      const auto& row = e.rows[idx];
      size_t mark = cx.trail.size();
      bool ok = true;
      for (size_t a = 0; ok && a < row.size(); ++a)
        ok = unify(cx.env, cx.trail, lit.is_compound() ? lit.arg(a) : lit, row[a]);
      if (ok) resolve(cx, li + 1);
      undo_to(cx.env, cx.trail, mark);
    };
    if (cand) {
      for (uint32_t idx : *cand) try_row(idx);
    } else {
      for (uint32_t idx = 0; idx < e.rows.size(); ++idx) try_row(idx);
    }
  }

  void resolve_tabled(JoinCtx& cx, size_t li, const Term& lit) {
    // occurrence index of this body position
    uint32_t occ = 0;
    while (cx.r->tocc[occ] != li) occ++;

    SubgoalKey key;
    key.pred = pred_of(lit);
    std::vector<std::pair<uint32_t, uint32_t>> var_map;  // env slot -> canonical
    if (lit.is_compound())
      for (const auto& a : lit.args()) flatten_env(cx.env, a, key.tokens, var_map);
    key.nvars = static_cast<uint32_t>(var_map.size());

    View* cv = evaluate(key);
    StreamKey sk = stream_key(cv->h);
    auto s = ts_.answer_stream(cv->h);

    OccState& oc = cx.g->marks[cx.rule_index][occ][cv->h.leaf];
    if (oc.sid != sk.id || oc.epoch != sk.epoch) {
      oc = OccState{};
      oc.sid = sk.id;
      oc.epoch = sk.epoch;
    }
    auto [snap_it, fresh] = cx.snap->sizes.try_emplace(sk.id, 0);
    if (fresh) snap_it->second = s.size();
    uint64_t cursnap = snap_it->second;
    if (oc.touched_pass != cx.g->pass_no) {
      oc.touched_pass = cx.g->pass_no;
      oc.pending = cursnap;
    }

    uint64_t a, b;
    if (occ == cx.version) {
      a = oc.prev1;
      b = cursnap;
      if (b > a) cx.snap->progressed = true;
    } else if (occ < cx.version) {
      a = 0;
      b = cursnap;
    } else {
      a = 0;
      b = oc.prev1;
    }
    if (a >= b) return;

    // iterate stream positions [a, b)
    std::vector<Term> values;
    auto consume_leaf = [&](const TrieNode* leaf) {
      if (leaf->is_invalid()) return;
      decode_leaf(leaf, cv->key.nvars, values);
      size_t mark = cx.trail.size();
      bool ok = true;
      size_t base = cx.env.size();
      uint32_t extra = 0;
      for (const Term& tv : values)
        if (!tv.ground()) extra = std::max(extra, max_var(tv) + 1);
      if (extra) cx.env.resize(base + extra);
      for (uint32_t k = 0; ok && k < cv->key.nvars; ++k) {
        const Term& tv = values[k];
        Term bound = extra ? offset_vars(tv, static_cast<uint32_t>(base)) : tv;
        ok = unify(cx.env, cx.trail, Term::var(var_map[k].first), bound);
      }
      if (ok) resolve(cx, li + 1);
      undo_to(cx.env, cx.trail, mark);
      if (extra) cx.env.resize(base);
    };

    if (s.pac_frame) {
      const AnswerChainNode* n = s.pac_frame->chain_head;
      uint64_t idx = 0;
      if (oc.rchain && a == oc.prev1 && a > 0) {
        n = oc.rchain;
        idx = a;
      } else {
        for (; idx < a && n; ++idx) n = n->next;
      }
      for (; idx < b && n; ++idx, n = n->next) consume_leaf(n->leaf);
      if (occ == cx.version) {
        oc.rchain = n;
      }
    } else {
      const TrieNode* root = s.trie->root();
      if (!root) return;
      const TrieNode* n;
      uint64_t idx;
      if (oc.rnode && a == oc.prev1 && a > 0) {
        n = oc.rnode->leaf_next();
        idx = a;
      } else {
        n = root->leaf_next();
        idx = 0;
        for (; idx < a && n; ++idx) n = n->leaf_next();
      }
      const TrieNode* last = nullptr;
      for (; idx < b && n; ++idx, n = n->leaf_next()) {
        consume_leaf(n);
        last = n;
      }
      if (occ == cx.version && last) oc.rnode = last;
    }
  }

  static uint32_t max_var(const Term& t) {
    if (t.is_var()) return t.var_id();
    uint32_t m = 0;
    if (t.is_compound())
      for (const auto& a : t.args()) m = std::max(m, max_var(a));
    return m;
  }

  void decode_leaf(const TrieNode* leaf, uint32_t nvars, std::vector<Term>& out) {
    tokbuf_.clear();
    for (const TrieNode* n = leaf; n && n->token != kRootToken; n = n->parent)
      tokbuf_.push_back(n->token);
    std::reverse(tokbuf_.begin(), tokbuf_.end());
    out.clear();
    size_t pos = 0;
    for (uint32_t k = 0; k < nvars; ++k) out.push_back(decode_term(tokbuf_, pos));
  }

  void derive(JoinCtx& cx) {
    GenState* g = cx.g;
    const SubgoalKey& key = g->view->key;
    uint32_t nrule = cx.r->cl->nvars;
    ansbuf_.clear();
    ends_.clear();
    std::vector<std::pair<uint32_t, uint32_t>> var_map;
    for (uint32_t k = 0; k < key.nvars; ++k) {
      flatten_env(cx.env, Term::var(nrule + k), ansbuf_, var_map);
      ends_.push_back(static_cast<uint32_t>(ansbuf_.size()));
    }
    if (g->view->h.entry->moded) {
      ModeResult mr = ts_.mode_directed_insert(g->view->h, ansbuf_, ends_, w_);
      switch (mr.outcome) {
        case ModeOutcome::Kept:
          stats.mode_kept++;
          break;
        case ModeOutcome::Replaced:
          stats.mode_replaced++;
          break;
        case ModeOutcome::Discarded:
          stats.mode_discarded++;
          break;
      }
      if (mr.new_in_trie) stats.unique++;
      if (mr.outcome != ModeOutcome::Discarded) cx.snap->progressed = true;
      return;
    }
    RecordResult rr = ts_.record_answer(g->view->h, ansbuf_, w_);
    if (rr.new_in_trie)
      stats.unique++;
    else
      stats.repeated++;
    if (rr.new_for_thread) cx.snap->progressed = true;
    if (cfg_.collect_record_log) log.push_back({w_, rr.leaf, rr.new_for_thread});
  }

  void collect(View* v) {
    auto s = ts_.answer_stream(v->h);
    final_answers.clear();
    if (s.trie && s.trie->root()) {
      for (const TrieNode* n = s.trie->root()->leaf_next(); n; n = n->leaf_next()) {
        if (n->is_invalid()) continue;
        std::vector<Token> toks;
        for (const TrieNode* p = n; p && p->token != kRootToken; p = p->parent)
          toks.push_back(p->token);
        std::reverse(toks.begin(), toks.end());
        final_answers.push_back(std::move(toks));
      }
    }
    std::sort(final_answers.begin(), final_answers.end());
  }

  const Program& prog_;
  TableSpace& ts_;
  const EvalConfig& cfg_;
  WorkerId w_;
  std::unordered_map<TrieNode*, std::unique_ptr<View>> views_;
  std::vector<GenState*> scc_;
  std::vector<GenState*> callers_;
  uint32_t next_dfn_ = 0;
  std::vector<Token> tokbuf_;
  std::vector<Token> ansbuf_;
  std::vector<uint32_t> ends_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Engine

Engine::Engine(Program prog, EvalConfig cfg) : prog_(std::move(prog)), cfg_(cfg) {
  if (cfg_.threads < 1 || cfg_.threads > kThreadCeiling)
    throw config_error("thread count must be in [1, 1024]");
  if (cfg_.design == Design::FS && cfg_.sched == Scheduling::Batched)
    throw config_error(
        "FS cannot discriminate per-thread repeated answers; "
        "batched scheduling requires PAC");
  cfg_.alloc.max_threads = std::max(cfg_.alloc.max_threads, cfg_.threads + 1);
  alloc_ = std::make_unique<PageAllocator>(cfg_.alloc);
  ts_ = std::make_unique<TableSpace>(cfg_.design, cfg_.trie, *alloc_);
  for (auto& [pred, tp] : prog_.tabled)
    ts_->register_predicate(pred, tp.modes);
}

Engine::~Engine() = default;

SolveResult Engine::solve(const Term& query) {
  if (solved_) throw contract_error("engine instance already ran a query");
  solved_ = true;
  SolveResult res;
  unsigned nt = cfg_.threads;
  std::vector<std::unique_ptr<Worker>> workers;
  workers.reserve(nt);
  for (unsigned w = 0; w < nt; ++w)
    workers.push_back(std::make_unique<Worker>(prog_, *ts_, cfg_, w));

  std::vector<std::exception_ptr> errors(nt);
  if (nt == 1) {
    workers[0]->run(query);
  } else {
    std::vector<std::thread> threads;
    threads.reserve(nt);
    for (unsigned w = 0; w < nt; ++w) {
      threads.emplace_back([&, w] {
        try {
          workers[w]->run(query);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
  }
  // workers are done: migrate their local pages to the global heap
  for (unsigned w = 0; w < nt; ++w)
    alloc_->release_thread(TableSpace::heap_of(w));
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  res.answers = workers[0]->final_answers;
  res.per_worker_unique.resize(nt);
  res.per_worker_repeated.resize(nt);
  for (unsigned w = 0; w < nt; ++w) {
    res.stats.unique += workers[w]->stats.unique;
    res.stats.repeated += workers[w]->stats.repeated;
    res.stats.mode_kept += workers[w]->stats.mode_kept;
    res.stats.mode_replaced += workers[w]->stats.mode_replaced;
    res.stats.mode_discarded += workers[w]->stats.mode_discarded;
    res.per_worker_unique[w] = workers[w]->stats.unique;
    res.per_worker_repeated[w] = workers[w]->stats.repeated;
    if (cfg_.collect_record_log)
      res.record_log.insert(res.record_log.end(), workers[w]->log.begin(),
                            workers[w]->log.end());
  }
  if (cfg_.verify_thread_agreement) {
    for (unsigned w = 1; w < nt; ++w)
      if (workers[w]->final_answers != res.answers) res.threads_agree = false;
  }
  for (const TableEntry* te : ts_->entries())
    res.stats.calls += ts_->subgoal_count(te);
  return res;
}

std::vector<Term> Engine::consume_answers(const Term& goal) {
  SubgoalKey key = canonicalize(goal);
  TableEntry* te = ts_->find_predicate(key.pred);
  if (!te) throw contract_error("predicate not registered");
  std::vector<Term> out;
  const Trie* strie = nullptr;
  if (cfg_.design == Design::NS) {
    BucketArray* ba = te->ns_roots.load(std::memory_order_acquire);
    if (ba) strie = static_cast<Trie*>(ba->direct[0].load(std::memory_order_acquire));
  } else {
    strie = te->subgoal_trie;
  }
  if (!strie) return out;
  std::vector<Token> toks = key.tokens;
  if (toks.empty()) toks.push_back(tok::atom(pred_sym(te->pred)));
  TrieNode* leaf = strie->lookup(toks);
  if (!leaf) return out;
  const Trie* at = nullptr;
  uintptr_t aux = leaf->aux.load(std::memory_order_acquire);
  if (!aux) return out;
  switch (cfg_.design) {
    case Design::NS: {
      at = &reinterpret_cast<SubgoalFrame*>(aux)->answers;
      break;
    }
    case Design::SS: {
      auto* ba = reinterpret_cast<BucketArray*>(aux);
      auto* f = static_cast<SubgoalFrame*>(ba->direct[0].load(std::memory_order_acquire));
      for (WorkerId w = 0; !f && w < kBucketDirect; ++w)
        f = static_cast<SubgoalFrame*>(ba->direct[w].load(std::memory_order_acquire));
      if (f) at = &f->answers;
      break;
    }
    case Design::PAS: {
      uintptr_t pub = leaf->next_leaf.load(std::memory_order_acquire) & kLeafPtrMask;
      auto* f = pub ? reinterpret_cast<SubgoalFrame*>(pub)
                    : reinterpret_cast<SubgoalFrame*>(aux);
      if (f) at = &f->answers;
      break;
    }
    case Design::FS:
    case Design::PAC: {
      at = &reinterpret_cast<SubgoalEntry*>(aux)->answers;
      break;
    }
  }
  if (!at || !at->root()) return out;
  for (const TrieNode* n = at->root()->leaf_next(); n; n = n->leaf_next()) {
    if (n->is_invalid()) continue;
    std::vector<Token> toks2;
    for (const TrieNode* p = n; p && p->token != kRootToken; p = p->parent)
      toks2.push_back(p->token);
    std::reverse(toks2.begin(), toks2.end());
    out.push_back(apply_answer(key, toks2));
  }
  return out;
}

void Engine::abolish() { ts_->abolish_tables(); }

}  // namespace tabkit
