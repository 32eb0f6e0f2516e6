#include "tabkit/term.hpp"

#include <mutex>
#include <sstream>
#include <unordered_map>

namespace tabkit {

namespace {
struct Interner {
  std::mutex mu;
  std::unordered_map<std::string, uint32_t> ids;
  std::vector<std::string> names;
};
Interner& interner() {
  static Interner in;
  return in;
}
}  // namespace

uint32_t SymbolTable::intern(const std::string& name) {
  auto& in = interner();
  std::lock_guard<std::mutex> g(in.mu);
  auto it = in.ids.find(name);
  if (it != in.ids.end()) return it->second;
  uint32_t id = static_cast<uint32_t>(in.names.size());
  in.names.push_back(name);
  in.ids.emplace(name, id);
  return id;
}

const std::string& SymbolTable::name(uint32_t id) {
  auto& in = interner();
  std::lock_guard<std::mutex> g(in.mu);
  return in.names.at(id);
}

Term Term::atom(const std::string& name) { return atom_id(SymbolTable::intern(name)); }

Term Term::atom_id(uint32_t sym) {
  Term t;
  t.tag_ = TermTag::Atom;
  t.sym_ = sym;
  return t;
}

Term Term::integer(int64_t v) {
  Term t;
  t.tag_ = TermTag::Int;
  t.ival_ = v;
  return t;
}

Term Term::var(uint32_t id) {
  Term t;
  t.tag_ = TermTag::Var;
  t.ival_ = id;
  return t;
}

Term Term::compound(const std::string& functor, std::vector<Term> args) {
  return compound_id(SymbolTable::intern(functor), std::move(args));
}

Term Term::compound_id(uint32_t sym, std::vector<Term> args) {
  if (args.empty()) return atom_id(sym);
  Term t;
  t.tag_ = TermTag::Compound;
  t.sym_ = sym;
  t.args_ = std::move(args);
  return t;
}

bool Term::ground() const {
  switch (tag_) {
    case TermTag::Var:
      return false;
    case TermTag::Compound:
      for (const auto& a : args_)
        if (!a.ground()) return false;
      return true;
    default:
      return true;
  }
}

bool Term::operator==(const Term& o) const {
  if (tag_ != o.tag_) return false;
  switch (tag_) {
    case TermTag::Atom:
      return sym_ == o.sym_;
    case TermTag::Int:
      return ival_ == o.ival_;
    case TermTag::Var:
      return ival_ == o.ival_;
    case TermTag::Compound:
      if (sym_ != o.sym_ || args_.size() != o.args_.size()) return false;
      for (size_t i = 0; i < args_.size(); ++i)
        if (!(args_[i] == o.args_[i])) return false;
      return true;
  }
  return false;
}

std::string Term::to_string() const {
  std::ostringstream os;
  switch (tag_) {
    case TermTag::Atom:
      os << SymbolTable::name(sym_);
      break;
    case TermTag::Int:
      os << ival_;
      break;
    case TermTag::Var:
      os << "_G" << ival_;
      break;
    case TermTag::Compound: {
      os << SymbolTable::name(sym_) << '(';
      for (size_t i = 0; i < args_.size(); ++i) {
        if (i) os << ',';
        os << args_[i].to_string();
      }
      os << ')';
      break;
    }
  }
  return os.str();
}

namespace tok {

std::string to_string(Token t) {
  std::ostringstream os;
  switch (tag(t)) {
    case kAtom:
      os << "atom(" << SymbolTable::name(atom_sym(t)) << ')';
      break;
    case kInt:
      os << "int(" << int_value(t) << ')';
      break;
    case kVar:
      os << "var(" << var_index(t) << ')';
      break;
    case kFunctor:
      os << SymbolTable::name(functor_sym(t)) << '/' << functor_arity(t);
      break;
  }
  return os.str();
}

}  // namespace tok

std::string predicate_name(uint64_t pid) {
  std::ostringstream os;
  os << SymbolTable::name(pred_sym(pid)) << '/' << pred_arity(pid);
  return os.str();
}

void flatten_term(const Term& t, std::vector<Token>& out,
                  std::vector<std::pair<uint32_t, uint32_t>>& var_map) {
  switch (t.tag()) {
    case TermTag::Atom:
      out.push_back(tok::atom(t.symbol()));
      break;
    case TermTag::Int:
      out.push_back(tok::integer(t.int_value()));
      break;
    case TermTag::Var: {
      for (auto& [orig, canon] : var_map) {
        if (orig == t.var_id()) {
          out.push_back(tok::var(canon));
          return;
        }
      }
      uint32_t canon = static_cast<uint32_t>(var_map.size());
      var_map.emplace_back(t.var_id(), canon);
      out.push_back(tok::var(canon));
      break;
    }
    case TermTag::Compound:
      out.push_back(tok::functor(t.symbol(), static_cast<uint32_t>(t.arity())));
      for (const auto& a : t.args()) flatten_term(a, out, var_map);
      break;
  }
}

SubgoalKey canonicalize(const Term& goal) {
  SubgoalKey key;
  std::vector<std::pair<uint32_t, uint32_t>> var_map;
  if (goal.is_atom()) {
    key.pred = predicate_id(goal.symbol(), 0);
  } else if (goal.is_compound()) {
    key.pred = predicate_id(goal.symbol(), static_cast<uint32_t>(goal.arity()));
    for (const auto& a : goal.args()) flatten_term(a, key.tokens, var_map);
  } else {
    throw structural_error("goal must be an atom or a compound term");
  }
  key.nvars = static_cast<uint32_t>(var_map.size());
  return key;
}

bool is_variant(const Term& a, const Term& b) {
  if (a.is_var() && b.is_var()) return true;
  if (a.is_var() || b.is_var()) return false;
  if (a.is_int() || b.is_int()) return a == b;
  return canonicalize(a) == canonicalize(b);
}

std::vector<Token> SubgoalKey::full_tokens() const {
  std::vector<Token> out;
  out.reserve(tokens.size() + 1);
  out.push_back(tok::functor(pred_sym(pred), pred_arity(pred)));
  out.insert(out.end(), tokens.begin(), tokens.end());
  return out;
}

std::string SubgoalKey::to_string() const {
  std::ostringstream os;
  os << '[' << predicate_name(pred);
  for (Token t : tokens) os << ", " << tok::to_string(t);
  os << ']';
  return os.str();
}

namespace {

// One-way match of `t` against the pattern position in `pat` (tokens of a
// canonical goal). Bindings collect the answer subterm per pattern variable.
bool match_pattern(const std::vector<Token>& pat, size_t& pos, const Term& t,
                   std::vector<const Term*>& bindings) {
  Token p = pat.at(pos++);
  switch (tok::tag(p)) {
    case tok::kVar: {
      uint32_t v = tok::var_index(p);
      if (bindings[v] == nullptr) {
        bindings[v] = &t;
        return true;
      }
      return *bindings[v] == t;  // repeated variable: require equal subterms
    }
    case tok::kAtom:
      return t.is_atom() && t.symbol() == tok::atom_sym(p);
    case tok::kInt:
      return t.is_int() && t.int_value() == tok::int_value(p);
    case tok::kFunctor: {
      if (!t.is_compound() || t.symbol() != tok::functor_sym(p) ||
          t.arity() != tok::functor_arity(p))
        return false;
      for (const auto& a : t.args())
        if (!match_pattern(pat, pos, a, bindings)) return false;
      return true;
    }
  }
  return false;
}

}  // namespace

std::vector<Token> answer_tokens(const SubgoalKey& generator, const Term& answer) {
  uint64_t apred = 0;
  if (answer.is_atom())
    apred = predicate_id(answer.symbol(), 0);
  else if (answer.is_compound())
    apred = predicate_id(answer.symbol(), static_cast<uint32_t>(answer.arity()));
  else
    throw contract_error("answer must be an atom or a compound term");
  if (apred != generator.pred)
    throw contract_error("answer predicate does not match the generator");

  std::vector<const Term*> bindings(generator.nvars, nullptr);
  size_t pos = 0;
  if (answer.is_compound()) {
    for (const auto& a : answer.args()) {
      if (!match_pattern(generator.tokens, pos, a, bindings))
        throw contract_error("answer does not unify with the generator goal");
    }
  }
  std::vector<Token> out;
  std::vector<std::pair<uint32_t, uint32_t>> var_map;  // canonical renaming
  for (uint32_t v = 0; v < generator.nvars; ++v) {
    if (bindings[v] == nullptr)
      throw contract_error("answer leaves a generator variable unbound");
    flatten_term(*bindings[v], out, var_map);
  }
  return out;
}

Term decode_term(const std::vector<Token>& tokens, size_t& pos) {
  Token t = tokens.at(pos++);
  switch (tok::tag(t)) {
    case tok::kAtom:
      return Term::atom_id(tok::atom_sym(t));
    case tok::kInt:
      return Term::integer(tok::int_value(t));
    case tok::kVar:
      return Term::var(tok::var_index(t));
    case tok::kFunctor: {
      uint32_t n = tok::functor_arity(t);
      std::vector<Term> args;
      args.reserve(n);
      for (uint32_t i = 0; i < n; ++i) args.push_back(decode_term(tokens, pos));
      return Term::compound_id(tok::functor_sym(t), std::move(args));
    }
  }
  throw structural_error("bad token");
}

std::vector<Term> decode_terms(const std::vector<Token>& tokens) {
  std::vector<Term> out;
  size_t pos = 0;
  while (pos < tokens.size()) out.push_back(decode_term(tokens, pos));
  return out;
}

Term key_to_term(const SubgoalKey& key) {
  std::vector<Term> args = decode_terms(key.tokens);
  if (args.empty()) return Term::atom_id(pred_sym(key.pred));
  return Term::compound_id(pred_sym(key.pred), std::move(args));
}

Term apply_answer(const SubgoalKey& key, const std::vector<Token>& subst) {
  std::vector<Term> values = decode_terms(subst);
  if (values.size() != key.nvars)
    throw contract_error("substitution arity mismatch");
  std::vector<Term> args = decode_terms(key.tokens);
  // Replace var(i) occurrences by the corresponding substitution term.
  struct Sub {
    static Term walk(const Term& t, const std::vector<Term>& values) {
      if (t.is_var()) return values.at(t.var_id());
      if (t.is_compound()) {
        std::vector<Term> a;
        a.reserve(t.arity());
        for (const auto& x : t.args()) a.push_back(walk(x, values));
        return Term::compound_id(t.symbol(), std::move(a));
      }
      return t;
    }
  };
  for (auto& a : args) a = Sub::walk(a, values);
  if (args.empty()) return Term::atom_id(pred_sym(key.pred));
  return Term::compound_id(pred_sym(key.pred), std::move(args));
}

const char* to_string(Design d) {
  switch (d) {
    case Design::NS: return "ns";
    case Design::SS: return "ss";
    case Design::FS: return "fs";
    case Design::PAS: return "pas";
    case Design::PAC: return "pac";
  }
  return "?";
}

const char* to_string(Scheduling s) {
  return s == Scheduling::Local ? "local" : "batched";
}

const char* to_string(HashScheme s) {
  return s == HashScheme::HashTrie ? "hashtrie" : "doubling";
}

bool design_from_string(const std::string& s, Design& out) {
  if (s == "ns") out = Design::NS;
  else if (s == "ss") out = Design::SS;
  else if (s == "fs") out = Design::FS;
  else if (s == "pas") out = Design::PAS;
  else if (s == "pac") out = Design::PAC;
  else return false;
  return true;
}

bool scheduling_from_string(const std::string& s, Scheduling& out) {
  if (s == "local") out = Scheduling::Local;
  else if (s == "batched") out = Scheduling::Batched;
  else return false;
  return true;
}

bool scheme_from_string(const std::string& s, HashScheme& out) {
  if (s == "hashtrie") out = HashScheme::HashTrie;
  else if (s == "doubling") out = HashScheme::Doubling;
  else return false;
  return true;
}

}  // namespace tabkit
