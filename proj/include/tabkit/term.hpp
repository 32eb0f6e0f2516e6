#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tabkit/config.hpp"

namespace tabkit {

// Global interning of atom and functor names. Thread-safe; interning is a
// cold path (parsing and registration only).
class SymbolTable {
 public:
  static uint32_t intern(const std::string& name);
  static const std::string& name(uint32_t id);
};

enum class TermTag : uint8_t { Atom, Int, Var, Compound };

// First-order term over atoms, integers, variables and compounds.
// A lightweight value type: flat terms (the common case in tabled
// programs) never touch the heap beyond the argument vector.
class Term {
 public:
  Term() : tag_(TermTag::Atom), ival_(0), sym_(0) {}

  static Term atom(const std::string& name);
  static Term atom_id(uint32_t sym);
  static Term integer(int64_t v);
  static Term var(uint32_t id);
  static Term compound(const std::string& functor, std::vector<Term> args);
  static Term compound_id(uint32_t sym, std::vector<Term> args);

  TermTag tag() const { return tag_; }
  bool is_atom() const { return tag_ == TermTag::Atom; }
  bool is_int() const { return tag_ == TermTag::Int; }
  bool is_var() const { return tag_ == TermTag::Var; }
  bool is_compound() const { return tag_ == TermTag::Compound; }

  uint32_t symbol() const { return sym_; }  // atom or functor id
  int64_t int_value() const { return ival_; }
  uint32_t var_id() const { return static_cast<uint32_t>(ival_); }
  size_t arity() const { return args_.size(); }
  const std::vector<Term>& args() const { return args_; }
  const Term& arg(size_t i) const { return args_[i]; }

  bool ground() const;
  bool operator==(const Term& o) const;
  bool operator!=(const Term& o) const { return !(*this == o); }

  std::string to_string() const;

 private:
  TermTag tag_;
  int64_t ival_;  // integer value or variable id
  uint32_t sym_;
  std::vector<Term> args_;
};

// Fixed-width tagged token word. Trie paths, subgoal keys and answer
// substitutions are all sequences of these.
using Token = uint64_t;

namespace tok {

enum Tag : uint64_t { kAtom = 0, kInt = 1, kVar = 2, kFunctor = 3 };
inline constexpr unsigned kTagBits = 2;
inline constexpr int64_t kIntMax = (int64_t{1} << 60) - 1;
inline constexpr int64_t kIntMin = -(int64_t{1} << 60);

inline Token atom(uint32_t sym) { return (Token{sym} << kTagBits) | kAtom; }
inline Token integer(int64_t v) {
  if (v > kIntMax || v < kIntMin)
    throw structural_error("integer exceeds token range");
  return (static_cast<Token>(v) << kTagBits) | kInt;
}
inline Token var(uint32_t idx) { return (Token{idx} << kTagBits) | kVar; }
inline Token functor(uint32_t sym, uint32_t arity) {
  return (((Token{sym} << 12) | Token{arity & 0xfff}) << kTagBits) | kFunctor;
}

inline Tag tag(Token t) { return static_cast<Tag>(t & 0x3); }
inline uint32_t atom_sym(Token t) { return static_cast<uint32_t>(t >> kTagBits); }
inline int64_t int_value(Token t) {
  return static_cast<int64_t>(t) >> kTagBits;  // arithmetic shift
}
inline uint32_t var_index(Token t) { return static_cast<uint32_t>(t >> kTagBits); }
inline uint32_t functor_sym(Token t) { return static_cast<uint32_t>(t >> (kTagBits + 12)); }
inline uint32_t functor_arity(Token t) {
  return static_cast<uint32_t>((t >> kTagBits) & 0xfff);
}

std::string to_string(Token t);

}  // namespace tok

// Packed predicate identifier: functor symbol + arity.
inline uint64_t predicate_id(uint32_t sym, uint32_t arity) {
  return (uint64_t{sym} << 12) | arity;
}
inline uint32_t pred_sym(uint64_t pid) { return static_cast<uint32_t>(pid >> 12); }
inline uint32_t pred_arity(uint64_t pid) { return static_cast<uint32_t>(pid & 0xfff); }
std::string predicate_name(uint64_t pid);

// Canonical form of a tabled call: predicate plus the argument token
// sequence with variables renamed 0,1,2,... in first-occurrence order.
// Two terms are variants iff their keys compare equal.
struct SubgoalKey {
  uint64_t pred = 0;
  std::vector<Token> tokens;  // argument tokens, pre-order flattened
  uint32_t nvars = 0;

  bool operator==(const SubgoalKey& o) const {
    return pred == o.pred && tokens == o.tokens;
  }
  // Rendering used in diagnostics: [p/3, var(0), int(1), var(1)]
  std::vector<Token> full_tokens() const;
  std::string to_string() const;
};

SubgoalKey canonicalize(const Term& goal);
bool is_variant(const Term& a, const Term& b);

// Flattens one term into tokens with variables renamed in first-occurrence
// order, continuing from the numbering already present in `var_map`.
void flatten_term(const Term& t, std::vector<Token>& out,
                  std::vector<std::pair<uint32_t, uint32_t>>& var_map);

// Token sequence of the substitution an answer induces on the generator's
// goal: one sub-sequence per generator variable, in variable order.
// Throws contract_error when the answer does not match the goal pattern.
std::vector<Token> answer_tokens(const SubgoalKey& generator, const Term& answer);

// Rebuilds a term from a flattened token sequence (inverse of flatten).
Term decode_term(const std::vector<Token>& tokens, size_t& pos);
std::vector<Term> decode_terms(const std::vector<Token>& tokens);

// Rebuilds the full goal a key stands for (variables as var(0), var(1), ...).
Term key_to_term(const SubgoalKey& key);

// Instantiates the generator goal with an answer substitution sequence.
Term apply_answer(const SubgoalKey& key, const std::vector<Token>& subst);

}  // namespace tabkit
