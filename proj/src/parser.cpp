#include "tabkit/parser.hpp"

#include <cctype>
#include <cstring>
#include <map>

namespace tabkit {

namespace {

struct Lexer {
  const std::string& s;
  size_t pos = 0;

  void skip_ws() {
    while (pos < s.size()) {
      if (std::isspace(static_cast<unsigned char>(s[pos]))) {
        pos++;
      } else if (s[pos] == '%') {
        while (pos < s.size() && s[pos] != '\n') pos++;
      } else {
        return;
      }
    }
  }
  bool eof() {
    skip_ws();
    return pos >= s.size();
  }
  char peek() {
    skip_ws();
    return pos < s.size() ? s[pos] : '\0';
  }
  bool try_eat(const char* tokstr) {
    skip_ws();
    size_t n = std::strlen(tokstr);
    if (s.compare(pos, n, tokstr) == 0) {
      pos += n;
      return true;
    }
    return false;
  }
  void expect(const char* tokstr) {
    if (!try_eat(tokstr))
      throw parse_error("expected '" + std::string(tokstr) + "' at offset " +
                        std::to_string(pos));
  }
  std::string ident() {
    skip_ws();
    size_t b = pos;
    while (pos < s.size() &&
           (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_'))
      pos++;
    if (b == pos) throw parse_error("expected identifier at offset " + std::to_string(b));
    return s.substr(b, pos - b);
  }
  int64_t integer() {
    skip_ws();
    size_t b = pos;
    if (pos < s.size() && (s[pos] == '-' || s[pos] == '+')) pos++;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) pos++;
    if (b == pos) throw parse_error("expected integer at offset " + std::to_string(b));
    return std::stoll(s.substr(b, pos - b));
  }
};

struct TermParser {
  Lexer& lx;
  std::map<std::string, uint32_t>& vars;

  Term parse() {
    char c = lx.peek();
    if (c == '-' || std::isdigit(static_cast<unsigned char>(c)))
      return Term::integer(lx.integer());
    std::string name = lx.ident();
    if (std::isupper(static_cast<unsigned char>(name[0])) || name[0] == '_') {
      if (name == "_") {  // each underscore is a fresh variable
        uint32_t id = static_cast<uint32_t>(vars.size());
        vars["_anon" + std::to_string(id)] = id;
        return Term::var(id);
      }
      auto it = vars.find(name);
      if (it == vars.end())
        it = vars.emplace(name, static_cast<uint32_t>(vars.size())).first;
      return Term::var(it->second);
    }
    if (lx.try_eat("(")) {
      std::vector<Term> args;
      args.push_back(parse());
      while (lx.try_eat(",")) args.push_back(parse());
      lx.expect(")");
      return Term::compound(name, std::move(args));
    }
    return Term::atom(name);
  }
};

TableDecl parse_table_decl(Lexer& lx) {
  TableDecl d;
  std::string name = lx.ident();
  if (lx.try_eat("/")) {
    int64_t arity = lx.integer();
    if (arity < 0 || arity > 0xfff) throw parse_error("bad arity in table declaration");
    d.pred = predicate_id(SymbolTable::intern(name), static_cast<uint32_t>(arity));
    return d;
  }
  lx.expect("(");
  for (;;) {
    std::string ms = lx.ident();
    Mode m;
    if (!mode_from_string(ms, m)) throw parse_error("unknown mode '" + ms + "'");
    d.modes.push_back(m);
    if (!lx.try_eat(",")) break;
  }
  lx.expect(")");
  d.pred = predicate_id(SymbolTable::intern(name),
                        static_cast<uint32_t>(d.modes.size()));
  return d;
}

}  // namespace

ParsedProgram parse_program(const std::string& text) {
  ParsedProgram prog;
  Lexer lx{text};
  while (!lx.eof()) {
    if (lx.try_eat(":-")) {
      lx.expect("table");
      prog.tables.push_back(parse_table_decl(lx));
      while (lx.try_eat(",")) {
        lx.expect("table");
        prog.tables.push_back(parse_table_decl(lx));
      }
      lx.expect(".");
      continue;
    }
    Clause cl;
    std::map<std::string, uint32_t> vars;
    TermParser tp{lx, vars};
    cl.head = tp.parse();
    if (lx.try_eat(":-")) {
      cl.body.push_back(tp.parse());
      while (lx.try_eat(",")) cl.body.push_back(tp.parse());
    }
    lx.expect(".");
    cl.nvars = static_cast<uint32_t>(vars.size());
    prog.clauses.push_back(std::move(cl));
  }
  return prog;
}

Term parse_term_text(const std::string& text) {
  Lexer lx{text};
  std::map<std::string, uint32_t> vars;
  TermParser tp{lx, vars};
  Term t = tp.parse();
  if (!lx.eof()) throw parse_error("trailing input after term");
  return t;
}

}  // namespace tabkit
