#pragma once

#include <string>
#include <vector>

#include "tabkit/tablespace.hpp"
#include "tabkit/term.hpp"

namespace tabkit {

struct Clause {
  Term head;
  std::vector<Term> body;
  uint32_t nvars = 0;  // clause-local variable slots
};

struct TableDecl {
  uint64_t pred;
  std::vector<Mode> modes;  // empty: plain variant tabling
};

struct ParsedProgram {
  std::vector<Clause> clauses;
  std::vector<TableDecl> tables;
};

// Program text: `:- table path/2.` and `:- table ks(index,index,max).`
// declarations, facts `edge(1,2).`, rules `path(X,Z) :- path(X,Y), edge(Y,Z).`
// Lowercase atoms, integers, uppercase variables, `%` comments.
ParsedProgram parse_program(const std::string& text);

// Single term, e.g. a query goal "path(X,Y)".
Term parse_term_text(const std::string& text);

}  // namespace tabkit
