#pragma once

#include <string>
#include <variant>
#include <vector>

namespace sem {

enum class Op { Regress, Covary, Measure, RfCovary, RfCovaryK };

const char* op_symbol(Op op);

struct Term {
  enum class Mult { None, Fixed, Named };
  std::string name;
  Mult mult = Mult::None;
  double value = 0.0;  // Fixed
  std::string param;   // Named

  bool operator==(const Term& o) const {
    return name == o.name && mult == o.mult && (mult != Mult::Fixed || value == o.value) &&
           param == o.param;
  }
};

struct Relation {
  std::vector<std::string> lhs;
  Op op = Op::Regress;
  int k = 0;  // effect index for ~RFk~
  std::vector<Term> rhs;

  bool operator==(const Relation& o) const {
    return lhs == o.lhs && op == o.op && k == o.k && rhs == o.rhs;
  }
};

// DEFINE(latent) a b, START(1.5) a b, BOUND(0, 2) a, CONSTRAINT(expr)
struct Command {
  std::string name;
  std::vector<std::string> args;
  std::vector<std::string> operands;
  std::string expr;  // CONSTRAINT only

  bool operator==(const Command& o) const {
    return name == o.name && args == o.args && operands == o.operands && expr == o.expr;
  }
};

using Statement = std::variant<Relation, Command>;

struct ModelAst {
  std::vector<Statement> statements;
  bool operator==(const ModelAst& o) const { return statements == o.statements; }
};

ModelAst parse(const std::string& text);
std::string serialize(const ModelAst& ast);

// One single-lhs relation per (lhs, op) pair, commands untouched.
ModelAst expand(const ModelAst& ast);

bool is_identifier(const std::string& s);

}  // namespace sem
