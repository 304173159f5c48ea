#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "blowup/errors.hpp"

namespace blowup::expr {

enum class UnaryOp { Neg, Exp, Log, Sqrt, Sin, Cos, Tan, Atan, Sinh, Cosh, Abs };
enum class BinaryOp { Add, Sub, Mul, Div, Pow };

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  enum class Kind { Constant, Variable, Parameter, Unary, Binary };
  Kind kind;
  double value = 0.0;     // Constant
  std::string name;       // Parameter
  UnaryOp uop{};          // Unary
  BinaryOp bop{};         // Binary
  NodePtr a, b;
};

class ParseError : public ConfigError {
 public:
  ParseError(const std::string& what, size_t position)
      : ConfigError(what + " (at position " + std::to_string(position) + ")"),
        position(position) {}
  size_t position;
};

// Value-style evaluation outcome.  Domain errors are reported, not
// thrown, so quadrature can probe near singular endpoints safely.
struct EvalResult {
  double value = 0.0;
  bool ok = false;
  const Node* fault = nullptr;
  const char* reason = nullptr;
};

using Bindings = std::map<std::string, double>;

// Compiled postfix form for hot loops (path simulation evaluates the
// coefficient functions millions of times).
class Program {
 public:
  struct Instr {
    int op;         // see expr.cpp
    double value;   // constants
  };

  double operator()(double x) const;
  bool empty() const { return code_.empty(); }

 private:
  friend class Ast;
  std::vector<Instr> code_;
};

class Ast {
 public:
  Ast() = default;

  // Grammar: usual precedence, ^ right-associative and binding tighter
  // than unary minus ("-x^2" is -(x^2)).  Identifiers other than x and
  // the declared parameter names are rejected.
  static Ast parse(std::string_view source, const std::set<std::string>& parameters = {});

  EvalResult eval_checked(double x, const Bindings& bindings = {}) const noexcept;
  double eval(double x, const Bindings& bindings = {}) const;  // throws EvalDomainError

  // d/dx; the result may be verbose (no simplification pass beyond
  // constant folding of trivial cases).
  Ast derivative() const;

  // Substitutes parameter values, leaving a function of x only.
  Ast bind(const Bindings& bindings) const;

  Program compile() const;  // requires all parameters bound

  std::string to_string() const;
  bool valid() const { return root_ != nullptr; }
  const NodePtr& root() const { return root_; }

 private:
  explicit Ast(NodePtr root) : root_(std::move(root)) {}
  NodePtr root_;
};

}  // namespace blowup::expr
