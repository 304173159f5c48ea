#include "blowup/expr.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace blowup::expr {

namespace {

NodePtr make_const(double v) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Constant;
  n->value = v;
  return n;
}

NodePtr make_var() {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Variable;
  return n;
}

NodePtr make_param(std::string name) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Parameter;
  n->name = std::move(name);
  return n;
}

NodePtr make_unary(UnaryOp op, NodePtr a) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Unary;
  n->uop = op;
  n->a = std::move(a);
  return n;
}

bool is_const(const NodePtr& n, double v) {
  return n->kind == Node::Kind::Constant && n->value == v;
}

NodePtr make_binary(BinaryOp op, NodePtr a, NodePtr b) {
  // light constant folding keeps derivative trees manageable
  if (a->kind == Node::Kind::Constant && b->kind == Node::Kind::Constant) {
    switch (op) {
      case BinaryOp::Add: return make_const(a->value + b->value);
      case BinaryOp::Sub: return make_const(a->value - b->value);
      case BinaryOp::Mul: return make_const(a->value * b->value);
      default: break;  // keep /, ^ symbolic so domain errors stay visible
    }
  }
  switch (op) {
    case BinaryOp::Add:
      if (is_const(a, 0.0)) return b;
      if (is_const(b, 0.0)) return a;
      break;
    case BinaryOp::Sub:
      if (is_const(b, 0.0)) return a;
      break;
    case BinaryOp::Mul:
      if (is_const(a, 0.0) || is_const(b, 0.0)) return make_const(0.0);
      if (is_const(a, 1.0)) return b;
      if (is_const(b, 1.0)) return a;
      break;
    case BinaryOp::Div:
      if (is_const(a, 0.0) && !is_const(b, 0.0)) return make_const(0.0);
      if (is_const(b, 1.0)) return a;
      break;
    case BinaryOp::Pow:
      if (is_const(b, 1.0)) return a;
      break;
  }
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Binary;
  n->bop = op;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

struct Token {
  enum class Kind { Number, Identifier, Op, LParen, RParen, End } kind;
  double number = 0.0;
  std::string text;
  size_t position = 0;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  Token next() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    Token t;
    t.position = pos_;
    if (pos_ >= src_.size()) {
      t.kind = Token::Kind::End;
      return t;
    }
    const char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      size_t used = 0;
      try {
        t.number = std::stod(std::string(src_.substr(pos_)), &used);
      } catch (const std::exception&) {
        throw ParseError("malformed number", pos_);
      }
      t.kind = Token::Kind::Number;
      pos_ += used;
      return t;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
        ++pos_;
      t.kind = Token::Kind::Identifier;
      t.text = std::string(src_.substr(start, pos_ - start));
      return t;
    }
    if (c == '(') {
      t.kind = Token::Kind::LParen;
      ++pos_;
      return t;
    }
    if (c == ')') {
      t.kind = Token::Kind::RParen;
      ++pos_;
      return t;
    }
    static const std::string ops = "+-*/^";
    if (ops.find(c) != std::string::npos) {
      t.kind = Token::Kind::Op;
      t.text = std::string(1, c);
      ++pos_;
      return t;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", pos_);
  }

 private:
  std::string_view src_;
  size_t pos_ = 0;
};

const std::map<std::string, UnaryOp>& function_table() {
  static const std::map<std::string, UnaryOp> table = {
      {"exp", UnaryOp::Exp},   {"log", UnaryOp::Log},   {"sqrt", UnaryOp::Sqrt},
      {"sin", UnaryOp::Sin},   {"cos", UnaryOp::Cos},   {"tan", UnaryOp::Tan},
      {"arctan", UnaryOp::Atan}, {"atan", UnaryOp::Atan},
      {"sinh", UnaryOp::Sinh}, {"cosh", UnaryOp::Cosh}, {"abs", UnaryOp::Abs}};
  return table;
}

// Precedence-climbing parser.  Binding powers: +,- (10), *,/ (20),
// unary minus (30), ^ (40, right-associative).
class Parser {
 public:
  Parser(std::string_view src, const std::set<std::string>& params)
      : lexer_(src), params_(params) {
    advance();
  }

  NodePtr parse_expression(int min_bp = 0) {
    NodePtr lhs = parse_prefix();
    for (;;) {
      if (cur_.kind != Token::Kind::Op) break;
      const char op = cur_.text[0];
      int bp;
      BinaryOp bop;
      switch (op) {
        case '+': bp = 10; bop = BinaryOp::Add; break;
        case '-': bp = 10; bop = BinaryOp::Sub; break;
        case '*': bp = 20; bop = BinaryOp::Mul; break;
        case '/': bp = 20; bop = BinaryOp::Div; break;
        case '^': bp = 40; bop = BinaryOp::Pow; break;
        default: throw ParseError("unknown operator", cur_.position);
      }
      if (bp < min_bp) break;
      advance();
      // right-associative ^ recurses at the same binding power
      NodePtr rhs = parse_expression(op == '^' ? bp : bp + 1);
      lhs = make_binary(bop, std::move(lhs), std::move(rhs));
    }
    return lhs;
  }

  void expect_end() const {
    if (cur_.kind != Token::Kind::End)
      throw ParseError("trailing input", cur_.position);
  }

 private:
  void advance() { cur_ = lexer_.next(); }

  NodePtr parse_prefix() {
    switch (cur_.kind) {
      case Token::Kind::Number: {
        double v = cur_.number;
        advance();
        return make_const(v);
      }
      case Token::Kind::Identifier: {
        const std::string name = cur_.text;
        const size_t pos = cur_.position;
        advance();
        auto fn = function_table().find(name);
        if (fn != function_table().end()) {
          if (cur_.kind != Token::Kind::LParen)
            throw ParseError("expected '(' after function " + name, pos);
          advance();
          NodePtr arg = parse_expression();
          if (cur_.kind != Token::Kind::RParen)
            throw ParseError("expected ')' closing call to " + name, cur_.position);
          advance();
          return make_unary(fn->second, std::move(arg));
        }
        if (name == "pi") return make_const(M_PI);
        if (name == "e") return make_const(M_E);
        if (name == "x") return make_var();
        if (params_.count(name)) return make_param(name);
        throw ParseError("unknown identifier '" + name + "'", pos);
      }
      case Token::Kind::LParen: {
        advance();
        NodePtr inner = parse_expression();
        if (cur_.kind != Token::Kind::RParen)
          throw ParseError("expected ')'", cur_.position);
        advance();
        return inner;
      }
      case Token::Kind::Op:
        if (cur_.text == "-") {
          advance();
          // ^ binds tighter than unary minus: -x^2 parses as -(x^2)
          NodePtr inner = parse_expression(31);
          if (inner->kind == Node::Kind::Constant) return make_const(-inner->value);
          return make_unary(UnaryOp::Neg, std::move(inner));
        }
        if (cur_.text == "+") {
          advance();
          return parse_expression(31);
        }
        throw ParseError("unexpected operator '" + cur_.text + "'", cur_.position);
      default:
        throw ParseError("unexpected end of input", cur_.position);
    }
  }

  Lexer lexer_;
  std::set<std::string> params_;
  Token cur_;
};

struct Eval {
  double x;
  const Bindings* bindings;
  const Node* fault = nullptr;
  const char* reason = nullptr;

  double run(const Node* n) {
    switch (n->kind) {
      case Node::Kind::Constant: return n->value;
      case Node::Kind::Variable: return x;
      case Node::Kind::Parameter: {
        if (bindings) {
          auto it = bindings->find(n->name);
          if (it != bindings->end()) return it->second;
        }
        fail(n, "unbound parameter");
        return 0.0;
      }
      case Node::Kind::Unary: {
        const double a = run(n->a.get());
        if (fault) return 0.0;
        switch (n->uop) {
          case UnaryOp::Neg: return -a;
          case UnaryOp::Exp: return guard(n, std::exp(a), "exp overflow");
          case UnaryOp::Log:
            if (a <= 0.0) { fail(n, "log of nonpositive"); return 0.0; }
            return std::log(a);
          case UnaryOp::Sqrt:
            if (a < 0.0) { fail(n, "sqrt of negative"); return 0.0; }
            return std::sqrt(a);
          case UnaryOp::Sin: return std::sin(a);
          case UnaryOp::Cos: return std::cos(a);
          case UnaryOp::Tan: return guard(n, std::tan(a), "tan at a pole");
          case UnaryOp::Atan: return std::atan(a);
          case UnaryOp::Sinh: return guard(n, std::sinh(a), "sinh overflow");
          case UnaryOp::Cosh: return guard(n, std::cosh(a), "cosh overflow");
          case UnaryOp::Abs: return std::fabs(a);
        }
        return 0.0;
      }
      case Node::Kind::Binary: {
        const double a = run(n->a.get());
        if (fault) return 0.0;
        const double b = run(n->b.get());
        if (fault) return 0.0;
        switch (n->bop) {
          case BinaryOp::Add: return guard(n, a + b, "overflow");
          case BinaryOp::Sub: return guard(n, a - b, "overflow");
          case BinaryOp::Mul: return guard(n, a * b, "overflow");
          case BinaryOp::Div:
            if (b == 0.0) { fail(n, "division by zero"); return 0.0; }
            return guard(n, a / b, "overflow");
          case BinaryOp::Pow: {
            if (a == 0.0 && b < 0.0) { fail(n, "zero to a negative power"); return 0.0; }
            const double v = std::pow(a, b);
            if (std::isnan(v)) { fail(n, "power of a negative base"); return 0.0; }
            return guard(n, v, "pow overflow");
          }
        }
        return 0.0;
      }
    }
    return 0.0;
  }

  double guard(const Node* n, double v, const char* why) {
    if (!std::isfinite(v)) { fail(n, why); return 0.0; }
    return v;
  }

  void fail(const Node* n, const char* why) {
    if (!fault) { fault = n; reason = why; }
  }
};

NodePtr diff(const NodePtr& n);

NodePtr diff_unary(const NodePtr& n) {
  const NodePtr& u = n->a;
  NodePtr du = diff(u);
  switch (n->uop) {
    case UnaryOp::Neg: return make_unary(UnaryOp::Neg, du);
    case UnaryOp::Exp: return make_binary(BinaryOp::Mul, make_unary(UnaryOp::Exp, u), du);
    case UnaryOp::Log: return make_binary(BinaryOp::Div, du, u);
    case UnaryOp::Sqrt:
      return make_binary(BinaryOp::Div, du,
                         make_binary(BinaryOp::Mul, make_const(2.0),
                                     make_unary(UnaryOp::Sqrt, u)));
    case UnaryOp::Sin: return make_binary(BinaryOp::Mul, make_unary(UnaryOp::Cos, u), du);
    case UnaryOp::Cos:
      return make_unary(UnaryOp::Neg,
                        make_binary(BinaryOp::Mul, make_unary(UnaryOp::Sin, u), du));
    case UnaryOp::Tan: {
      // 1 + tan(u)^2
      NodePtr sec2 = make_binary(
          BinaryOp::Add, make_const(1.0),
          make_binary(BinaryOp::Pow, make_unary(UnaryOp::Tan, u), make_const(2.0)));
      return make_binary(BinaryOp::Mul, sec2, du);
    }
    case UnaryOp::Atan: {
      NodePtr denom = make_binary(
          BinaryOp::Add, make_const(1.0),
          make_binary(BinaryOp::Pow, u, make_const(2.0)));
      return make_binary(BinaryOp::Div, du, denom);
    }
    case UnaryOp::Sinh: return make_binary(BinaryOp::Mul, make_unary(UnaryOp::Cosh, u), du);
    case UnaryOp::Cosh: return make_binary(BinaryOp::Mul, make_unary(UnaryOp::Sinh, u), du);
    case UnaryOp::Abs:
      // sign(u) * u' written as u/|u| * u'; singular at u = 0
      return make_binary(BinaryOp::Mul,
                         make_binary(BinaryOp::Div, u, make_unary(UnaryOp::Abs, u)), du);
  }
  return make_const(0.0);
}

NodePtr diff(const NodePtr& n) {
  switch (n->kind) {
    case Node::Kind::Constant:
    case Node::Kind::Parameter:
      return make_const(0.0);
    case Node::Kind::Variable:
      return make_const(1.0);
    case Node::Kind::Unary:
      return diff_unary(n);
    case Node::Kind::Binary: {
      const NodePtr& a = n->a;
      const NodePtr& b = n->b;
      switch (n->bop) {
        case BinaryOp::Add: return make_binary(BinaryOp::Add, diff(a), diff(b));
        case BinaryOp::Sub: return make_binary(BinaryOp::Sub, diff(a), diff(b));
        case BinaryOp::Mul:
          return make_binary(BinaryOp::Add,
                             make_binary(BinaryOp::Mul, diff(a), b),
                             make_binary(BinaryOp::Mul, a, diff(b)));
        case BinaryOp::Div:
          // (a'b - ab') / b^2
          return make_binary(
              BinaryOp::Div,
              make_binary(BinaryOp::Sub, make_binary(BinaryOp::Mul, diff(a), b),
                          make_binary(BinaryOp::Mul, a, diff(b))),
              make_binary(BinaryOp::Pow, b, make_const(2.0)));
        case BinaryOp::Pow: {
          if (b->kind == Node::Kind::Constant) {
            // c * a^(c-1) * a'
            return make_binary(
                BinaryOp::Mul, make_const(b->value),
                make_binary(BinaryOp::Mul,
                            make_binary(BinaryOp::Pow, a, make_const(b->value - 1.0)),
                            diff(a)));
          }
          // a^b * (b' log a + b a'/a)
          NodePtr factor = make_binary(
              BinaryOp::Add,
              make_binary(BinaryOp::Mul, diff(b), make_unary(UnaryOp::Log, a)),
              make_binary(BinaryOp::Div, make_binary(BinaryOp::Mul, b, diff(a)), a));
          return make_binary(BinaryOp::Mul, make_binary(BinaryOp::Pow, a, b), factor);
        }
      }
      return make_const(0.0);
    }
  }
  return make_const(0.0);
}

NodePtr substitute(const NodePtr& n, const Bindings& bindings) {
  switch (n->kind) {
    case Node::Kind::Constant:
    case Node::Kind::Variable:
      return n;
    case Node::Kind::Parameter: {
      auto it = bindings.find(n->name);
      if (it == bindings.end())
        throw ConfigError("unbound parameter '" + n->name + "'");
      return make_const(it->second);
    }
    case Node::Kind::Unary:
      return make_unary(n->uop, substitute(n->a, bindings));
    case Node::Kind::Binary:
      return make_binary(n->bop, substitute(n->a, bindings), substitute(n->b, bindings));
  }
  return n;
}

const char* unary_name(UnaryOp op) {
  switch (op) {
    case UnaryOp::Neg: return "-";
    case UnaryOp::Exp: return "exp";
    case UnaryOp::Log: return "log";
    case UnaryOp::Sqrt: return "sqrt";
    case UnaryOp::Sin: return "sin";
    case UnaryOp::Cos: return "cos";
    case UnaryOp::Tan: return "tan";
    case UnaryOp::Atan: return "arctan";
    case UnaryOp::Sinh: return "sinh";
    case UnaryOp::Cosh: return "cosh";
    case UnaryOp::Abs: return "abs";
  }
  return "?";
}

void print(const NodePtr& n, std::ostringstream& out) {
  switch (n->kind) {
    case Node::Kind::Constant: {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.17g", n->value);
      if (n->value < 0) {
        out << "(" << buf << ")";
      } else {
        out << buf;
      }
      return;
    }
    case Node::Kind::Variable:
      out << "x";
      return;
    case Node::Kind::Parameter:
      out << n->name;
      return;
    case Node::Kind::Unary:
      if (n->uop == UnaryOp::Neg) {
        out << "(-";
        print(n->a, out);
        out << ")";
      } else {
        out << unary_name(n->uop) << "(";
        print(n->a, out);
        out << ")";
      }
      return;
    case Node::Kind::Binary: {
      const char* op = nullptr;
      switch (n->bop) {
        case BinaryOp::Add: op = "+"; break;
        case BinaryOp::Sub: op = "-"; break;
        case BinaryOp::Mul: op = "*"; break;
        case BinaryOp::Div: op = "/"; break;
        case BinaryOp::Pow: op = "^"; break;
      }
      out << "(";
      print(n->a, out);
      out << op;
      print(n->b, out);
      out << ")";
      return;
    }
  }
}

// opcodes for Program
enum : int {
  OP_CONST, OP_X,
  OP_NEG, OP_EXP, OP_LOG, OP_SQRT, OP_SIN, OP_COS, OP_TAN, OP_ATAN,
  OP_SINH, OP_COSH, OP_ABS,
  OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_POW
};

int stack_need(const NodePtr& n) {
  switch (n->kind) {
    case Node::Kind::Unary:
      return stack_need(n->a);
    case Node::Kind::Binary:
      return std::max(stack_need(n->a), 1 + stack_need(n->b));
    default:
      return 1;
  }
}

void emit(const NodePtr& n, std::vector<Program::Instr>& code) {
  switch (n->kind) {
    case Node::Kind::Constant:
      code.push_back({OP_CONST, n->value});
      return;
    case Node::Kind::Variable:
      code.push_back({OP_X, 0.0});
      return;
    case Node::Kind::Parameter:
      throw ConfigError("cannot compile expression with unbound parameter '" + n->name + "'");
    case Node::Kind::Unary: {
      emit(n->a, code);
      int op = OP_NEG;
      switch (n->uop) {
        case UnaryOp::Neg: op = OP_NEG; break;
        case UnaryOp::Exp: op = OP_EXP; break;
        case UnaryOp::Log: op = OP_LOG; break;
        case UnaryOp::Sqrt: op = OP_SQRT; break;
        case UnaryOp::Sin: op = OP_SIN; break;
        case UnaryOp::Cos: op = OP_COS; break;
        case UnaryOp::Tan: op = OP_TAN; break;
        case UnaryOp::Atan: op = OP_ATAN; break;
        case UnaryOp::Sinh: op = OP_SINH; break;
        case UnaryOp::Cosh: op = OP_COSH; break;
        case UnaryOp::Abs: op = OP_ABS; break;
      }
      code.push_back({op, 0.0});
      return;
    }
    case Node::Kind::Binary: {
      emit(n->a, code);
      emit(n->b, code);
      int op = OP_ADD;
      switch (n->bop) {
        case BinaryOp::Add: op = OP_ADD; break;
        case BinaryOp::Sub: op = OP_SUB; break;
        case BinaryOp::Mul: op = OP_MUL; break;
        case BinaryOp::Div: op = OP_DIV; break;
        case BinaryOp::Pow: op = OP_POW; break;
      }
      code.push_back({op, 0.0});
      return;
    }
  }
}

}  // namespace

double Program::operator()(double x) const {
  double stack[64];
  int top = -1;
  for (const Instr& ins : code_) {
    switch (ins.op) {
      case OP_CONST: stack[++top] = ins.value; break;
      case OP_X: stack[++top] = x; break;
      case OP_NEG: stack[top] = -stack[top]; break;
      case OP_EXP: stack[top] = std::exp(stack[top]); break;
      case OP_LOG: stack[top] = std::log(stack[top]); break;
      case OP_SQRT: stack[top] = std::sqrt(stack[top]); break;
      case OP_SIN: stack[top] = std::sin(stack[top]); break;
      case OP_COS: stack[top] = std::cos(stack[top]); break;
      case OP_TAN: stack[top] = std::tan(stack[top]); break;
      case OP_ATAN: stack[top] = std::atan(stack[top]); break;
      case OP_SINH: stack[top] = std::sinh(stack[top]); break;
      case OP_COSH: stack[top] = std::cosh(stack[top]); break;
      case OP_ABS: stack[top] = std::fabs(stack[top]); break;
      case OP_ADD: --top; stack[top] += stack[top + 1]; break;
      case OP_SUB: --top; stack[top] -= stack[top + 1]; break;
      case OP_MUL: --top; stack[top] *= stack[top + 1]; break;
      case OP_DIV: --top; stack[top] /= stack[top + 1]; break;
      case OP_POW: --top; stack[top] = std::pow(stack[top], stack[top + 1]); break;
    }
  }
  return top >= 0 ? stack[top] : 0.0;
}

Ast Ast::parse(std::string_view source, const std::set<std::string>& parameters) {
  if (source.empty()) throw ParseError("empty expression", 0);
  Parser p(source, parameters);
  NodePtr root = p.parse_expression();
  p.expect_end();
  return Ast(std::move(root));
}

EvalResult Ast::eval_checked(double x, const Bindings& bindings) const noexcept {
  EvalResult out;
  if (!root_) {
    out.reason = "empty expression";
    return out;
  }
  Eval ev{x, &bindings};
  const double v = ev.run(root_.get());
  if (ev.fault) {
    out.fault = ev.fault;
    out.reason = ev.reason;
    return out;
  }
  out.value = v;
  out.ok = true;
  return out;
}

double Ast::eval(double x, const Bindings& bindings) const {
  EvalResult r = eval_checked(x, bindings);
  if (!r.ok)
    throw EvalDomainError(std::string("evaluation failed: ") +
                          (r.reason ? r.reason : "unknown") + " at x=" +
                          std::to_string(x));
  return r.value;
}

Ast Ast::derivative() const {
  if (!root_) return Ast();
  return Ast(diff(root_));
}

Ast Ast::bind(const Bindings& bindings) const {
  if (!root_) return Ast();
  return Ast(substitute(root_, bindings));
}

Program Ast::compile() const {
  Program prog;
  if (!root_) return prog;
  if (stack_need(root_) > 60)
    throw ConfigError("expression too deep to compile");
  emit(root_, prog.code_);
  return prog;
}

std::string Ast::to_string() const {
  if (!root_) return "";
  std::ostringstream out;
  print(root_, out);
  return out.str();
}

}  // namespace blowup::expr
