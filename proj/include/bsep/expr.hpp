#pragma once

// Scalar expressions in named coordinates.
//
// Grammar (EBNF, whitespace ignored between tokens):
//
//   expr    = term , { ("+" | "-") , term } ;
//   term    = unary , { ("*" | "/") , unary } ;
//   unary   = "-" , unary | power ;
//   power   = primary , [ "^" , unary ] ;          (* right-associative *)
//   primary = number | ident , "(" , expr , ")" | ident | "(" , expr , ")" ;
//   number  = digit , { digit } , [ "." , { digit } ] , [ exponent ]
//           | "." , digit , { digit } , [ exponent ] ;
//   exponent= ("e" | "E") , [ "+" | "-" ] , digit , { digit } ;
//   ident   = letter | "_" , { letter | digit | "_" } ;
//
// Function names: sin cos tan exp ln sqrt abs.

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bsep/dual.hpp"

namespace bsep {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t offset, std::vector<std::string> expected, const std::string& what)
      : std::runtime_error(what), offset_(offset), expected_(std::move(expected)) {}

  std::size_t offset() const { return offset_; }
  const std::vector<std::string>& expected() const { return expected_; }

 private:
  std::size_t offset_;
  std::vector<std::string> expected_;
};

class EvalError : public std::runtime_error {
 public:
  enum class Kind { UnboundVariable, Domain };

  EvalError(Kind kind, std::size_t begin, std::size_t end, const std::string& what)
      : std::runtime_error(what), kind_(kind), begin_(begin), end_(end) {}

  Kind kind() const { return kind_; }
  /// Byte range of the offending sub-expression in the source text.
  std::size_t begin() const { return begin_; }
  std::size_t end() const { return end_; }

 private:
  Kind kind_;
  std::size_t begin_;
  std::size_t end_;
};

enum class NodeKind { Number, Variable, Neg, Add, Sub, Mul, Div, Pow, Call };
enum class Func { Sin, Cos, Tan, Exp, Ln, Sqrt, Abs };

inline constexpr std::array<std::string_view, 7> kFunctionNames = {"sin", "cos", "tan", "exp",
                                                                    "ln",  "sqrt", "abs"};

struct Node {
  NodeKind kind = NodeKind::Number;
  double number = 0.0;
  std::string name;
  Func func = Func::Sin;
  std::shared_ptr<const Node> lhs;
  std::shared_ptr<const Node> rhs;
  std::size_t begin = 0;
  std::size_t end = 0;
  bool constant = true;  // no variables anywhere below
};

using NodePtr = std::shared_ptr<const Node>;
using EvalPoint = std::map<std::string, double, std::less<>>;

namespace detail {

inline std::string format_number(double x) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), ptr);
}

inline bool is_small_integer(double c) {
  return std::floor(c) == c && std::abs(c) < 1e9;
}

[[noreturn]] inline void domain_error(const Node& n, std::string_view source,
                                      const std::string& why) {
  std::string snippet = n.end <= source.size() && n.begin < n.end
                            ? std::string(source.substr(n.begin, n.end - n.begin))
                            : std::string();
  throw EvalError(EvalError::Kind::Domain, n.begin, n.end,
                  why + " in '" + snippet + "' at offset " + std::to_string(n.begin));
}

// Shared operator semantics for the tree walker and the compiled tape.

template <typename T>
T apply_func(Func f, const T& x, const Node& at, std::string_view src) {
  using std::abs;
  using std::cos;
  using std::exp;
  using std::log;
  using std::sin;
  using std::sqrt;
  using std::tan;
  switch (f) {
    case Func::Sin: return sin(x);
    case Func::Cos: return cos(x);
    case Func::Tan: return tan(x);
    case Func::Exp: return exp(x);
    case Func::Ln:
      if (!(primal(x) > 0.0)) domain_error(at, src, "ln of non-positive value");
      return log(x);
    case Func::Sqrt:
      if (primal(x) < 0.0) domain_error(at, src, "sqrt of negative value");
      return sqrt(x);
    case Func::Abs: return abs(x);
  }
  return x;
}

template <typename T>
T apply_div(const T& a, const T& b, const Node& at, std::string_view src) {
  if (primal(b) == 0.0) domain_error(at, src, "division by zero");
  return a / b;
}

template <typename T>
T apply_pow_const(const T& base, double c, const Node& at, std::string_view src) {
  double b = primal(base);
  if (is_small_integer(c)) {
    if (b == 0.0 && c < 0) domain_error(at, src, "division by zero");
    return powi(base, static_cast<long>(c));
  }
  if (b < 0.0) domain_error(at, src, "non-integer power of negative base");
  if (b == 0.0 && c < 0) domain_error(at, src, "division by zero");
  return powc(base, c);
}

template <typename T>
T apply_pow_general(const T& base, const T& expo, const Node& at, std::string_view src) {
  using std::exp;
  using std::log;
  if (!(primal(base) > 0.0)) domain_error(at, src, "variable exponent needs a positive base");
  return exp(expo * log(base));
}

inline double constant_value(const Node& n, const std::shared_ptr<const std::string>& source);

}  // namespace detail

/// Immutable expression tree together with its source text.
class Expression {
 public:
  Expression() = default;
  Expression(NodePtr root, std::shared_ptr<const std::string> source)
      : root_(std::move(root)), source_(std::move(source)) {}

  const Node& root() const { return *root_; }
  const NodePtr& root_ptr() const { return root_; }
  const std::string& source() const { return *source_; }
  const std::shared_ptr<const std::string>& source_ptr() const { return source_; }
  bool empty() const { return root_ == nullptr; }

  std::set<std::string> free_variables() const {
    std::set<std::string> out;
    collect(*root_, out);
    return out;
  }

  bool is_constant() const { return root_->constant; }

  /// Minimal-parenthesis rendering that reparses to the same tree shape.
  std::string to_string() const { return render(*root_); }

  template <typename T, typename Lookup>
  T evaluate_with(Lookup&& lookup) const {
    return eval<T>(*root_, lookup);
  }

 private:
  static void collect(const Node& n, std::set<std::string>& out) {
    if (n.kind == NodeKind::Variable) out.insert(n.name);
    if (n.lhs) collect(*n.lhs, out);
    if (n.rhs) collect(*n.rhs, out);
  }

  static int precedence(const Node& n) {
    switch (n.kind) {
      case NodeKind::Add:
      case NodeKind::Sub: return 1;
      case NodeKind::Mul:
      case NodeKind::Div: return 2;
      case NodeKind::Neg: return 3;
      case NodeKind::Pow: return 4;
      default: return 5;
    }
  }

  static std::string wrap(const Node& n, bool paren) {
    return paren ? "(" + render(n) + ")" : render(n);
  }

  static std::string render(const Node& n) {
    switch (n.kind) {
      case NodeKind::Number: return detail::format_number(n.number);
      case NodeKind::Variable: return n.name;
      case NodeKind::Neg: return "-" + wrap(*n.lhs, precedence(*n.lhs) < 3);
      case NodeKind::Call:
        return std::string(kFunctionNames[static_cast<int>(n.func)]) + "(" + render(*n.lhs) + ")";
      case NodeKind::Pow:
        return wrap(*n.lhs, precedence(*n.lhs) <= 4) + "^" + wrap(*n.rhs, precedence(*n.rhs) < 3);
      default: {
        int p = precedence(n);
        char op = n.kind == NodeKind::Add   ? '+'
                  : n.kind == NodeKind::Sub ? '-'
                  : n.kind == NodeKind::Mul ? '*'
                                            : '/';
        return wrap(*n.lhs, precedence(*n.lhs) < p) + op + wrap(*n.rhs, precedence(*n.rhs) <= p);
      }
    }
  }

  template <typename T, typename Lookup>
  T eval(const Node& n, Lookup& lookup) const {
    const std::string& src = *source_;
    switch (n.kind) {
      case NodeKind::Number: return T(n.number);
      case NodeKind::Variable: return lookup(n);
      case NodeKind::Neg: return -eval<T>(*n.lhs, lookup);
      case NodeKind::Add: return eval<T>(*n.lhs, lookup) + eval<T>(*n.rhs, lookup);
      case NodeKind::Sub: return eval<T>(*n.lhs, lookup) - eval<T>(*n.rhs, lookup);
      case NodeKind::Mul: return eval<T>(*n.lhs, lookup) * eval<T>(*n.rhs, lookup);
      case NodeKind::Div:
        return detail::apply_div(eval<T>(*n.lhs, lookup), eval<T>(*n.rhs, lookup), n, src);
      case NodeKind::Pow: {
        T base = eval<T>(*n.lhs, lookup);
        if (n.rhs->constant) {
          return detail::apply_pow_const(base, detail::constant_value(*n.rhs, source_), n, src);
        }
        return detail::apply_pow_general(base, eval<T>(*n.rhs, lookup), n, src);
      }
      case NodeKind::Call: return detail::apply_func(n.func, eval<T>(*n.lhs, lookup), n, src);
    }
    return T(0.0);
  }

  NodePtr root_;
  std::shared_ptr<const std::string> source_;
};

namespace detail {

// Constant subtrees never reference variables, so the lookup is never called.
inline double constant_value(const Node& n, const std::shared_ptr<const std::string>& source) {
  Expression e(std::shared_ptr<const Node>(std::shared_ptr<const Node>{}, &n), source);
  return e.evaluate_with<double>([](const Node&) -> double { return 0.0; });
}

class Parser {
 public:
  explicit Parser(std::string_view src) : src_(src) {}

  NodePtr parse() {
    skip();
    NodePtr n = expr();
    skip();
    if (pos_ != src_.size()) fail({"operator", "end of input"});
    return n;
  }

 private:
  void skip() {
    while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t' ||
                                  src_[pos_] == '\n' || src_[pos_] == '\r'))
      ++pos_;
  }

  bool peek(char c) {
    skip();
    return pos_ < src_.size() && src_[pos_] == c;
  }

  [[noreturn]] void fail(std::vector<std::string> expected) {
    std::string msg = "syntax error at offset " + std::to_string(pos_) + ": expected ";
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (i) msg += i + 1 == expected.size() ? " or " : ", ";
      msg += expected[i];
    }
    if (pos_ < src_.size()) {
      msg += ", found '";
      msg += src_[pos_];
      msg += "'";
    } else {
      msg += ", found end of input";
    }
    throw ParseError(pos_, std::move(expected), msg);
  }

  static NodePtr make_binary(NodeKind kind, NodePtr a, NodePtr b) {
    auto n = std::make_shared<Node>();
    n->kind = kind;
    n->begin = a->begin;
    n->end = b->end;
    n->constant = a->constant && b->constant;
    n->lhs = std::move(a);
    n->rhs = std::move(b);
    return n;
  }

  NodePtr expr() {
    NodePtr lhs = term();
    while (true) {
      if (peek('+')) {
        ++pos_;
        lhs = make_binary(NodeKind::Add, lhs, term());
      } else if (peek('-')) {
        ++pos_;
        lhs = make_binary(NodeKind::Sub, lhs, term());
      } else {
        return lhs;
      }
    }
  }

  NodePtr term() {
    NodePtr lhs = unary();
    while (true) {
      if (peek('*')) {
        ++pos_;
        lhs = make_binary(NodeKind::Mul, lhs, unary());
      } else if (peek('/')) {
        ++pos_;
        lhs = make_binary(NodeKind::Div, lhs, unary());
      } else {
        return lhs;
      }
    }
  }

  NodePtr unary() {
    if (peek('-')) {
      std::size_t start = pos_++;
      NodePtr operand = unary();
      auto n = std::make_shared<Node>();
      n->kind = NodeKind::Neg;
      n->begin = start;
      n->end = operand->end;
      n->constant = operand->constant;
      n->lhs = std::move(operand);
      return n;
    }
    return power();
  }

  NodePtr power() {
    NodePtr base = primary();
    if (peek('^')) {
      ++pos_;
      return make_binary(NodeKind::Pow, base, unary());
    }
    return base;
  }

  static bool ident_start(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
  }
  static bool ident_char(char c) { return ident_start(c) || (c >= '0' && c <= '9'); }
  static bool digit(char c) { return c >= '0' && c <= '9'; }

  NodePtr primary() {
    skip();
    if (pos_ >= src_.size()) fail({"number", "identifier", "'('", "'-'"});
    char c = src_[pos_];
    if (digit(c) || (c == '.' && pos_ + 1 < src_.size() && digit(src_[pos_ + 1]))) return number();
    if (ident_start(c)) return identifier();
    if (c == '(') {
      std::size_t start = pos_++;
      NodePtr inner = expr();
      if (!peek(')')) fail({"')'"});
      ++pos_;
      // Parentheses do not create nodes; widen the span for error reporting.
      auto n = std::make_shared<Node>(*inner);
      n->begin = start;
      n->end = pos_;
      return n;
    }
    fail({"number", "identifier", "'('", "'-'"});
  }

  NodePtr number() {
    std::size_t start = pos_;
    while (pos_ < src_.size() && digit(src_[pos_])) ++pos_;
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      while (pos_ < src_.size() && digit(src_[pos_])) ++pos_;
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t save = pos_++;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (pos_ < src_.size() && digit(src_[pos_])) {
        while (pos_ < src_.size() && digit(src_[pos_])) ++pos_;
      } else {
        pos_ = save;  // "2e" is a number followed by an identifier; let the caller reject it
      }
    }
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(src_.data() + start, src_.data() + pos_, value);
    if (ec != std::errc() || ptr != src_.data() + pos_) {
      pos_ = start;
      fail({"number"});
    }
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::Number;
    n->number = value;
    n->begin = start;
    n->end = pos_;
    return n;
  }

  NodePtr identifier() {
    std::size_t start = pos_;
    while (pos_ < src_.size() && ident_char(src_[pos_])) ++pos_;
    std::string name(src_.substr(start, pos_ - start));
    if (peek('(')) {
      int index = -1;
      for (std::size_t i = 0; i < kFunctionNames.size(); ++i)
        if (kFunctionNames[i] == name) index = static_cast<int>(i);
      if (index < 0) {
        throw ParseError(start, {"function name"},
                         "unknown function '" + name + "' at offset " + std::to_string(start));
      }
      ++pos_;
      NodePtr arg = expr();
      if (!peek(')')) fail({"')'"});
      ++pos_;
      auto n = std::make_shared<Node>();
      n->kind = NodeKind::Call;
      n->func = static_cast<Func>(index);
      n->begin = start;
      n->end = pos_;
      n->constant = arg->constant;
      n->lhs = std::move(arg);
      return n;
    }
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::Variable;
    n->name = std::move(name);
    n->begin = start;
    n->end = pos_;
    n->constant = false;
    return n;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Expression parse(std::string_view source) {
  auto text = std::make_shared<const std::string>(source);
  detail::Parser parser(*text);
  NodePtr root = parser.parse();
  return Expression(std::move(root), std::move(text));
}

namespace detail {

template <typename T>
T evaluate_point(const Expression& e, const EvalPoint& p) {
  return e.evaluate_with<T>([&](const Node& n) -> T {
    auto it = p.find(n.name);
    if (it == p.end()) {
      throw EvalError(EvalError::Kind::UnboundVariable, n.begin, n.end,
                      "unbound variable '" + n.name + "' at offset " + std::to_string(n.begin));
    }
    return T(it->second);
  });
}

}  // namespace detail

inline double evaluate(const Expression& e, const EvalPoint& p) {
  return detail::evaluate_point<double>(e, p);
}

/// Exact partial derivative d e / d v by forward-mode AD. Variables absent
/// from the expression give 0.
inline double derivative(const Expression& e, const EvalPoint& p, std::string_view v) {
  using D = Dual<double>;
  D r = e.evaluate_with<D>([&](const Node& n) -> D {
    auto it = p.find(n.name);
    if (it == p.end()) {
      throw EvalError(EvalError::Kind::UnboundVariable, n.begin, n.end,
                      "unbound variable '" + n.name + "' at offset " + std::to_string(n.begin));
    }
    return D(it->second, n.name == v ? 1.0 : 0.0);
  });
  return r.eps;
}

/// Second partial by nested duals. The seeds are ordered canonically so the
/// result is bit-identical under swapping v1 and v2.
inline double second_derivative(const Expression& e, const EvalPoint& p, std::string_view v1,
                                std::string_view v2) {
  if (v2 < v1) std::swap(v1, v2);
  using D = Dual<double>;
  using DD = Dual<D>;
  DD r = e.evaluate_with<DD>([&](const Node& n) -> DD {
    auto it = p.find(n.name);
    if (it == p.end()) {
      throw EvalError(EvalError::Kind::UnboundVariable, n.begin, n.end,
                      "unbound variable '" + n.name + "' at offset " + std::to_string(n.begin));
    }
    return DD(D(it->second, n.name == v2 ? 1.0 : 0.0), D(n.name == v1 ? 1.0 : 0.0, 0.0));
  });
  return r.eps.eps;
}

/// An Expression compiled against an ordered variable list into a postfix
/// tape. Evaluation takes a span of values in that order.
class Program {
 public:
  Program() = default;

  Program(const Expression& e, std::span<const std::string> names) : expr_(e) {
    for (const auto& v : e.free_variables()) {
      bool found = false;
      for (const auto& n : names) found = found || n == v;
      if (!found) {
        throw EvalError(EvalError::Kind::UnboundVariable, 0, 0,
                        "unbound variable '" + v + "' in '" + e.source() + "'");
      }
    }
    std::size_t depth = 0;
    emit(e.root(), names, depth);
    arity_ = names.size();
  }

  const Expression& expression() const { return expr_; }
  std::size_t arity() const { return arity_; }

  template <typename T>
  T run(std::span<const T> x) const {
    constexpr std::size_t kInline = 48;
    std::array<T, kInline> small{};
    std::vector<T> big;
    T* stack = small.data();
    if (max_depth_ > kInline) {
      big.resize(max_depth_);
      stack = big.data();
    }
    std::size_t top = 0;
    const std::string& src = expr_.source();
    for (const Instr& in : tape_) {
      switch (in.op) {
        case Op::Const: stack[top++] = T(in.constant); break;
        case Op::Load: stack[top++] = x[in.index]; break;
        case Op::Neg: stack[top - 1] = -stack[top - 1]; break;
        case Op::Add: --top; stack[top - 1] = stack[top - 1] + stack[top]; break;
        case Op::Sub: --top; stack[top - 1] = stack[top - 1] - stack[top]; break;
        case Op::Mul: --top; stack[top - 1] = stack[top - 1] * stack[top]; break;
        case Op::Div:
          --top;
          stack[top - 1] = detail::apply_div(stack[top - 1], stack[top], *in.node, src);
          break;
        case Op::PowConst:
          stack[top - 1] = detail::apply_pow_const(stack[top - 1], in.constant, *in.node, src);
          break;
        case Op::Pow:
          --top;
          stack[top - 1] = detail::apply_pow_general(stack[top - 1], stack[top], *in.node, src);
          break;
        case Op::Call:
          stack[top - 1] = detail::apply_func(in.func, stack[top - 1], *in.node, src);
          break;
      }
    }
    return stack[0];
  }

  double value(std::span<const double> x) const { return run<double>(x); }

  /// d/dx_k by a single dual sweep.
  double derivative(std::span<const double> x, std::size_t k) const {
    using D = Dual<double>;
    std::array<D, 16> small{};
    std::vector<D> big;
    std::span<D> xs = seed_storage(small, big, x.size());
    for (std::size_t i = 0; i < x.size(); ++i) xs[i] = D(x[i], i == k ? 1.0 : 0.0);
    return run<D>(std::span<const D>(xs.data(), xs.size())).eps;
  }

  /// d^2/dx_k dx_l with canonical seed order (symmetric bit-for-bit).
  double second_derivative(std::span<const double> x, std::size_t k, std::size_t l) const {
    if (l < k) std::swap(k, l);
    using D = Dual<double>;
    using DD = Dual<D>;
    std::array<DD, 16> small{};
    std::vector<DD> big;
    std::span<DD> xs = seed_storage(small, big, x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
      xs[i] = DD(D(x[i], i == l ? 1.0 : 0.0), D(i == k ? 1.0 : 0.0, 0.0));
    return run<DD>(std::span<const DD>(xs.data(), xs.size())).eps.eps;
  }

  /// Variable slots this program actually reads.
  const std::vector<std::size_t>& used_slots() const { return used_; }

 private:
  enum class Op : std::uint8_t { Const, Load, Neg, Add, Sub, Mul, Div, PowConst, Pow, Call };

  struct Instr {
    Op op = Op::Const;
    Func func = Func::Sin;
    std::size_t index = 0;
    double constant = 0.0;
    const Node* node = nullptr;  // kept alive by expr_
  };

  template <typename D, std::size_t M>
  static std::span<D> seed_storage(std::array<D, M>& small, std::vector<D>& big, std::size_t n) {
    if (n <= M) return std::span<D>(small.data(), n);
    big.resize(n);
    return std::span<D>(big);
  }

  void push(Instr in, std::size_t& depth, int delta) {
    tape_.push_back(in);
    depth = static_cast<std::size_t>(static_cast<long>(depth) + delta);
    if (depth > max_depth_) max_depth_ = depth;
  }

  void emit(const Node& n, std::span<const std::string> names, std::size_t& depth) {
    Instr in;
    in.node = &n;
    if (n.constant && n.kind != NodeKind::Number) {
      // Fold constant subtrees; domain errors surface here at compile time.
      in.op = Op::Const;
      in.constant = detail::constant_value(n, expr_.source_ptr());
      push(in, depth, +1);
      return;
    }
    switch (n.kind) {
      case NodeKind::Number:
        in.op = Op::Const;
        in.constant = n.number;
        push(in, depth, +1);
        return;
      case NodeKind::Variable: {
        in.op = Op::Load;
        for (std::size_t i = 0; i < names.size(); ++i)
          if (names[i] == n.name) in.index = i;
        bool seen = false;
        for (auto s : used_) seen = seen || s == in.index;
        if (!seen) used_.push_back(in.index);
        push(in, depth, +1);
        return;
      }
      case NodeKind::Neg:
        emit(*n.lhs, names, depth);
        in.op = Op::Neg;
        push(in, depth, 0);
        return;
      case NodeKind::Call:
        emit(*n.lhs, names, depth);
        in.op = Op::Call;
        in.func = n.func;
        push(in, depth, 0);
        return;
      case NodeKind::Pow:
        emit(*n.lhs, names, depth);
        if (n.rhs->constant) {
          in.op = Op::PowConst;
          in.constant = detail::constant_value(*n.rhs, expr_.source_ptr());
          push(in, depth, 0);
        } else {
          emit(*n.rhs, names, depth);
          in.op = Op::Pow;
          push(in, depth, -1);
        }
        return;
      default:
        emit(*n.lhs, names, depth);
        emit(*n.rhs, names, depth);
        in.op = n.kind == NodeKind::Add   ? Op::Add
                : n.kind == NodeKind::Sub ? Op::Sub
                : n.kind == NodeKind::Mul ? Op::Mul
                                          : Op::Div;
        push(in, depth, -1);
        return;
    }
  }

  Expression expr_;
  std::vector<Instr> tape_;
  std::vector<std::size_t> used_;
  std::size_t max_depth_ = 0;
  std::size_t arity_ = 0;
};

}  // namespace bsep
