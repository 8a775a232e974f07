#include "nlpflow/expression.hpp"

#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <vector>

#include <fmt/format.h>

#include "nlpflow/dual.hpp"
#include "nlpflow/errors.hpp"

namespace nlpflow {
namespace {

// ---------------------------------------------------------------- AST

enum class Fn { kSin, kCos, kExp, kLog, kSqrt };

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  enum class Kind { kConst, kVar, kAdd, kSub, kMul, kDiv, kNeg, kPow, kCall };
  Kind kind;
  double value = 0.0;  // constant value, or the exponent of kPow
  Index var = 0;       // 0-based variable index
  Fn fn = Fn::kSin;
  NodePtr lhs;
  NodePtr rhs;
};

NodePtr make_const(double v) { return std::make_shared<const Node>(Node{Node::Kind::kConst, v, 0, Fn::kSin, nullptr, nullptr}); }
NodePtr make_binary(Node::Kind kind, NodePtr a, NodePtr b) {
  return std::make_shared<const Node>(Node{kind, 0.0, 0, Fn::kSin, std::move(a), std::move(b)});
}

std::optional<double> fold_constant(const Node& node) {
  switch (node.kind) {
    case Node::Kind::kConst: return node.value;
    case Node::Kind::kVar: return std::nullopt;
    case Node::Kind::kNeg: {
      auto a = fold_constant(*node.lhs);
      return a ? std::optional<double>(-*a) : std::nullopt;
    }
    case Node::Kind::kPow: {
      auto a = fold_constant(*node.lhs);
      return a ? std::optional<double>(std::pow(*a, node.value)) : std::nullopt;
    }
    case Node::Kind::kCall: {
      auto a = fold_constant(*node.lhs);
      if (!a) return std::nullopt;
      switch (node.fn) {
        case Fn::kSin: return std::sin(*a);
        case Fn::kCos: return std::cos(*a);
        case Fn::kExp: return std::exp(*a);
        case Fn::kLog: return std::log(*a);
        case Fn::kSqrt: return std::sqrt(*a);
      }
      return std::nullopt;
    }
    default: {
      auto a = fold_constant(*node.lhs);
      auto b = fold_constant(*node.rhs);
      if (!a || !b) return std::nullopt;
      switch (node.kind) {
        case Node::Kind::kAdd: return *a + *b;
        case Node::Kind::kSub: return *a - *b;
        case Node::Kind::kMul: return *a * *b;
        case Node::Kind::kDiv: return *a / *b;
        default: return std::nullopt;
      }
    }
  }
}

const char* fn_name(Fn fn) {
  switch (fn) {
    case Fn::kSin: return "sin";
    case Fn::kCos: return "cos";
    case Fn::kExp: return "exp";
    case Fn::kLog: return "log";
    case Fn::kSqrt: return "sqrt";
  }
  return "?";
}

std::string format_number(double v) {
  std::string s = fmt::format("{:.17g}", v);
  return v < 0 ? "(" + s + ")" : s;
}

std::string to_text(const Node& node) {
  switch (node.kind) {
    case Node::Kind::kConst: return format_number(node.value);
    case Node::Kind::kVar: return fmt::format("x{}", node.var + 1);
    case Node::Kind::kNeg: return "(-" + to_text(*node.lhs) + ")";
    case Node::Kind::kPow: return "(" + to_text(*node.lhs) + "^" + format_number(node.value) + ")";
    case Node::Kind::kCall: return std::string(fn_name(node.fn)) + "(" + to_text(*node.lhs) + ")";
    case Node::Kind::kAdd: return "(" + to_text(*node.lhs) + " + " + to_text(*node.rhs) + ")";
    case Node::Kind::kSub: return "(" + to_text(*node.lhs) + " - " + to_text(*node.rhs) + ")";
    case Node::Kind::kMul: return "(" + to_text(*node.lhs) + " * " + to_text(*node.rhs) + ")";
    case Node::Kind::kDiv: return "(" + to_text(*node.lhs) + " / " + to_text(*node.rhs) + ")";
  }
  return "";
}

// ---------------------------------------------------------------- tape

struct Instr {
  Node::Kind kind;
  double value = 0.0;
  Index var = 0;
  Fn fn = Fn::kSin;
};

using Tape = std::vector<Instr>;

void emit(const Node& node, Tape& tape) {
  if (node.lhs) emit(*node.lhs, tape);
  if (node.rhs) emit(*node.rhs, tape);
  tape.push_back({node.kind, node.value, node.var, node.fn});
}

Tape compile(const Node& node) {
  Tape tape;
  emit(node, tape);
  return tape;
}

Dual run(const Tape& tape, const Vector& theta, std::vector<Dual>& stack) {
  const Index n = theta.size();
  stack.clear();
  for (const Instr& ins : tape) {
    switch (ins.kind) {
      case Node::Kind::kConst: stack.push_back(Dual::constant(ins.value, n)); break;
      case Node::Kind::kVar: stack.push_back(Dual::variable(theta(ins.var), n, ins.var)); break;
      case Node::Kind::kNeg: stack.back() = -stack.back(); break;
      case Node::Kind::kPow: stack.back() = pow(stack.back(), ins.value); break;
      case Node::Kind::kCall: {
        Dual& a = stack.back();
        switch (ins.fn) {
          case Fn::kSin: a = sin(a); break;
          case Fn::kCos: a = cos(a); break;
          case Fn::kExp: a = exp(a); break;
          case Fn::kLog: a = log(a); break;
          case Fn::kSqrt: a = sqrt(a); break;
        }
        break;
      }
      default: {
        Dual b = std::move(stack.back());
        stack.pop_back();
        Dual& a = stack.back();
        switch (ins.kind) {
          case Node::Kind::kAdd: a = a + b; break;
          case Node::Kind::kSub: a = a - b; break;
          case Node::Kind::kMul: a = a * b; break;
          case Node::Kind::kDiv: a = a / b; break;
          default: break;
        }
      }
    }
  }
  return std::move(stack.back());
}

class ExpressionModel final : public ProblemModel {
 public:
  ExpressionModel(Index n, NodePtr objective, std::vector<NodePtr> ineqs, std::vector<NodePtr> eqs)
      : n_(n), objective_(std::move(objective)), ineqs_(std::move(ineqs)), eqs_(std::move(eqs)) {
    f_tape_ = compile(*objective_);
    for (const auto& e : ineqs_) g_tapes_.push_back(compile(*e));
    for (const auto& e : eqs_) h_tapes_.push_back(compile(*e));
  }

  void evaluate(const Vector& theta, EvalPoint& out) const override {
    std::vector<Dual> stack;
    Dual f = run(f_tape_, theta, stack);
    out.f = f.value;
    out.f_grad = f.grad;
    for (std::size_t i = 0; i < g_tapes_.size(); ++i) {
      Dual d = run(g_tapes_[i], theta, stack);
      out.g(static_cast<Index>(i)) = d.value;
      out.g_jac.row(static_cast<Index>(i)) = d.grad.transpose();
    }
    for (std::size_t i = 0; i < h_tapes_.size(); ++i) {
      Dual d = run(h_tapes_[i], theta, stack);
      out.h(static_cast<Index>(i)) = d.value;
      out.h_jac.row(static_cast<Index>(i)) = d.grad.transpose();
    }
  }

  std::string serialize() const {
    std::string out = fmt::format("var {}\nmin {}\n", n_, to_text(*objective_));
    for (const auto& e : ineqs_) out += "ineq " + to_text(*e) + "\n";
    for (const auto& e : eqs_) out += "eq " + to_text(*e) + "\n";
    return out;
  }

 private:
  Index n_;
  NodePtr objective_;
  std::vector<NodePtr> ineqs_;
  std::vector<NodePtr> eqs_;
  Tape f_tape_;
  std::vector<Tape> g_tapes_;
  std::vector<Tape> h_tapes_;
};

// ---------------------------------------------------------------- lexer

struct Token {
  enum class Kind { kNumber, kIdent, kOp, kEnd };
  Kind kind = Kind::kEnd;
  std::string text;
  double number = 0.0;
  std::size_t column = 0;  // 1-based
};

std::vector<Token> tokenize(std::string_view line, std::size_t line_no) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    const char c = line[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '#') break;
    const std::size_t column = i + 1;
    if (std::isdigit(static_cast<unsigned char>(c)) || (c == '.' && i + 1 < line.size() && std::isdigit(static_cast<unsigned char>(line[i + 1])))) {
      std::size_t j = i;
      while (j < line.size() && (std::isdigit(static_cast<unsigned char>(line[j])) || line[j] == '.')) ++j;
      if (j < line.size() && (line[j] == 'e' || line[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < line.size() && (line[k] == '+' || line[k] == '-')) ++k;
        if (k < line.size() && std::isdigit(static_cast<unsigned char>(line[k]))) {
          while (k < line.size() && std::isdigit(static_cast<unsigned char>(line[k]))) ++k;
          j = k;
        }
      }
      Token t{Token::Kind::kNumber, std::string(line.substr(i, j - i)), 0.0, column};
      auto [ptr, ec] = std::from_chars(line.data() + i, line.data() + j, t.number);
      if (ec != std::errc() || ptr != line.data() + j) {
        throw ParseError(line_no, column, fmt::format("malformed number '{}'", t.text));
      }
      tokens.push_back(std::move(t));
      i = j;
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < line.size() && (std::isalnum(static_cast<unsigned char>(line[j])) || line[j] == '_')) ++j;
      tokens.push_back({Token::Kind::kIdent, std::string(line.substr(i, j - i)), 0.0, column});
      i = j;
      continue;
    }
    if ((c == '<' || c == '>') && i + 1 < line.size() && line[i + 1] == '=') {
      tokens.push_back({Token::Kind::kOp, std::string(line.substr(i, 2)), 0.0, column});
      i += 2;
      continue;
    }
    if (std::string_view("+-*/^()=").find(c) != std::string_view::npos) {
      tokens.push_back({Token::Kind::kOp, std::string(1, c), 0.0, column});
      ++i;
      continue;
    }
    throw ParseError(line_no, column, fmt::format("unexpected character '{}'", c));
  }
  tokens.push_back({Token::Kind::kEnd, "", 0.0, line.size() + 1});
  return tokens;
}

// ---------------------------------------------------------------- parser

struct VarUse {
  Index index;
  std::size_t line;
  std::size_t column;
};

class LineParser {
 public:
  LineParser(std::vector<Token> tokens, std::size_t line_no, std::vector<VarUse>& uses)
      : tokens_(std::move(tokens)), line_(line_no), uses_(uses) {}

  const Token& peek() const { return tokens_[pos_]; }
  bool at_end() const { return peek().kind == Token::Kind::kEnd; }
  bool peek_op(std::string_view op) const { return peek().kind == Token::Kind::kOp && peek().text == op; }
  Token take() { return tokens_[pos_ < tokens_.size() - 1 ? pos_++ : pos_]; }

  [[noreturn]] void fail(const Token& at, const std::string& message) const { throw ParseError(line_, at.column, message); }

  NodePtr expression() {
    NodePtr lhs = term();
    while (peek_op("+") || peek_op("-")) {
      Token op = take();
      if (at_end()) fail(op, fmt::format("dangling operator '{}'", op.text));
      NodePtr rhs = term();
      lhs = make_binary(op.text == "+" ? Node::Kind::kAdd : Node::Kind::kSub, lhs, rhs);
    }
    return lhs;
  }

 private:
  NodePtr term() {
    NodePtr lhs = unary();
    while (peek_op("*") || peek_op("/")) {
      Token op = take();
      if (at_end()) fail(op, fmt::format("dangling operator '{}'", op.text));
      NodePtr rhs = unary();
      lhs = make_binary(op.text == "*" ? Node::Kind::kMul : Node::Kind::kDiv, lhs, rhs);
    }
    return lhs;
  }

  NodePtr unary() {
    if (peek_op("-") || peek_op("+")) {
      Token op = take();
      if (at_end()) fail(op, fmt::format("dangling operator '{}'", op.text));
      NodePtr operand = unary();
      if (op.text == "+") return operand;
      return std::make_shared<const Node>(Node{Node::Kind::kNeg, 0.0, 0, Fn::kSin, operand, nullptr});
    }
    return power();
  }

  NodePtr power() {
    NodePtr base = primary();
    if (peek_op("^")) {
      Token op = take();
      if (at_end()) fail(op, "dangling operator '^'");
      const Token& exponent_start = peek();
      NodePtr exponent = unary();
      auto value = fold_constant(*exponent);
      if (!value) fail(exponent_start, "exponent must be a constant expression");
      return std::make_shared<const Node>(Node{Node::Kind::kPow, *value, 0, Fn::kSin, base, nullptr});
    }
    return base;
  }

  NodePtr primary() {
    Token t = take();
    switch (t.kind) {
      case Token::Kind::kNumber: return make_const(t.number);
      case Token::Kind::kIdent: return identifier(t);
      case Token::Kind::kOp:
        if (t.text == "(") {
          NodePtr inner = expression();
          if (!peek_op(")")) fail(peek(), "expected ')'");
          take();
          return inner;
        }
        fail(t, fmt::format("unexpected '{}'", t.text));
      case Token::Kind::kEnd: fail(t, "unexpected end of line");
    }
    fail(t, "unexpected token");
  }

  NodePtr identifier(const Token& t) {
    static const std::pair<const char*, Fn> functions[] = {
        {"sin", Fn::kSin}, {"cos", Fn::kCos}, {"exp", Fn::kExp}, {"log", Fn::kLog}, {"sqrt", Fn::kSqrt}};
    for (const auto& [name, fn] : functions) {
      if (t.text != name) continue;
      if (!peek_op("(")) fail(peek(), fmt::format("expected '(' after '{}'", name));
      take();
      NodePtr arg = expression();
      if (!peek_op(")")) fail(peek(), "expected ')'");
      take();
      return std::make_shared<const Node>(Node{Node::Kind::kCall, 0.0, 0, fn, arg, nullptr});
    }
    if (t.text == "pi") return make_const(std::numbers::pi);
    if (t.text.size() > 1 && t.text[0] == 'x') {
      Index k = 0;
      auto [ptr, ec] = std::from_chars(t.text.data() + 1, t.text.data() + t.text.size(), k);
      if (ec == std::errc() && ptr == t.text.data() + t.text.size() && k >= 1 && t.text[1] != '0') {
        uses_.push_back({k - 1, line_, t.column});
        return std::make_shared<const Node>(Node{Node::Kind::kVar, 0.0, k - 1, Fn::kSin, nullptr, nullptr});
      }
    }
    fail(t, fmt::format("unknown identifier '{}'", t.text));
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  std::size_t line_;
  std::vector<VarUse>& uses_;
};

}  // namespace

NlpProblem parse_problem(std::string_view text, const ParseOptions& options) {
  std::optional<Index> n;
  std::size_t var_line = 0;
  NodePtr objective;
  std::vector<NodePtr> ineqs;
  std::vector<NodePtr> eqs;
  std::vector<VarUse> uses;

  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    start = end + 1;

    LineParser p(tokenize(line, line_no), line_no, uses);
    if (p.at_end()) {
      if (end == text.size()) break;
      continue;
    }
    Token keyword = p.take();
    if (keyword.kind != Token::Kind::kIdent) p.fail(keyword, "expected a declaration (var, min, ineq, eq)");

    if (keyword.text == "var") {
      if (n) p.fail(keyword, fmt::format("duplicate 'var' declaration (first on line {})", var_line));
      Token count = p.take();
      if (count.kind != Token::Kind::kNumber || count.number < 1 || count.number != std::floor(count.number)) {
        p.fail(count, "'var' expects a positive integer");
      }
      n = static_cast<Index>(count.number);
      var_line = line_no;
    } else if (keyword.text == "min") {
      if (objective) p.fail(keyword, "duplicate 'min' declaration");
      if (p.at_end()) p.fail(p.peek(), "missing objective expression");
      objective = p.expression();
    } else if (keyword.text == "ineq") {
      if (p.at_end()) p.fail(p.peek(), "missing constraint expression");
      std::vector<NodePtr> parts{p.expression()};
      std::vector<std::string> relations;
      while (p.peek_op("<=") || p.peek_op(">=")) {
        Token rel = p.take();
        if (p.at_end()) p.fail(rel, fmt::format("dangling operator '{}'", rel.text));
        relations.push_back(rel.text);
        parts.push_back(p.expression());
      }
      if (relations.size() > 2) p.fail(p.peek(), "at most two relations per constraint");
      if (relations.size() == 2 && relations[0] != relations[1]) {
        p.fail(p.peek(), "mixed '<=' and '>=' in a two-sided constraint");
      }
      // Normalise every relation a <= b into a - b <= 0. A two-sided
      // a <= e <= b yields e - b <= 0 followed by a - e <= 0.
      if (relations.empty()) {
        ineqs.push_back(parts[0]);
      } else if (relations.size() == 1) {
        if (relations[0] == "<=") ineqs.push_back(make_binary(Node::Kind::kSub, parts[0], parts[1]));
        else ineqs.push_back(make_binary(Node::Kind::kSub, parts[1], parts[0]));
      } else {
        const bool ascending = relations[0] == "<=";
        const NodePtr& lo = ascending ? parts[0] : parts[2];
        const NodePtr& hi = ascending ? parts[2] : parts[0];
        ineqs.push_back(make_binary(Node::Kind::kSub, parts[1], hi));
        ineqs.push_back(make_binary(Node::Kind::kSub, lo, parts[1]));
      }
    } else if (keyword.text == "eq") {
      if (p.at_end()) p.fail(p.peek(), "missing constraint expression");
      NodePtr lhs = p.expression();
      if (p.peek_op("=")) {
        Token rel = p.take();
        if (p.at_end()) p.fail(rel, "dangling operator '='");
        lhs = make_binary(Node::Kind::kSub, lhs, p.expression());
      }
      eqs.push_back(lhs);
    } else {
      p.fail(keyword, fmt::format("unknown declaration '{}'", keyword.text));
    }
    if (!p.at_end()) p.fail(p.peek(), fmt::format("unexpected '{}'", p.peek().text));
    if (end == text.size()) break;
  }

  if (!n) throw ParseError(line_no, 1, "missing 'var' declaration");
  if (!objective) throw ParseError(line_no, 1, "missing 'min' objective");
  for (const VarUse& use : uses) {
    if (use.index >= *n) {
      throw ParseError(use.line, use.column,
                       fmt::format("variable x{} exceeds declared dimension {} (line {})", use.index + 1, *n, var_line));
    }
  }

  const auto r = static_cast<Index>(ineqs.size());
  const auto s = static_cast<Index>(eqs.size());
  NlpProblem problem(options.name, *n, r, s, std::make_shared<ExpressionModel>(*n, objective, ineqs, eqs));
  if (options.validate_derivatives) {
    DerivativeCheck check = check_derivatives(problem, options.validation_points, options.validation_seed);
    if (check.max_rel_error > options.validation_tolerance) {
      throw Error(ErrorKind::kNumericFailure,
                  fmt::format("derivative validation failed at {}: relative error {:.3g}", check.worst,
                              check.max_rel_error));
    }
  }
  return problem;
}

std::string serialize_problem(const NlpProblem& problem) {
  const auto* model = dynamic_cast<const ExpressionModel*>(&problem.model());
  if (model == nullptr) {
    throw Error(ErrorKind::kInvalidInput, fmt::format("problem '{}' is not expression-backed", problem.name()));
  }
  return model->serialize();
}

NlpProblem load_problem_file(const std::string& path, ParseOptions options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, fmt::format("cannot open problem file '{}'", path));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  options.name = std::filesystem::path(path).stem().string();
  try {
    return parse_problem(buffer.str(), options);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.column(), e.message(), path);
  }
}

}  // namespace nlpflow
