#include "neon/expr.hpp"

#include <algorithm>
#include <array>
#include <cassert>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <sstream>

namespace neon {

namespace {

constexpr std::array<OpInfo, kNumOps> kOps = {{
    {"add", 2, true},
    {"sub", 2, false},
    {"mul", 2, true},
    {"div", 2, false},
    {"sqrt", 1, false},
    {"square", 1, false},
    {"cube", 1, false},
    {"sin", 1, false},
    {"cos", 1, false},
    {"log", 1, false},
    {"exp", 1, false},
}};

constexpr std::array<double, 5> kConstants = {0.0, 1.0, 2.0, 3.0, kPi};

}  // namespace

const OpInfo& op_info(Op op) { return kOps[static_cast<int>(op)]; }

std::optional<Op> op_from_name(std::string_view name) {
  for (int i = 0; i < kNumOps; ++i)
    if (name == kOps[i].name) return static_cast<Op>(i);
  return std::nullopt;
}

double apply_op(Op op, double a, double b) {
  switch (op) {
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    case Op::Mul: return a * b;
    case Op::Div: return a / b;
    case Op::Sqrt: return std::sqrt(a);
    case Op::Square: return a * a;
    case Op::Cube: return a * a * a;
    case Op::Sin: return std::sin(a);
    case Op::Cos: return std::cos(a);
    case Op::Log: return std::log(a);
    case Op::Exp: return std::exp(a);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

std::span<const double> generation_constants() { return kConstants; }

std::vector<Terminal> terminal_set(int arity) {
  std::vector<Terminal> out;
  out.reserve(arity + kConstants.size());
  for (int i = 0; i < arity; ++i) out.push_back(Terminal::variable(i));
  for (double c : kConstants) out.push_back(Terminal::constant(c));
  return out;
}

// ---------------------------------------------------------------------------

struct ExprTree::Node {
  bool is_op;
  Op op{};
  Terminal term{};
  std::vector<ExprTree> children;
  int height = 0;
  int size = 1;
  int max_var = -1;
};

ExprTree ExprTree::variable(int index) {
  assert(index >= 0);
  auto n = std::make_shared<Node>();
  n->is_op = false;
  n->term = Terminal::variable(index);
  n->max_var = index;
  return ExprTree(std::move(n));
}

ExprTree ExprTree::constant(double value) {
  auto n = std::make_shared<Node>();
  n->is_op = false;
  n->term = Terminal::constant(value);
  return ExprTree(std::move(n));
}

ExprTree ExprTree::apply(Op op, std::vector<ExprTree> children) {
  const auto& info = op_info(op);
  if (static_cast<int>(children.size()) != info.arity)
    throw Error(std::string("operator ") + info.name + " expects " +
                std::to_string(info.arity) + " children, got " +
                std::to_string(children.size()));
  auto n = std::make_shared<Node>();
  n->is_op = true;
  n->op = op;
  for (const auto& c : children) {
    n->height = std::max(n->height, c.height() + 1);
    n->size += c.size();
    n->max_var = std::max(n->max_var, c.max_var_index());
  }
  n->children = std::move(children);
  return ExprTree(std::move(n));
}

bool ExprTree::is_terminal() const { return !node_->is_op; }
bool ExprTree::is_variable() const {
  return !node_->is_op && node_->term.kind == Terminal::Kind::Variable;
}
bool ExprTree::is_constant() const {
  return !node_->is_op && node_->term.kind == Terminal::Kind::Constant;
}
Op ExprTree::op() const { return node_->op; }
int ExprTree::var_index() const { return node_->term.index; }
double ExprTree::const_value() const { return node_->term.value; }
const Terminal& ExprTree::terminal() const { return node_->term; }
int ExprTree::num_children() const { return static_cast<int>(node_->children.size()); }
const ExprTree& ExprTree::child(int i) const { return node_->children[i]; }
int ExprTree::height() const { return node_->height; }
int ExprTree::size() const { return node_->size; }
int ExprTree::max_var_index() const { return node_->max_var; }

const ExprTree& ExprTree::at(const NodePath& path) const {
  const ExprTree* cur = this;
  for (std::uint8_t step : path) {
    if (step >= cur->num_children())
      throw PathError("node path does not exist in this tree");
    cur = &cur->child(step);
  }
  return *cur;
}

ExprTree ExprTree::with_replaced(const NodePath& path, const ExprTree& replacement) const {
  if (path.empty()) return replacement;
  std::uint8_t step = path.front();
  if (step >= num_children()) throw PathError("node path does not exist in this tree");
  NodePath rest(path.begin() + 1, path.end());
  std::vector<ExprTree> kids;
  kids.reserve(num_children());
  for (int i = 0; i < num_children(); ++i)
    kids.push_back(i == step ? child(i).with_replaced(rest, replacement) : child(i));
  return apply(node_->op, std::move(kids));
}

bool ExprTree::operator==(const ExprTree& other) const {
  if (node_ == other.node_) return true;
  if (node_->is_op != other.node_->is_op) return false;
  if (node_->is_op) {
    if (node_->op != other.node_->op) return false;
    for (int i = 0; i < num_children(); ++i)
      if (!(child(i) == other.child(i))) return false;
    return true;
  }
  const Terminal& a = node_->term;
  const Terminal& b = other.node_->term;
  if (a.kind != b.kind) return false;
  return a.kind == Terminal::Kind::Variable ? a.index == b.index : a.value == b.value;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd eval_tree(const ExprTree& tree, const Eigen::MatrixXd& inputs) {
  const Eigen::Index n = inputs.rows();
  if (tree.is_variable()) {
    int i = tree.var_index();
    if (i >= inputs.cols())
      throw EvalError("variable x" + std::to_string(i) + " out of range for arity " +
                          std::to_string(inputs.cols()),
                      i);
    return inputs.col(i);
  }
  if (tree.is_constant()) return Eigen::VectorXd::Constant(n, tree.const_value());
  Eigen::VectorXd a = eval_tree(tree.child(0), inputs);
  if (op_info(tree.op()).arity == 1) {
    Eigen::VectorXd out(n);
    for (Eigen::Index j = 0; j < n; ++j) out[j] = apply_op(tree.op(), a[j]);
    return out;
  }
  Eigen::VectorXd b = eval_tree(tree.child(1), inputs);
  Eigen::VectorXd out(n);
  for (Eigen::Index j = 0; j < n; ++j) out[j] = apply_op(tree.op(), a[j], b[j]);
  return out;
}

namespace {

Terminal random_terminal(Rng& rng, int arity) {
  if (arity > 0 && std::uniform_int_distribution<int>(0, 1)(rng) == 0)
    return Terminal::variable(std::uniform_int_distribution<int>(0, arity - 1)(rng));
  auto consts = generation_constants();
  auto i = std::uniform_int_distribution<std::size_t>(0, consts.size() - 1)(rng);
  return Terminal::constant(consts[i]);
}

ExprTree from_terminal(const Terminal& t) {
  return t.kind == Terminal::Kind::Variable ? ExprTree::variable(t.index)
                                            : ExprTree::constant(t.value);
}

}  // namespace

ExprTree random_tree_grow(Rng& rng, int max_height, int arity) {
  if (max_height <= 0 || std::uniform_int_distribution<int>(0, 1)(rng) == 0)
    return from_terminal(random_terminal(rng, arity));
  Op op = static_cast<Op>(std::uniform_int_distribution<int>(0, kNumOps - 1)(rng));
  std::vector<ExprTree> kids;
  for (int i = 0; i < op_info(op).arity; ++i)
    kids.push_back(random_tree_grow(rng, max_height - 1, arity));
  return ExprTree::apply(op, std::move(kids));
}

ExprTree random_tree_full(Rng& rng, int height, int arity) {
  if (height <= 0) return from_terminal(random_terminal(rng, arity));
  Op op = static_cast<Op>(std::uniform_int_distribution<int>(0, kNumOps - 1)(rng));
  std::vector<ExprTree> kids;
  for (int i = 0; i < op_info(op).arity; ++i)
    kids.push_back(random_tree_full(rng, height - 1, arity));
  return ExprTree::apply(op, std::move(kids));
}

namespace {

void collect_by_height(const ExprTree& t, int h, NodePath& cur, std::vector<NodePath>& out) {
  if (t.height() == h) out.push_back(cur);
  if (t.height() <= h) return;  // children are strictly shorter
  for (int i = 0; i < t.num_children(); ++i) {
    cur.push_back(static_cast<std::uint8_t>(i));
    collect_by_height(t.child(i), h, cur, out);
    cur.pop_back();
  }
}

bool nth_path_rec(const ExprTree& t, int& remaining, NodePath& cur) {
  if (remaining == 0) return true;
  --remaining;
  for (int i = 0; i < t.num_children(); ++i) {
    cur.push_back(static_cast<std::uint8_t>(i));
    if (nth_path_rec(t.child(i), remaining, cur)) return true;
    cur.pop_back();
  }
  return false;
}

}  // namespace

std::vector<NodePath> subtrees_of_height(const ExprTree& tree, int h) {
  std::vector<NodePath> out;
  if (h < 0 || h > tree.height()) return out;
  NodePath cur;
  collect_by_height(tree, h, cur, out);
  return out;
}

NodePath nth_path(const ExprTree& tree, int idx) {
  if (idx < 0 || idx >= tree.size()) throw PathError("node index out of range");
  NodePath cur;
  int remaining = idx;
  nth_path_rec(tree, remaining, cur);
  return cur;
}

NodePath uniform_node(const ExprTree& tree, Rng& rng) {
  return nth_path(tree, std::uniform_int_distribution<int>(0, tree.size() - 1)(rng));
}

NodePath sample_subtree_height_biased(const ExprTree& tree, Rng& rng) {
  int hp = tree.height();
  if (hp == 0) return {};
  // weights 1..hp
  std::int64_t total = static_cast<std::int64_t>(hp) * (hp + 1) / 2;
  std::int64_t r = std::uniform_int_distribution<std::int64_t>(1, total)(rng);
  int h = 1;
  while (r > h) {
    r -= h;
    ++h;
  }
  auto candidates = subtrees_of_height(tree, h);
  assert(!candidates.empty());
  auto i = std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng);
  return candidates[i];
}

// ---------------------------------------------------------------------------
// Text form

namespace {

void format_double(std::string& out, double v) {
  if (v == kPi) {
    out += "pi";
    return;
  }
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

void print_rec(const ExprTree& t, std::string& out, bool normalized) {
  if (t.is_variable()) {
    out += 'x';
    out += std::to_string(t.var_index());
    return;
  }
  if (t.is_constant()) {
    format_double(out, t.const_value());
    return;
  }
  const auto& info = op_info(t.op());
  out += '(';
  out += info.name;
  if (normalized && info.commutative) {
    std::string a, b;
    print_rec(t.child(0), a, true);
    print_rec(t.child(1), b, true);
    if (b < a) std::swap(a, b);
    out += ' ';
    out += a;
    out += ' ';
    out += b;
  } else {
    for (int i = 0; i < t.num_children(); ++i) {
      out += ' ';
      print_rec(t.child(i), out, normalized);
    }
  }
  out += ')';
}

struct Parser {
  std::string_view text;
  std::size_t pos = 0;

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }

  std::string_view token() {
    skip_ws();
    if (pos >= text.size()) throw ParseError("unexpected end of input", pos);
    if (text[pos] == '(' || text[pos] == ')') return text.substr(pos++, 1);
    std::size_t start = pos;
    while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos])) &&
           text[pos] != '(' && text[pos] != ')')
      ++pos;
    return text.substr(start, pos - start);
  }

  ExprTree parse(int depth) {
    if (depth > 512) throw ParseError("expression nesting too deep", pos);
    std::size_t tok_pos = pos;
    auto tok = token();
    if (tok == ")") throw ParseError("unexpected ')'", tok_pos);
    if (tok == "(") {
      tok_pos = pos;
      auto head = token();
      auto op = op_from_name(head);
      if (!op)
        throw ParseError("unknown operator '" + std::string(head) + "'", tok_pos);
      std::vector<ExprTree> kids;
      for (int i = 0; i < op_info(*op).arity; ++i) kids.push_back(parse(depth + 1));
      skip_ws();
      tok_pos = pos;
      auto close = token();
      if (close != ")")
        throw ParseError(std::string("expected ')' after ") + op_info(*op).name +
                             " arguments",
                         tok_pos);
      return ExprTree::apply(*op, std::move(kids));
    }
    return parse_terminal(tok, tok_pos);
  }

  static ExprTree parse_terminal(std::string_view tok, std::size_t tok_pos) {
    if (tok == "pi") return ExprTree::constant(kPi);
    if (tok.size() >= 2 && tok[0] == 'x' &&
        std::isdigit(static_cast<unsigned char>(tok[1]))) {
      int idx = 0;
      auto res = std::from_chars(tok.data() + 1, tok.data() + tok.size(), idx);
      if (res.ec == std::errc() && res.ptr == tok.data() + tok.size())
        return ExprTree::variable(idx);
      throw ParseError("malformed variable '" + std::string(tok) + "'", tok_pos);
    }
    double v = 0.0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec == std::errc() && res.ptr == tok.data() + tok.size())
      return ExprTree::constant(v);
    throw ParseError("unknown operator '" + std::string(tok) + "'", tok_pos);
  }
};

}  // namespace

std::string canonical_string(const ExprTree& tree) {
  std::string out;
  print_rec(tree, out, false);
  return out;
}

std::string normalized_string(const ExprTree& tree) {
  std::string out;
  print_rec(tree, out, true);
  return out;
}

ExprTree parse_expr(std::string_view text) {
  Parser p{text};
  ExprTree t = p.parse(0);
  p.skip_ws();
  if (p.pos != text.size()) throw ParseError("trailing input after expression", p.pos);
  return t;
}

}  // namespace neon
