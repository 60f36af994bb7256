#include "neon/semgraph.hpp"

#include <algorithm>
#include <cassert>
#include <ostream>

namespace neon {

SemGraph::SemGraph(std::shared_ptr<const SrTask> task) : task_(std::move(task)) {
  const auto n = task_->n();
  Eigen::MatrixXd probes = probe_inputs(task_->arity);
  ext_inputs_.resize(n + kProbeRows, task_->arity);
  ext_inputs_.topRows(n) = task_->inputs;
  ext_inputs_.bottomRows(kProbeRows) = probes;
}

SemGraph SemGraph::from_tree(const ExprTree& s, std::shared_ptr<const SrTask> task) {
  SemGraph g(std::move(task));
  g.add_subtree(s);
  return g;
}

Digest SemGraph::digest_of(const Eigen::VectorXd& vals) const {
  const auto n = n_task();
  return value_fingerprint({vals.data(), static_cast<std::size_t>(n)},
                           {vals.data() + n, static_cast<std::size_t>(kProbeRows)});
}

int SemGraph::value_node_for(Eigen::VectorXd vals, ValueNode::Kind kind, int var_index,
                             ExprTree min_tree, bool terminal_origin) {
  Digest d = digest_of(vals);
  auto it = by_digest_.find(d);
  if (it != by_digest_.end()) {
    ValueNode& v = values_[it->second];
    v.terminal_origin = v.terminal_origin || terminal_origin;
    if (min_tree.size() < v.min_size) {
      v.min_tree = min_tree;
      v.min_size = min_tree.size();
    }
    return it->second;
  }
  ValueNode v;
  v.id = static_cast<int>(values_.size());
  v.kind = kind;
  v.var_index = var_index;
  v.values = std::move(vals);
  v.digest = d;
  v.terminal_origin = terminal_origin;
  v.min_size = min_tree.size();
  v.min_tree = std::move(min_tree);
  values_.push_back(std::move(v));
  by_digest_.emplace(d, values_.back().id);
  return values_.back().id;
}

int SemGraph::terminal_node(const Terminal& t) {
  if (t.kind == Terminal::Kind::Variable) {
    if (t.index >= task_->arity)
      throw EvalError("variable x" + std::to_string(t.index) +
                          " out of range for arity " + std::to_string(task_->arity),
                      t.index);
    return value_node_for(ext_inputs_.col(t.index), ValueNode::Kind::Variable, t.index,
                          ExprTree::variable(t.index), true);
  }
  return value_node_for(Eigen::VectorXd::Constant(n_rows(), t.value),
                        ValueNode::Kind::Value, -1, ExprTree::constant(t.value), true);
}

SemGraph::AppKey SemGraph::make_key(Op op, int a, int b) {
  if (op_info(op).commutative && b < a) std::swap(a, b);
  // 4 bits op | 28 bits per arg; budget keeps ids far below 2^28
  std::uint32_t hi = (static_cast<std::uint32_t>(op) << 28) | static_cast<std::uint32_t>(a);
  std::uint32_t lo = b < 0 ? 0xffffffffu : static_cast<std::uint32_t>(b);
  return AppKey{{hi, lo}};
}

Eigen::VectorXd SemGraph::apply_vec(Op op, int a, int b) const {
  const Eigen::VectorXd& va = values_[a].values;
  const auto rows = n_rows();
  Eigen::VectorXd out(rows);
  if (op_info(op).arity == 1) {
    for (Eigen::Index j = 0; j < rows; ++j) out[j] = apply_op(op, va[j]);
  } else {
    const Eigen::VectorXd& vb = values_[b].values;
    for (Eigen::Index j = 0; j < rows; ++j) out[j] = apply_op(op, va[j], vb[j]);
  }
  return out;
}

int SemGraph::app_node(Op op, int a, int b, bool is_expansion) {
  AppKey key = make_key(op, a, b);
  auto it = by_app_.find(key);
  if (it != by_app_.end()) return it->second;

  Eigen::VectorXd vals = apply_vec(op, a, b);
  int arity = op_info(op).arity;
  std::vector<ExprTree> kids;
  kids.push_back(values_[a].min_tree);
  if (arity == 2) kids.push_back(values_[b].min_tree);
  ExprTree tree = ExprTree::apply(op, std::move(kids));

  AppNode node;
  node.id = static_cast<int>(apps_.size());
  node.op = op;
  node.args = {a, b};
  node.num_args = arity;
  node.is_expansion = is_expansion;
  node.result = value_node_for(std::move(vals), ValueNode::Kind::Value, -1,
                               std::move(tree), false);
  values_[node.result].derivations.push_back(node.id);
  apps_.push_back(node);
  by_app_.emplace(key, node.id);
  return node.id;
}

int SemGraph::add_subtree(const ExprTree& s) {
  int id = build(s);
  roots_.push_back(id);
  return id;
}

int SemGraph::build(const ExprTree& s) {
  if (s.is_terminal()) return terminal_node(s.terminal());
  int a = build(s.child(0));
  int b = s.num_children() == 2 ? build(s.child(1)) : -1;
  return apps_[app_node(s.op(), a, b, false)].result;
}

std::vector<int> SemGraph::expand(std::span<const Terminal> terminals, int node_budget) {
  for (auto& a : apps_) a.is_expansion = false;
  front_.clear();

  const int preexisting = static_cast<int>(values_.size());
  for (const Terminal& t : terminals) terminal_node(t);
  const int total = static_cast<int>(values_.size());

  auto qualifies = [&](int a, int b) { return a < preexisting || (b >= 0 && b < preexisting); };

  std::vector<int> added;
  auto create = [&](Op op, int a, int b) {
    if (by_app_.contains(make_key(op, a, b))) return;
    if (static_cast<int>(added.size()) >= node_budget)
      throw BudgetError("expansion exceeds node budget of " + std::to_string(node_budget) +
                            " application nodes",
                        node_budget);
    int id = app_node(op, a, b, true);
    added.push_back(id);
  };

  for (int oi = 0; oi < kNumOps; ++oi) {
    Op op = static_cast<Op>(oi);
    const auto& info = op_info(op);
    if (info.arity == 1) {
      for (int a = 0; a < preexisting; ++a) create(op, a, -1);
    } else if (info.commutative) {
      for (int a = 0; a < total; ++a)
        for (int b = a; b < total; ++b)
          if (qualifies(a, b)) create(op, a, b);
    } else {
      for (int a = 0; a < total; ++a)
        for (int b = 0; b < total; ++b)
          if (qualifies(a, b)) create(op, a, b);
    }
  }
  front_ = added;
  return added;
}

ExprTree SemGraph::candidate_tree(int app_id) const {
  const AppNode& a = apps_.at(app_id);
  std::vector<ExprTree> kids;
  kids.push_back(values_[a.args[0]].min_tree);
  if (a.num_args == 2) kids.push_back(values_[a.args[1]].min_tree);
  return ExprTree::apply(a.op, std::move(kids));
}

std::vector<Op> SemGraph::ops_used() const {
  bool used[kNumOps] = {};
  for (const auto& a : apps_) used[static_cast<int>(a.op)] = true;
  std::vector<Op> out;
  for (int i = 0; i < kNumOps; ++i)
    if (used[i]) out.push_back(static_cast<Op>(i));
  return out;
}

void SemGraph::dump(std::ostream& os) const {
  char buf[32];
  for (const auto& v : values_) {
    os << "v" << v.id << ' ' << (v.kind == ValueNode::Kind::Variable ? "var" : "val");
    if (v.kind == ValueNode::Kind::Variable) os << "(x" << v.var_index << ')';
    os << " [";
    for (Eigen::Index j = 0; j < std::min<Eigen::Index>(4, v.values.size()); ++j) {
      std::snprintf(buf, sizeof buf, "%.6g", v.values[j]);
      os << (j ? " " : "") << buf;
    }
    std::snprintf(buf, sizeof buf, "%08llx",
                  static_cast<unsigned long long>(v.digest.hi >> 32));
    os << "] #" << buf << '\n';
  }
  for (const auto& a : apps_) {
    os << "a" << a.id << ' ' << op_info(a.op).name << '(';
    for (int i = 0; i < a.num_args; ++i) os << (i ? " " : "") << 'v' << a.args[i];
    os << ") -> v" << a.result << (a.is_expansion ? " *" : "") << '\n';
  }
}

}  // namespace neon
