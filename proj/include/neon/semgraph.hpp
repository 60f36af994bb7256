#pragma once

#include <Eigen/Core>
#include <array>
#include <iosfwd>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "neon/expr.hpp"
#include "neon/fingerprint.hpp"
#include "neon/task.hpp"

namespace neon {

// Graph of operation, application, and value nodes built from subtrees and
// grown by one-level exhaustive expansion.  Value vectors carry the task rows
// followed by the fixed probe rows; fingerprints are taken over both, so two
// value nodes never share a digest (the graph stays minimal).

struct ValueNode {
  enum class Kind : std::uint8_t { Variable, Value };
  int id = -1;
  Kind kind = Kind::Value;
  int var_index = -1;          // for Kind::Variable
  Eigen::VectorXd values;      // task rows + probe rows
  Digest digest;
  std::vector<int> derivations;  // producing application ids (creation order)
  bool terminal_origin = false;  // also introduced directly as a terminal
  ExprTree min_tree;             // smallest known tree producing this value
  int min_size = 0;
};

struct AppNode {
  int id = -1;
  Op op{};
  std::array<int, 2> args{-1, -1};  // value node ids, [0..arity)
  int num_args = 0;
  int result = -1;  // value node id
  bool is_expansion = false;
};

class SemGraph {
 public:
  explicit SemGraph(std::shared_ptr<const SrTask> task);

  // Parses a tree bottom-up into value/application nodes (deduplicated) and
  // returns the id of the value node holding the tree's semantics.
  int add_subtree(const ExprTree& s);

  static SemGraph from_tree(const ExprTree& s, std::shared_ptr<const SrTask> task);

  // One-level exhaustive expansion: applies every operator to every argument
  // tuple drawn from the current value nodes plus the given terminals, where
  // at least one argument predates this call's terminal insertion.  Ordered
  // tuples for non-commutative operators, unordered for add/mul.  Creating
  // more than `node_budget` application nodes raises BudgetError.  Returns the
  // ids of the new application nodes (the front), which are the only nodes
  // flagged is_expansion afterwards.
  std::vector<int> expand(std::span<const Terminal> terminals, int node_budget = 10000);

  // Smallest tree computing the given application (operator over the
  // arguments' min_trees, as currently known).
  ExprTree candidate_tree(int app_id) const;

  const SrTask& task() const { return *task_; }
  std::shared_ptr<const SrTask> task_ptr() const { return task_; }
  Eigen::Index n_task() const { return task_->n(); }
  Eigen::Index n_rows() const { return ext_inputs_.rows(); }

  const std::vector<ValueNode>& values() const { return values_; }
  const std::vector<AppNode>& apps() const { return apps_; }
  const std::vector<int>& front() const { return front_; }
  const std::vector<int>& roots() const { return roots_; }
  int root_value() const { return roots_.empty() ? -1 : roots_.front(); }
  std::vector<Op> ops_used() const;

  void dump(std::ostream& os) const;

 private:
  int build(const ExprTree& s);
  int value_node_for(Eigen::VectorXd vals, ValueNode::Kind kind, int var_index,
                     ExprTree min_tree, bool terminal_origin);
  int terminal_node(const Terminal& t);
  int app_node(Op op, int a, int b, bool is_expansion);
  Eigen::VectorXd apply_vec(Op op, int a, int b) const;
  Digest digest_of(const Eigen::VectorXd& vals) const;

  struct AppKey {
    std::uint32_t packed[2];
    bool operator==(const AppKey&) const = default;
  };
  struct AppKeyHash {
    std::size_t operator()(const AppKey& k) const {
      std::uint64_t x = (std::uint64_t(k.packed[0]) << 32) | k.packed[1];
      return static_cast<std::size_t>(mix_seed(x));
    }
  };
  static AppKey make_key(Op op, int a, int b);

  std::shared_ptr<const SrTask> task_;
  Eigen::MatrixXd ext_inputs_;  // task inputs with probe rows appended
  std::vector<ValueNode> values_;
  std::vector<AppNode> apps_;
  std::vector<int> roots_;
  std::vector<int> front_;
  std::unordered_map<Digest, int, DigestHash> by_digest_;
  std::unordered_map<AppKey, int, AppKeyHash> by_app_;
};

}  // namespace neon
