#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "neon/errors.hpp"
#include "neon/rng.hpp"

namespace neon {

// ---------------------------------------------------------------------------
// Instruction set

enum class Op : std::uint8_t {
  Add, Sub, Mul, Div,            // binary
  Sqrt, Square, Cube, Sin, Cos, Log, Exp,  // unary
};

inline constexpr int kNumOps = 11;

struct OpInfo {
  const char* name;
  int arity;
  bool commutative;
};

const OpInfo& op_info(Op op);
std::optional<Op> op_from_name(std::string_view name);

// Total elementwise evaluation; non-finite results propagate (IEEE semantics,
// no protected operators).
double apply_op(Op op, double a, double b = 0.0);

inline constexpr double kPi = 3.14159265358979323846;

// Constants available to tree generation.
std::span<const double> generation_constants();

// ---------------------------------------------------------------------------
// Terminals

struct Terminal {
  enum class Kind : std::uint8_t { Variable, Constant };
  Kind kind;
  int index = -1;      // variable index, 0-based
  double value = 0.0;  // constant value

  static Terminal variable(int i) { return {Kind::Variable, i, 0.0}; }
  static Terminal constant(double v) { return {Kind::Constant, -1, v}; }
};

// Terminal set for a task of the given arity: x0..x{d-1} plus the constants.
std::vector<Terminal> terminal_set(int arity);

// ---------------------------------------------------------------------------
// Expression trees
//
// Immutable, structurally shared values. Child indices along a root-to-node
// walk identify a node unambiguously (pointer identity does not, since equal
// subtrees may share storage).

using NodePath = std::vector<std::uint8_t>;

class ExprTree {
 public:
  ExprTree() : ExprTree(variable(0)) {}

  static ExprTree variable(int index);
  static ExprTree constant(double value);
  static ExprTree apply(Op op, std::vector<ExprTree> children);

  bool is_terminal() const;
  bool is_variable() const;
  bool is_constant() const;
  Op op() const;
  int var_index() const;
  double const_value() const;
  const Terminal& terminal() const;

  int num_children() const;
  const ExprTree& child(int i) const;

  int height() const;  // leaves have height 0
  int size() const;    // node count
  int max_var_index() const;  // -1 when no variables occur

  // Subtree rooted at `path`; throws PathError when the path is invalid.
  const ExprTree& at(const NodePath& path) const;
  // New tree with the subtree at `path` replaced; inputs are untouched.
  ExprTree with_replaced(const NodePath& path, const ExprTree& replacement) const;

  bool operator==(const ExprTree& other) const;
  bool operator!=(const ExprTree& other) const { return !(*this == other); }

 private:
  struct Node;
  explicit ExprTree(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
  std::shared_ptr<const Node> node_;
};

// ---------------------------------------------------------------------------
// Operations on trees

// Vector of tree values over the input rows (n x d matrix); NaN/Inf preserved.
Eigen::VectorXd eval_tree(const ExprTree& tree, const Eigen::MatrixXd& inputs);

// `grow` generator: terminals may appear at any depth and are forced at
// depth == max_height. Leaves split 50/50 between variables and constants.
ExprTree random_tree_grow(Rng& rng, int max_height, int arity);
// `full` generator: operators down to exactly the requested height.
ExprTree random_tree_full(Rng& rng, int height, int arity);

// Preorder paths of all subtrees with height exactly h (empty when h > height).
std::vector<NodePath> subtrees_of_height(const ExprTree& tree, int h);

// Path of the idx-th node in preorder (0 = root).
NodePath nth_path(const ExprTree& tree, int idx);
NodePath uniform_node(const ExprTree& tree, Rng& rng);

// Subtree sampling biased toward tall subtrees: height h in [1, height(tree)]
// drawn with probability h / (1 + ... + height), then uniform among the
// subtrees of that height. A height-0 tree yields its root.
NodePath sample_subtree_height_biased(const ExprTree& tree, Rng& rng);

// Prefix s-expression, e.g. "(add x0 (mul 2 x1))".
std::string canonical_string(const ExprTree& tree);
// Like canonical_string, but add/mul operands are sorted so trivially
// reordered expressions compare equal. Used for subtree matching.
std::string normalized_string(const ExprTree& tree);
ExprTree parse_expr(std::string_view text);

}  // namespace neon
