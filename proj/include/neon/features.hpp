#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <vector>

#include "neon/semgraph.hpp"

namespace neon {

// Node feature layout, 79 dims total:
//   [0..4)   node type one-hot {variable, value, operation, application}
//   [4..15)  operator one-hot (operation nodes only)
//   [15..47) value bits, IEEE-754 single precision, sign/exponent/significand
//   [47..79) signed difference (value - target) bits, same encoding
inline constexpr int kFeatureDim = 79;
inline constexpr int kTypeOffset = 0;
inline constexpr int kOpOffset = 4;
inline constexpr int kValueBitsOffset = 15;
inline constexpr int kDiffBitsOffset = 47;

enum class GatNodeKind : std::uint8_t { Variable = 0, Value = 1, Operation = 2, Application = 3 };

// Bits of x rounded to single precision: sign, 8 exponent bits (MSB first),
// 23 significand bits (MSB first).  NaN encodes the canonical quiet pattern.
std::array<std::uint8_t, 32> float32_bits(double x);

// Node ordering and message-passing structure the attention network runs on:
// operation nodes first, then value nodes, then application nodes.  In-edges
// are the graph arcs plus their reversals plus self-loops, deduplicated.
struct GatGraph {
  int num_nodes = 0;
  std::vector<int> row_ptr;    // size num_nodes + 1
  std::vector<int> col_idx;    // in-neighbor rows
  std::vector<GatNodeKind> kind;
  std::vector<int> op_slot;    // operator index for operation nodes, else -1
  std::vector<int> value_id;   // ValueNode id for variable/value rows, else -1
  std::vector<int> app_id;     // AppNode id for application rows, else -1
  std::vector<int> front_rows; // rows of is_expansion application nodes

  int num_edges() const { return static_cast<int>(col_idx.size()); }
};

GatGraph build_gat_graph(const SemGraph& g);

// Feature vector of one node instantiated for training example j.
Eigen::VectorXf node_features(const SemGraph& g, const GatGraph& gg, int row, int example);

// Feature rows for a contiguous batch of examples, stacked block by block:
// row (b * num_nodes + i) holds node i instantiated for example
// (first_example + b).
template <typename T>
void fill_feature_block(const SemGraph& g, const GatGraph& gg, int first_example,
                        int batch, Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic,
                                                 Eigen::RowMajor>& out);

}  // namespace neon
