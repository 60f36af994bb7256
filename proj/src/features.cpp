#include "neon/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace neon {

std::array<std::uint8_t, 32> float32_bits(double x) {
  float f = static_cast<float>(x);
  std::uint32_t u = std::isnan(f) ? 0x7fc00000u : std::bit_cast<std::uint32_t>(f);
  std::array<std::uint8_t, 32> out;
  for (int i = 0; i < 32; ++i) out[i] = (u >> (31 - i)) & 1u;
  return out;
}

GatGraph build_gat_graph(const SemGraph& g) {
  GatGraph gg;
  auto ops = g.ops_used();
  const int n_ops = static_cast<int>(ops.size());
  const int n_val = static_cast<int>(g.values().size());
  const int n_app = static_cast<int>(g.apps().size());
  gg.num_nodes = n_ops + n_val + n_app;

  int op_row[kNumOps];
  std::fill(std::begin(op_row), std::end(op_row), -1);
  for (int i = 0; i < n_ops; ++i) op_row[static_cast<int>(ops[i])] = i;

  gg.kind.resize(gg.num_nodes);
  gg.op_slot.assign(gg.num_nodes, -1);
  gg.value_id.assign(gg.num_nodes, -1);
  gg.app_id.assign(gg.num_nodes, -1);
  for (int i = 0; i < n_ops; ++i) {
    gg.kind[i] = GatNodeKind::Operation;
    gg.op_slot[i] = static_cast<int>(ops[i]);
  }
  for (int i = 0; i < n_val; ++i) {
    int row = n_ops + i;
    gg.kind[row] = g.values()[i].kind == ValueNode::Kind::Variable
                       ? GatNodeKind::Variable
                       : GatNodeKind::Value;
    gg.value_id[row] = i;
  }
  for (int i = 0; i < n_app; ++i) {
    int row = n_ops + n_val + i;
    gg.kind[row] = GatNodeKind::Application;
    gg.app_id[row] = i;
    if (g.apps()[i].is_expansion) gg.front_rows.push_back(row);
  }

  // arcs: op -> app, arg value -> app, app -> result value;
  // message passing sees arcs, reversals, and self-loops.
  std::vector<std::pair<int, int>> in_edges;  // (dst, src)
  auto arc = [&](int src, int dst) {
    in_edges.emplace_back(dst, src);
    in_edges.emplace_back(src, dst);
  };
  for (int i = 0; i < gg.num_nodes; ++i) in_edges.emplace_back(i, i);
  for (int i = 0; i < n_app; ++i) {
    const AppNode& a = g.apps()[i];
    int app_row = n_ops + n_val + i;
    arc(op_row[static_cast<int>(a.op)], app_row);
    for (int k = 0; k < a.num_args; ++k) arc(n_ops + a.args[k], app_row);
    arc(app_row, n_ops + a.result);
  }
  std::sort(in_edges.begin(), in_edges.end());
  in_edges.erase(std::unique(in_edges.begin(), in_edges.end()), in_edges.end());

  gg.row_ptr.assign(gg.num_nodes + 1, 0);
  gg.col_idx.reserve(in_edges.size());
  for (const auto& [dst, src] : in_edges) {
    gg.row_ptr[dst + 1]++;
    gg.col_idx.push_back(src);
  }
  for (int i = 0; i < gg.num_nodes; ++i) gg.row_ptr[i + 1] += gg.row_ptr[i];
  return gg;
}

template <typename T>
void fill_feature_block(const SemGraph& g, const GatGraph& gg, int first_example,
                        int batch, Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic,
                                                 Eigen::RowMajor>& out) {
  const int m = gg.num_nodes;
  out.setZero(static_cast<Eigen::Index>(m) * batch, kFeatureDim);
  for (int b = 0; b < batch; ++b) {
    const int j = first_example + b;
    const double target = g.task().targets[j];
    for (int i = 0; i < m; ++i) {
      T* row = out.data() + (static_cast<Eigen::Index>(b) * m + i) * kFeatureDim;
      row[kTypeOffset + static_cast<int>(gg.kind[i])] = T(1);
      if (gg.kind[i] == GatNodeKind::Operation) {
        row[kOpOffset + gg.op_slot[i]] = T(1);
      } else if (gg.kind[i] != GatNodeKind::Application) {
        const double v = g.values()[gg.value_id[i]].values[j];
        auto vb = float32_bits(v);
        auto db = float32_bits(v - target);
        for (int k = 0; k < 32; ++k) {
          row[kValueBitsOffset + k] = T(vb[k]);
          row[kDiffBitsOffset + k] = T(db[k]);
        }
      }
    }
  }
}

template void fill_feature_block<float>(
    const SemGraph&, const GatGraph&, int, int,
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>&);
template void fill_feature_block<double>(
    const SemGraph&, const GatGraph&, int, int,
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>&);

Eigen::VectorXf node_features(const SemGraph& g, const GatGraph& gg, int row, int example) {
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> block;
  fill_feature_block<float>(g, gg, example, 1, block);
  return block.row(row);
}

}  // namespace neon
