#include <doctest.h>

#include <bit>
#include <cmath>

#include "neon/features.hpp"
#include "neon/taskgen.hpp"

using namespace neon;

TEST_CASE("float32_bits reference patterns") {
  auto zeros = float32_bits(0.0);
  for (int i = 0; i < 32; ++i) CHECK(zeros[i] == 0);

  auto one = float32_bits(1.0);
  CHECK(one[0] == 0);  // sign
  // exponent 01111111
  CHECK(one[1] == 0);
  for (int i = 2; i <= 8; ++i) CHECK(one[i] == 1);
  for (int i = 9; i < 32; ++i) CHECK(one[i] == 0);
}

TEST_CASE("float32_bits matches the native bit cast") {
  Rng rng(17);
  std::normal_distribution<double> normal(0.0, 100.0);
  for (int i = 0; i < 10000; ++i) {
    const double x = normal(rng);
    const std::uint32_t u = std::bit_cast<std::uint32_t>(static_cast<float>(x));
    auto bits = float32_bits(x);
    for (int b = 0; b < 32; ++b) CHECK(bits[b] == ((u >> (31 - b)) & 1u));
  }
  // -2.5 explicitly
  const std::uint32_t u = std::bit_cast<std::uint32_t>(-2.5f);
  auto bits = float32_bits(-2.5);
  for (int b = 0; b < 32; ++b) CHECK(bits[b] == ((u >> (31 - b)) & 1u));

  // NaN encodes the canonical quiet pattern
  auto nan_bits = float32_bits(std::numeric_limits<double>::quiet_NaN());
  std::uint32_t packed = 0;
  for (int b = 0; b < 32; ++b) packed |= static_cast<std::uint32_t>(nan_bits[b]) << (31 - b);
  CHECK(packed == 0x7fc00000u);
}

namespace {

std::shared_ptr<const SrTask> tiny_task() {
  Eigen::MatrixXd inputs(3, 2);
  inputs << 1.0, 2.0, 0.5, -1.0, 3.0, 0.25;
  Eigen::VectorXd targets(3);
  targets << 2.0, -0.5, 3.25;
  return std::make_shared<const SrTask>("tiny", 2, inputs, targets);
}

}  // namespace

TEST_CASE("node feature layout") {
  auto task = tiny_task();
  SemGraph g = SemGraph::from_tree(parse_expr("(mul x0 x1)"), task);
  GatGraph gg = build_gat_graph(g);
  REQUIRE(gg.num_nodes == 5);  // mul op, x0, x1, result value, application
  int ops = 0, vars = 0, vals = 0, apps = 0;
  for (int i = 0; i < gg.num_nodes; ++i) {
    switch (gg.kind[i]) {
      case GatNodeKind::Operation: ops++; break;
      case GatNodeKind::Variable: vars++; break;
      case GatNodeKind::Value: vals++; break;
      case GatNodeKind::Application: apps++; break;
    }
  }
  CHECK(ops == 1);
  CHECK(vars == 2);
  CHECK(apps == 1);
}

TEST_CASE("node feature content") {
  auto task = tiny_task();
  SemGraph g = SemGraph::from_tree(parse_expr("(mul x0 x1)"), task);
  GatGraph gg = build_gat_graph(g);

  for (int row = 0; row < gg.num_nodes; ++row) {
    for (int j = 0; j < 3; ++j) {
      Eigen::VectorXf f = node_features(g, gg, row, j);
      REQUIRE(f.size() == kFeatureDim);
      // exactly one type slot set
      int type_bits = 0;
      for (int k = 0; k < 4; ++k) type_bits += f[k] != 0;
      CHECK(type_bits == 1);
      for (int k = 0; k < kFeatureDim; ++k) CHECK((f[k] == 0.0f || f[k] == 1.0f));

      switch (gg.kind[row]) {
        case GatNodeKind::Operation: {
          CHECK(f[kTypeOffset + 2] == 1.0f);
          CHECK(f[kOpOffset + static_cast<int>(Op::Mul)] == 1.0f);
          CHECK(f.segment(kValueBitsOffset, 64).sum() == 0.0f);
          break;
        }
        case GatNodeKind::Application: {
          CHECK(f[kTypeOffset + 3] == 1.0f);
          CHECK(f.segment(kOpOffset, kFeatureDim - kOpOffset).sum() == 0.0f);
          break;
        }
        default: {
          const double v = g.values()[gg.value_id[row]].values[j];
          auto vb = float32_bits(v);
          auto db = float32_bits(v - task->targets[j]);
          for (int k = 0; k < 32; ++k) {
            CHECK(f[kValueBitsOffset + k] == static_cast<float>(vb[k]));
            CHECK(f[kDiffBitsOffset + k] == static_cast<float>(db[k]));
          }
        }
      }
    }
  }

  SUBCASE("a node holding exactly the target has an all-zero difference block") {
    // mul(x0,x1) equals the target on every row of this task
    int result_row = -1;
    for (int i = 0; i < gg.num_nodes; ++i)
      if (gg.kind[i] == GatNodeKind::Value) result_row = i;
    REQUIRE(result_row >= 0);
    for (int j = 0; j < 3; ++j) {
      Eigen::VectorXf f = node_features(g, gg, result_row, j);
      CHECK(f.segment(kDiffBitsOffset, 32).sum() == 0.0f);
    }
  }
}

TEST_CASE("feature determinism") {
  auto task = tiny_task();
  SemGraph g = SemGraph::from_tree(parse_expr("(add (mul x0 x1) x0)"), task);
  GatGraph gg = build_gat_graph(g);
  for (int row = 0; row < gg.num_nodes; ++row) {
    Eigen::VectorXf a = node_features(g, gg, row, 1);
    Eigen::VectorXf b = node_features(g, gg, row, 1);
    CHECK(a == b);
  }
}
