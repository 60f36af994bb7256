#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "neon/features.hpp"
#include "neon/rng.hpp"
#include "neon/semgraph.hpp"

namespace neon {

inline constexpr int kStateDim = 256;
inline constexpr int kHeads = 4;
inline constexpr int kHeadDim = 64;
inline constexpr int kGatLayers = 3;
inline constexpr double kAttnLeakySlope = 0.2;

template <typename T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// ---------------------------------------------------------------------------
// Model.  Attention heads score edges with a leaky-rectified linear form over
// the concatenated projected states of the edge's endpoints (target first);
// weights are normalized by softmax over each node's in-neighborhood.  Head
// outputs concatenate back to the 256-wide state, followed by ELU.

template <typename T>
struct GatHead {
  MatX<T> weight;  // kHeadDim x kStateDim
  VecX<T> attn;    // 2 * kHeadDim: [target | source]
};

template <typename T>
struct GatModelT {
  MatX<T> in_w;  // kStateDim x kFeatureDim
  VecX<T> in_b;  // kStateDim
  std::array<std::array<GatHead<T>, kHeads>, kGatLayers> layers;
  VecX<T> out_w;  // kStateDim
  VecX<T> out_b;  // 1

  static GatModelT random_init(Rng& rng);
  template <typename U>
  GatModelT<U> cast() const;
  std::size_t param_count() const;
};

using GatModel = GatModelT<float>;

// Flat view over every tensor, in serialization order.
template <typename T>
struct ParamView {
  std::string name;
  T* data;
  std::vector<std::uint32_t> dims;
  std::size_t size;
};

template <typename T>
std::vector<ParamView<T>> param_views(GatModelT<T>& model);

// ---------------------------------------------------------------------------
// Forward / backward

template <typename T>
struct LayerTrace {
  MatX<T> h_in;  // N x kStateDim
  MatX<T> pre;   // N x kStateDim, pre-ELU
  std::array<MatX<T>, kHeads> z;                  // N x kHeadDim
  std::array<std::vector<T>, kHeads> edge_pre;    // batch * E
  std::array<std::vector<T>, kHeads> edge_alpha;  // batch * E, softmaxed
};

template <typename T>
struct ForwardTrace {
  std::array<LayerTrace<T>, kGatLayers> layers;
  MatX<T> h_out;   // N x kStateDim
  VecX<T> logits;  // N
};

// Scores for `batch` stacked instantiations of the graph; x has
// batch * num_nodes rows of features.  Scores are sigmoids of the output
// head, clamped into the open interval (0, 1).
template <typename T>
VecX<T> gat_forward(const GatModelT<T>& model, const GatGraph& g, const MatX<T>& x,
                    int batch, ForwardTrace<T>* trace = nullptr);

// Gradients share the model's structure.
template <typename T>
GatModelT<T> zero_like(const GatModelT<T>& m);

// Mean binary cross-entropy over the graph's front rows across the batch,
// with optional positive-class weighting; accumulates parameter gradients
// into `grads` when non-null.  Targets are per-front-node, shared by all
// batch entries.
template <typename T>
T gat_front_bce(const GatModelT<T>& model, const GatGraph& g, const MatX<T>& x,
                int batch, std::span<const std::uint8_t> targets, T pos_weight,
                GatModelT<T>* grads);

// ---------------------------------------------------------------------------
// Saliency

struct SaliencyMap {
  std::vector<int> app_ids;  // front application nodes, creation order
  Eigen::VectorXf scores;    // per-example scores averaged over all task rows
};

SaliencyMap saliency_map(const GatModel& model, const SemGraph& g, const GatGraph& gg);
inline SaliencyMap saliency_map(const GatModel& model, const SemGraph& g) {
  return saliency_map(model, g, build_gat_graph(g));
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

struct AdamState {
  AdamConfig cfg;
  std::int64_t step = 0;
  Eigen::VectorXf m;  // first moments, flattened over param_views order
  Eigen::VectorXf v;  // second moments
  void init(std::size_t n) {
    m = Eigen::VectorXf::Zero(n);
    v = Eigen::VectorXf::Zero(n);
    step = 0;
  }
};

void adam_step(GatModel& model, const GatModel& grads, AdamState& state);

// ---------------------------------------------------------------------------
// Serialization (NEONGAT1 container)

struct TensorInfo {
  std::string name;
  std::vector<std::uint32_t> dims;
};

void save_model(const GatModel& model, const std::filesystem::path& path);
GatModel load_model(const std::filesystem::path& path);
std::vector<TensorInfo> list_model_tensors(const std::filesystem::path& path);

}  // namespace neon
