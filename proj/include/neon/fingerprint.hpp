#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>

namespace neon {

// Number of fixed probe rows appended to the task rows when fingerprinting
// value vectors.
inline constexpr int kProbeRows = 16;

// Deterministic probe inputs for variables x0..x{arity-1}; independent of the
// task and of each other, drawn once from a fixed-seed generator.
Eigen::MatrixXd probe_inputs(int arity);

// 128-bit digest of a value vector under tolerance quantization.  Values are
// quantized on a relative grid (quantum ~ 1e-9 * max(1, |v|), scale snapped to
// a power of two so near-equal values land on the same grid); NaN and +/-Inf
// map to distinguished sentinels.  Equal digests are treated as semantic
// equality of the underlying expressions.
struct Digest {
  std::uint64_t hi = 0;
  std::uint64_t lo = 0;
  bool operator==(const Digest&) const = default;
};

struct DigestHash {
  std::size_t operator()(const Digest& d) const {
    return static_cast<std::size_t>(d.hi ^ (d.lo * 0x9e3779b97f4a7c15ULL));
  }
};

// Quantized form of one value: (scale exponent, grid index); exposed so tests
// can probe tolerance behavior directly.
std::pair<std::int32_t, std::int64_t> quantize_value(double v);

Digest value_fingerprint(std::span<const double> task_values,
                         std::span<const double> probe_values);

}  // namespace neon
