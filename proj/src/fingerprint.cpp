#include "neon/fingerprint.hpp"

#include <cmath>
#include <limits>

#include "neon/rng.hpp"

namespace neon {

namespace {

constexpr std::uint64_t kProbeSeed = 0x4e454f4e50524f42ULL;  // fixed, global
constexpr double kRelTol = 1e-9;

void mix(Digest& d, std::uint64_t x) {
  d.hi = (d.hi ^ x) * 0x100000001b3ULL;
  d.lo = (d.lo ^ mix_seed(x)) * 0xc6a4a7935bd1e995ULL;
}

}  // namespace

Eigen::MatrixXd probe_inputs(int arity) {
  Eigen::MatrixXd out(kProbeRows, arity);
  for (int i = 0; i < arity; ++i) {
    // per-variable stream so probes do not depend on the task arity
    Rng g = derive_rng(kProbeSeed, static_cast<std::uint64_t>(i));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int r = 0; r < kProbeRows; ++r) out(r, i) = normal(g);
  }
  return out;
}

std::pair<std::int32_t, std::int64_t> quantize_value(double v) {
  if (std::isnan(v)) return {INT32_MAX, 0};
  if (std::isinf(v)) return {INT32_MAX - 1, v > 0 ? 1 : -1};
  double a = std::fabs(v);
  std::int32_t scale = 0;
  if (a > 1.0) {
    int e = 0;
    double m = std::frexp(a, &e);  // a = m * 2^e, m in [0.5, 1)
    scale = (m == 0.5) ? e - 1 : e;
  }
  double quantum = std::ldexp(kRelTol, scale);
  return {scale, std::llround(v / quantum)};
}

Digest value_fingerprint(std::span<const double> task_values,
                         std::span<const double> probe_values) {
  Digest d{0xcbf29ce484222325ULL, 0x84222325cbf29ce4ULL};
  for (double v : task_values) {
    auto [scale, k] = quantize_value(v);
    mix(d, static_cast<std::uint64_t>(static_cast<std::uint32_t>(scale)));
    mix(d, static_cast<std::uint64_t>(k));
  }
  mix(d, 0x5eedULL);
  for (double v : probe_values) {
    auto [scale, k] = quantize_value(v);
    mix(d, static_cast<std::uint64_t>(static_cast<std::uint32_t>(scale)));
    mix(d, static_cast<std::uint64_t>(k));
  }
  return d;
}

}  // namespace neon
