#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>

namespace coxq {

/// Deterministic random stream. Gaussian draws use Box-Muller without a
/// cached spare so the full state is the engine state, which makes
/// checkpointing exact.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : eng_(seed) {}

  double uniform() {
    // 53-bit mantissa draw in [0, 1)
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  Eigen::VectorXd normal_vec(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) { return eng_() % n; }

  void save(std::ostream& os) const { os << eng_; }
  void load(std::istream& is) { is >> eng_; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace coxq
