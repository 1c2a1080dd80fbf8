#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace nnland {

/// Seeded generator. Children obtained with split() depend only on the
/// parent seed and the stream id, never on how much the parent was used,
/// so sweeps can hand one child to each sample or worker.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  Rng split(std::uint64_t stream) const;

  std::uint64_t seed() const noexcept { return seed_; }

  double normal();
  /// Uniform on the open interval (0, 1).
  double uniform();
  Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols);

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace nnland
