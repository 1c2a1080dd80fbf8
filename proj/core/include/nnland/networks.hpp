#pragma once

#include <variant>
#include <vector>

#include "nnland/datagen.hpp"
#include "nnland/numkit.hpp"

namespace nnland {

enum class Architecture { Linear, Residual, Nonlinear };

const char* to_string(Architecture arch) noexcept;

/// Parametric ReLU, sigma(x) = max(x, a x) with 0 < a < 1.
///
/// sigma is strictly increasing with range R, so it has a global inverse.
/// The kink at zero is assigned the left derivative: sigma'(0) = a.
class Activation {
 public:
  explicit Activation(double slope);

  double slope() const noexcept { return slope_; }

  double operator()(double x) const noexcept { return x >= 0.0 ? x : slope_ * x; }
  double inverse(double y) const noexcept { return y >= 0.0 ? y : y / slope_; }
  double derivative(double x) const noexcept { return x > 0.0 ? 1.0 : slope_; }

  Matrix apply(const Matrix& m) const;
  Matrix apply_inverse(const Matrix& m) const;
  Matrix apply_derivative(const Matrix& m) const;

 private:
  double slope_;
};

/// Plain deep linear network; layers[0] is W_1 (applied first).
struct LinearNet {
  std::vector<Matrix> layers;

  Index depth() const noexcept { return static_cast<Index>(layers.size()); }
  Index dim() const noexcept { return layers.empty() ? 0 : layers.front().rows(); }
  /// W_l ... W_1
  Matrix end_to_end() const;
};

/// Linear residual network: l units, each I + A_{kr} ... A_{k1}.
///
/// Blocks are stored unit-major; within a unit, q = 0 is A_{k1}, the factor
/// applied first. Unit maps are always recomputed from the blocks.
class ResidualNet {
 public:
  ResidualNet(Index units, Index depth, std::vector<Matrix> blocks);

  Index units() const noexcept { return units_; }
  Index depth() const noexcept { return depth_; }
  Index dim() const noexcept { return blocks_.front().rows(); }

  const Matrix& block(Index k, Index q) const { return blocks_[static_cast<size_t>(k * depth_ + q)]; }
  Matrix& block(Index k, Index q) { return blocks_[static_cast<size_t>(k * depth_ + q)]; }
  const std::vector<Matrix>& blocks() const noexcept { return blocks_; }

  /// A_{k,hi-1} ... A_{k,lo}; identity when the range is empty.
  Matrix block_product(Index k, Index lo, Index hi) const;
  /// W_k = I + A_{kr} ... A_{k1}
  Matrix unit_map(Index k) const;
  std::vector<Matrix> unit_maps() const;
  Matrix end_to_end() const;

 private:
  Index units_;
  Index depth_;
  std::vector<Matrix> blocks_;
};

/// One-hidden-layer network W_2 sigma(W_1 X).
struct NonlinearNet {
  Matrix w1;
  Matrix w2;
  Activation activation;
};

using Net = std::variant<LinearNet, ResidualNet, NonlinearNet>;

struct Evaluation {
  double loss = 0.0;
  Matrix error;
};

/// Gradient in the flat parameter layout: column-major vec blocks
/// concatenated in layer order (unit-major for residual nets).
struct GradientBlocks {
  Vector values;
  Index block_count = 0;
  Index block_size = 0;
  double total_norm = 0.0;

  Vector block(Index i) const { return values.segment(i * block_size, block_size); }
};

/// Loss values below this are treated as zero-loss global minimizers.
inline constexpr double kStationarityTolerance = 1e-8;
/// Preactivations closer than this to zero are treated as sitting on the kink.
inline constexpr double kKinkTolerance = 1e-8;

Evaluation linear_eval(const LinearNet& net, const DataPair& data);
GradientBlocks linear_grad(const LinearNet& net, const DataPair& data);
/// G_k = (W_{k-1} ... W_1 X)^T kron (W_l ... W_{k+1}).
Matrix build_G_block(const LinearNet& net, const DataPair& data, Index k);
/// [G_1, ..., G_l], dm x l d^2.
Matrix build_G(const LinearNet& net, const DataPair& data);
/// G^T G. Only valid at zero-loss minimizers with m = d.
Matrix linear_hessian_at_min(const LinearNet& net_star, const DataPair& data);

Evaluation residual_eval(const ResidualNet& net, const DataPair& data);
GradientBlocks residual_grad(const ResidualNet& net, const DataPair& data);
Matrix build_Q_block(const ResidualNet& net, const DataPair& data, Index k, Index q);
/// [Q_11, Q_12, ..., Q_lr], dm x l r d^2.
Matrix build_Q(const ResidualNet& net, const DataPair& data);
Matrix residual_hessian_at_min(const ResidualNet& net_star, const DataPair& data);

Evaluation nonlinear_eval(const NonlinearNet& net, const DataPair& data);
GradientBlocks nonlinear_grad(const NonlinearNet& net, const DataPair& data);
/// H = [(I kron W_2) diag(sigma'(vec(W_1 X))) (X^T kron I), sigma(W_1 X)^T kron I].
Matrix build_H(const NonlinearNet& net, const DataPair& data);
/// H^T H. Requires a zero-loss minimizer with preactivations off the kink.
Matrix nonlinear_hessian_at_min(const NonlinearNet& net_star, const DataPair& data);
/// min |(W_1 X)_ij|
double kink_margin(const NonlinearNet& net, const DataPair& data);

// Architecture-generic views used by the sampling and descent code.

Architecture architecture_of(const Net& net) noexcept;
Index parameter_count(const Net& net);
Index block_count(const Net& net);
Index net_dim(const Net& net);
Evaluation evaluate(const Net& net, const DataPair& data);
GradientBlocks gradient(const Net& net, const DataPair& data);
/// G, Q or H for the matching architecture.
Matrix factor_matrix(const Net& net, const DataPair& data);
Matrix hessian_at_min(const Net& net, const DataPair& data);
/// Parameter blocks in flat-layout order.
std::vector<Matrix> parameter_blocks(const Net& net);
Vector flatten(const Net& net);
/// A net shaped like `shape` holding the given flat parameters.
Net with_parameters(const Net& shape, const Vector& flat);
/// Same shape, blocks replaced in flat-layout order.
Net with_blocks(const Net& shape, const std::vector<Matrix>& blocks);

}  // namespace nnland
