#pragma once

#include <optional>
#include <vector>

#include "nnland/datagen.hpp"
#include "nnland/networks.hpp"

namespace nnland {

/// How the free invertible matrices of a minimizer family are chosen.
class Transforms {
 public:
  enum class Kind { Identity, Random, Given };

  /// All transforms equal to I (reproducible fixtures).
  static Transforms identity() { return Transforms(Kind::Identity, {}, 0); }
  /// Drawn with random_invertible(d, cond_max, rng_for_call).
  static Transforms random(std::uint64_t seed, double cond_max = 10.0) {
    Transforms t(Kind::Random, {}, seed);
    t.cond_max_ = cond_max;
    return t;
  }
  /// Explicit matrices, consumed in order.
  static Transforms given(std::vector<Matrix> mats) { return Transforms(Kind::Given, std::move(mats), 0); }

  Kind kind() const noexcept { return kind_; }
  double cond_max() const noexcept { return cond_max_; }

  /// Produces `count` d x d transforms for the given stream. Given
  /// transforms must supply exactly `count` invertible matrices.
  std::vector<Matrix> draw(Index count, Index d, std::uint64_t stream) const;

 private:
  Transforms(Kind kind, std::vector<Matrix> mats, std::uint64_t seed)
      : kind_(kind), mats_(std::move(mats)), seed_(seed) {}

  Kind kind_;
  std::vector<Matrix> mats_;
  std::uint64_t seed_;
  double cond_max_ = 10.0;
};

/// Per-block smallest nonzero singular values; nullopt marks a block with
/// no nonzero singular value.
struct RankProfile {
  std::vector<std::optional<double>> blocks;  // parameter blocks, flat-layout order
  std::vector<std::optional<double>> units;   // residual unit maps W_k (empty otherwise)

  /// min over every entry; 0 when some entry is flagged.
  double min_eta() const;
};

struct MinimizerCertificate {
  Net net;
  double predicted_value = 0.0;  // half of Tr(S_yy) - sum lambda_i
  double achieved_loss = 0.0;
  double grad_norm = 0.0;
  std::vector<Matrix> transforms;
  RankProfile rank_profile;

  Architecture architecture() const noexcept { return architecture_of(net); }
  bool value_matches() const noexcept;
  bool stationary() const noexcept;
};

/// Tr(S_yy) - sum of the d eigenvalues of Sigma.
double optimal_value(const DataPair& data);

/// W_l = U C_l, W_k = C_{k+1}^{-1} C_k, W_1 = C_2^{-1} U^T S_xy^T S_xx^{-1}.
/// Transforms C_2..C_l are drawn from `transforms` (stream 0).
MinimizerCertificate linear_minimizer(const DataPair& data, Index depth,
                                      const Transforms& transforms = Transforms::identity());

/// Full-rank residual minimizer. Outer transforms shape the unit maps W_k*
/// exactly as linear_minimizer; for r > 1 each unit factors W_k* - I as
/// A_{kr} = U_k C_{kr}, A_{kq} = C_{k,q+1}^{-1} C_{kq}, A_{k1} = C_{k2}^{-1} U_k^T (W_k* - I)
/// with U_k the left singular vectors of W_k* - I. Requires m = d.
/// Throws PreconditionError("full-rank factorization unavailable") when
/// r > 1 and some W_k* - I is singular.
MinimizerCertificate residual_minimizer(const DataPair& data, Index units, Index depth,
                                        const Transforms& outer = Transforms::identity(),
                                        const Transforms& inner = Transforms::identity());

/// W_2* = W~_2*, W_1* = sigma^{-1}(W~_1* X) X^{-1} from a two-layer linear
/// minimizer (W~_2*, W~_1*). Requires m = d and invertible X.
MinimizerCertificate nonlinear_minimizer(const DataPair& data, const Activation& activation,
                                         const Transforms& transforms = Transforms::identity());

/// (W_l C_l, C_l^{-1} W_{l-1} C_{l-1}, ..., C_2^{-1} W_1); cs[i] is C_{i+2}.
LinearNet apply_equivalence(const LinearNet& net, const std::vector<Matrix>& cs);

RankProfile rank_profile(const Net& net);

}  // namespace nnland
