#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "nnland/minimizers.hpp"

namespace nnland {

enum class NormKind { Spectral, Frobenius };

/// Gradient-dominance constants for one certificate.
///
/// linear:    lambda = 1 / (2 l tau^{2(l-1)} eta_min(X)^2)
/// residual:  lambda = 1 / (2 l r tau~^{2(r-1)} tau^{2(l-1)} eta_min(X)^2)
/// nonlinear: lambda = 1 / (2 tau^2)
struct GDParams {
  Architecture arch = Architecture::Linear;
  Index units = 0;  // l
  Index depth = 1;  // r (residual only)
  double tau = 0.0;
  std::optional<double> tau_tilde;
  std::optional<double> tau_hat;
  double lambda = 0.0;
  double eta_min_x = 0.0;
  /// Per-block radius of the certified neighborhood: tau (linear),
  /// min{tau^, tau~} (residual) or the activation-space tau (nonlinear).
  double radius = 0.0;
};

/// Regularity constants; epsilon is filled in by epsilon_search.
///
/// alpha = gamma / (l zeta^{2(l-1)} |X|^2)                        linear
///       = gamma / (l r zeta~^{2(r-1)} zeta^{2(l-1)} |X|^2)       residual
///       = gamma / max{|X|^2 zeta^4, zeta^2}                       nonlinear
/// beta  = (1 - gamma) delta^2 / 2
struct RCParams {
  Architecture arch = Architecture::Linear;
  double zeta = 0.0;
  std::optional<double> zeta_tilde;
  double gamma = 0.5;
  double delta = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double epsilon = 0.0;
  double factor_eta_min = 0.0;  // smallest nonzero singular value of G, Q or H
  double x_norm = 0.0;
};

struct SampleRecord {
  Index index = 0;
  double scale = 0.0;      // largest block perturbation norm
  bool qualifies = true;   // RC direction filter; always true for GD
  double value = 0.0;      // GD ratio or RC slack
  bool violation = false;
};

struct ConditionReport {
  std::string condition;  // "gradient_dominance" or "regularity"
  std::variant<GDParams, RCParams> params;
  double radius = 0.0;
  bool in_theorem_regime = true;
  Index samples_tested = 0;
  Index samples_qualifying = 0;
  Index samples_nonqualifying = 0;
  double worst_ratio = 0.0;  // GD: max ratio
  double min_slack = 0.0;    // RC: min slack
  Index violations = 0;
  Index radius_shrinks = 0;  // nonlinear GD rejection sampler
  std::vector<SampleRecord> witnesses;  // first violations by sample index
  std::vector<SampleRecord> records;    // every tested sample
};

inline constexpr double kViolationSlack = 1e-8;
inline constexpr std::size_t kMaxWitnesses = 16;

GDParams gd_params_linear(const MinimizerCertificate& cert, const DataPair& data);
GDParams gd_params_residual(const MinimizerCertificate& cert, const DataPair& data, int search_budget = 200);
GDParams gd_params_nonlinear(const MinimizerCertificate& cert, const DataPair& data);
GDParams gd_params(const MinimizerCertificate& cert, const DataPair& data);

/// (a + t)^r - a^r: bound on |prod(A_q + E_q) - prod(A_q)| for r factors
/// with |A_q| <= a and |E_q| <= t.
double product_perturbation_bound(double a_max, double t, Index r);

/// Largest radius on a doubling lattice above tau^ for which `samples`
/// random residual perturbations all keep |W_k - W_k*| < tau.
double empirical_safe_radius(const MinimizerCertificate& cert, const GDParams& params, Index samples,
                             Rng& rng);

struct NeighborhoodSample {
  Net net;
  double scale = 0.0;  // largest block perturbation norm actually used
  Index rejections = 0;
  Index shrinks = 0;
};

/// Perturbs every block of the certificate by a random direction of
/// block-norm u * radius, u ~ U(0, 1). For a nonlinear certificate with
/// NormKind::Spectral the neighborhood is the activation-space set
/// |sigma(W_1 X) - sigma(W_1* X)| <= radius, enforced by rejection; after
/// 1000 consecutive rejections the W_1 proposal radius halves.
NeighborhoodSample sample_neighborhood(const MinimizerCertificate& cert, const DataPair& data,
                                       double radius, NormKind norm, Rng& rng);

/// ratio = (loss - loss*) / (lambda |grad|^2), 0/0 := 0. A ratio above
/// 1 + kViolationSlack is a violation. Sample i draws from rng.split(i).
ConditionReport check_gd(const MinimizerCertificate& cert, const DataPair& data, const GDParams& params,
                         Index n_samples, const Rng& rng, std::optional<double> radius = std::nullopt);

/// Constants for gamma in (0, 1); delta defaults to eta_min of the factor
/// matrix at the certificate.
RCParams rc_params(const MinimizerCertificate& cert, const DataPair& data, double gamma = 0.5,
                   std::optional<double> delta = std::nullopt);

/// |F v| >= delta |v| (relative tolerance 1e-10). Scale invariant.
bool direction_qualifies(const Matrix& factor, const Vector& displacement, double delta);

/// <grad, v> - alpha |grad|^2 - beta |v|^2 at net, v = vec(net - net*).
double rc_slack(const Net& net_star, const Net& net, const DataPair& data, const RCParams& params);

struct EpsilonLevel {
  double epsilon = 0.0;
  Index qualifying = 0;
  Index violations = 0;
  double min_slack = 0.0;
};

struct EpsilonSearchResult {
  RCParams params;  // epsilon set; 0 when no lattice level passed
  ConditionReport report;
  std::vector<EpsilonLevel> levels;
  std::string diagnostic;
};

/// Scans epsilon = eps_hi * 2^-j, j = 0..levels-1. A level passes when its
/// n_per_level qualifying samples satisfy the regularity inequality and no
/// level saw a violation at a smaller scale; the first passing level whose
/// parent level also passed is returned. The result is a sampled
/// certificate, not a proof.
EpsilonSearchResult epsilon_search(const MinimizerCertificate& cert, const DataPair& data,
                                   const RCParams& params, Index n_per_level, const Rng& rng,
                                   std::optional<double> eps_hi = std::nullopt, int levels = 30);

/// Re-certifies params.epsilon with n_samples qualifying samples.
ConditionReport check_rc(const MinimizerCertificate& cert, const DataPair& data, const RCParams& params,
                         Index n_samples, const Rng& rng);

/// Regularity sweep at an explicit radius (used by both of the above).
ConditionReport regularity_sweep(const MinimizerCertificate& cert, const DataPair& data,
                                 const RCParams& params, double epsilon, Index n_qualifying,
                                 const Rng& rng);

}  // namespace nnland
