#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nnland/landscape.hpp"

namespace nnland {

/// Least-squares fit of log residual against iteration.
struct RateFit {
  double ratio = 1.0;  // exp(slope)
  double r_squared = 0.0;
  Index points = 0;
  /// "ok", "constant" or "converged-to-precision" (fewer than 10 usable
  /// tail points).
  std::string status = "converged-to-precision";

  bool ok() const noexcept { return status == "ok" || status == "constant"; }
};

using NeighborhoodPredicate = std::function<bool(const Net&)>;

struct DescentOptions {
  double step = 0.0;
  Index iters = 1000;
  /// On a loss increase, restart the whole run at half the step.
  bool halving_guard = true;
  int max_halvings = 40;
  /// Loss above this multiple of the initial loss (or non-finite) stops the
  /// run with the divergence flag.
  double divergence_factor = 1e3;
  double stop_residual = 1e-14;
  double tail_fraction = 0.5;
  /// Optional certified-neighborhood test; the first iterate outside it sets
  /// exit_iter and the rate fit stops there.
  NeighborhoodPredicate in_neighborhood;
};

struct DescentTrace {
  std::vector<double> losses;
  std::vector<double> iterate_dists;  // |vec(net - net*)|
  double step = 0.0;                  // step of the reported run
  Index iters = 0;                    // iterations actually taken
  double optimal_value = 0.0;
  bool diverged = false;
  bool monotone = true;
  int halvings = 0;
  std::optional<Index> exit_iter;
  RateFit fit;
};

/// Fixed-step gradient descent: every block moves by -step times its
/// gradient block. Losses are recorded before every step.
DescentTrace run_gd(const Net& net0, const Net& net_star, const DataPair& data, double optimal_value,
                    const DescentOptions& options);

/// Fits the last tail_fraction of the positive residuals.
RateFit estimate_rate(const std::vector<double>& residuals, double tail_fraction = 0.5);
/// Residuals loss - optimal_value, cut at exit_iter when present.
RateFit estimate_rate(const DescentTrace& trace, double tail_fraction = 0.5);

/// 1 / |F(W*)|^2, the inverse curvature of the loss at the minimizer.
double default_step(const MinimizerCertificate& cert, const DataPair& data);

/// Membership in the neighborhood certified by `params` (spectral norms,
/// activation space for the nonlinear net).
NeighborhoodPredicate gd_neighborhood(const MinimizerCertificate& cert, const DataPair& data,
                                      const GDParams& params);

/// Start point at distance `fraction * params.radius` from the certificate:
/// every block moves by a random direction of spectral norm fraction*radius.
/// For the nonlinear net W_1 moves by fraction*radius/|X|, shrunk until the
/// activation-space distance is at most fraction*radius.
Net displaced_start(const MinimizerCertificate& cert, const DataPair& data, const GDParams& params,
                    double fraction, Rng& rng);

struct ParameterizationComparison {
  DescentTrace residual;
  DescentTrace plain;
  double lambda_f = 0.0;
  double lambda_h = 0.0;
};

/// Runs an r = 1 residual certificate and the plain net W_k = I + A_k* of
/// the same end-to-end map from the same block displacement.
ParameterizationComparison compare_residual_plain(const MinimizerCertificate& residual_cert,
                                                  const DataPair& data, double fraction,
                                                  const DescentOptions& options, Rng& rng);

}  // namespace nnland
