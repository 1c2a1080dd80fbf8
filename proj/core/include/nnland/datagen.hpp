#pragma once

#include <filesystem>
#include <string>

#include "nnland/numkit.hpp"

namespace nnland {

/// Input/output pair (X, Y), both d x m with m >= d.
class DataPair {
 public:
  /// Checks shapes and finiteness only; the spectral assumptions are
  /// checked separately by validate_assumptions().
  DataPair(Matrix x, Matrix y);

  const Matrix& x() const noexcept { return x_; }
  const Matrix& y() const noexcept { return y_; }
  Index d() const noexcept { return x_.rows(); }
  Index m() const noexcept { return x_.cols(); }
  bool square() const noexcept { return d() == m(); }

 private:
  Matrix x_;
  Matrix y_;
};

/// Measured margins of the standing data assumptions.
struct AssumptionReport {
  double sigma_xx_margin = 0.0;  // smallest singular value of X X^T
  double sigma_xy_margin = 0.0;  // smallest singular value of X Y^T
  double eigen_gap = 0.0;        // min gap between consecutive eigenvalues of Sigma
  double tolerance = 0.0;
  bool sigma_xx_full_rank = false;
  bool sigma_xy_full_rank = false;
  bool eigenvalues_distinct = false;

  bool passed() const noexcept {
    return sigma_xx_full_rank && sigma_xy_full_rank && eigenvalues_distinct;
  }
};

/// Sigma = S_xy^T S_xx^{-1} S_xy and its eigensystem.
struct SpectralSummary {
  Matrix sigma;
  EigenPairs eig;
  double sigma_yy_trace = 0.0;
  /// Tr(S_yy) minus the sum of the top d eigenvalues of Sigma: the residual
  /// sum of squares of the best linear map. The half-scaled losses used
  /// throughout attain half of this value.
  double optimal_value = 0.0;

  double min_loss() const noexcept { return 0.5 * optimal_value; }
};

inline constexpr double kDefaultValidationTolerance = 1e-8;
inline constexpr double kDefaultGapRelative = 1e-3;

/// Gaussian (X, Y) resampled until Sigma's smallest eigenvalue gap exceeds
/// gap_relative * lambda_max and validation at `tol` passes.
DataPair gen_data(Index d, Index m, Rng& rng, double gap_relative = kDefaultGapRelative,
                  int retries = 50, double tol = kDefaultValidationTolerance);

AssumptionReport validate_assumptions(const DataPair& pair,
                                      double tol = kDefaultValidationTolerance);

/// Smallest gap between consecutive eigenvalues of a descending sequence.
/// A single value has no neighbours; its gap is reported as |value|.
double min_eigen_gap(const Vector& descending);

/// Requires a pair whose S_xx is invertible; Sigma is formed with a
/// Cholesky solve against S_xx.
SpectralSummary spectral_summary(const DataPair& pair);

/// X = I_2, Y = diag(2, 1).
DataPair fixture_f1();

/// Plain-text fixture: "d m", then the d rows of X, then the d rows of Y,
/// 17 significant digits.
std::string format_fixture(const DataPair& pair);
DataPair parse_fixture(const std::string& text);
void save_fixture(const DataPair& pair, const std::filesystem::path& path);
DataPair load_fixture(const std::filesystem::path& path);

}  // namespace nnland
