#pragma once

#include <functional>
#include <optional>

#include <Eigen/Dense>

#include "nnland/rng.hpp"

namespace nnland {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Largest row or column count any kernel operation will produce.
inline constexpr Index kMaxDim = 256;

/// Singular values below kRankTolerance * sigma_max count as zero.
inline constexpr double kRankTolerance = 1e-10;

/// Eigen-decomposition of a symmetric matrix, values sorted descending.
struct EigenPairs {
  Vector values;
  Matrix vectors;  // columns are unit eigenvectors in matching order
};

/// Throws DimensionError if a (rows x cols) result would exceed kMaxDim.
void check_size(Index rows, Index cols, const char* what);

/// Kronecker product: block (i, j) of the result is a(i, j) * b.
Matrix kron(const Matrix& a, const Matrix& b);

/// Column-stacking vec operator.
Vector vec_cols(const Matrix& a);
Matrix unvec(const Vector& v, Index rows, Index cols);

Matrix hadamard(const Matrix& a, const Matrix& b);

Vector singular_values(const Matrix& a);
double spectral_norm(const Matrix& a);
double fro_norm(const Matrix& a);
/// Largest absolute entry.
double max_abs(const Matrix& a);

/// Smallest nonzero singular value; nullopt if every singular value is
/// below the rank tolerance (including the all-zero matrix).
std::optional<double> try_eta_min(const Matrix& a);
/// Smallest nonzero singular value. Throws NumericalError when there is none.
double eta_min(const Matrix& a);
/// Smallest singular value, zeros included. Use this for full-rank tests.
double sigma_min(const Matrix& a);
double condition_number(const Matrix& a);

/// Symmetric eigendecomposition, values descending. The input is
/// symmetrized first; asymmetry above 1e-10 (relative to max(1, |s|)) is an
/// error. Each eigenvector is sign-normalized so its first nonzero entry is
/// positive.
EigenPairs sym_eig_desc(const Matrix& s);

/// Flips column signs so the first entry above 1e-12 in magnitude is positive.
void normalize_column_signs(Matrix& columns);

/// Random d x d matrix U diag(s) V^T with U, V Haar-orthogonal and the
/// singular spectrum s drawn in [1, cond_max] (s_1 = 1, s_d = cond_max when
/// d > 1). cond_max == 1 yields an orthogonal matrix.
Matrix random_invertible(Index d, double cond_max, Rng& rng);

/// Haar-distributed orthogonal matrix.
Matrix random_orthogonal(Index d, Rng& rng);

/// Solves a * x = b via partial-pivot LU after checking invertibility.
Matrix solve_checked(const Matrix& a, const Matrix& b, const char* what);
Matrix inverse_checked(const Matrix& a, const char* what);

using ScalarField = std::function<double(const Vector&)>;

/// Default finite-difference steps. Both are scaled by (1 + |point|_inf).
inline constexpr double kFdGradientStep = 1e-5;
inline constexpr double kFdHessianStep = 1e-4;

/// Central-difference gradient, O(h^2).
Vector fd_gradient(const ScalarField& f, const Vector& point, double h = kFdGradientStep);

/// Central-difference Hessian, O(h^2), symmetrized.
Matrix fd_hessian(const ScalarField& f, const Vector& point, double h = kFdHessianStep);

/// |a - b| / max(|a|, |b|, floor) in the Frobenius norm.
double relative_error(const Matrix& a, const Matrix& b, double floor = 1e-12);

bool all_finite(const Matrix& a);

}  // namespace nnland
