#include "nnland/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "nnland/errors.hpp"

namespace nnland {

void check_size(Index rows, Index cols, const char* what) {
  if (rows > kMaxDim || cols > kMaxDim) {
    throw DimensionError(std::string(what) + ": result " + std::to_string(rows) + "x" +
                         std::to_string(cols) + " exceeds the per-side cap of " +
                         std::to_string(kMaxDim));
  }
}

Matrix kron(const Matrix& a, const Matrix& b) {
  const Index rows = a.rows() * b.rows();
  const Index cols = a.cols() * b.cols();
  check_size(rows, cols, "kron");
  Matrix out(rows, cols);
  for (Index j = 0; j < a.cols(); ++j) {
    for (Index i = 0; i < a.rows(); ++i) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

Vector vec_cols(const Matrix& a) {
  // Eigen storage is column-major, so the flat view is the column stack.
  return Eigen::Map<const Vector>(a.data(), a.size());
}

Matrix unvec(const Vector& v, Index rows, Index cols) {
  if (rows <= 0 || cols <= 0 || v.size() != rows * cols) {
    throw DimensionError("unvec: vector of length " + std::to_string(v.size()) +
                         " cannot be reshaped to " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("hadamard: operand shapes differ");
  }
  return a.cwiseProduct(b);
}

Vector singular_values(const Matrix& a) {
  if (a.size() == 0) return Vector();
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues();
}

double spectral_norm(const Matrix& a) {
  const Vector s = singular_values(a);
  return s.size() == 0 ? 0.0 : s(0);
}

double fro_norm(const Matrix& a) { return a.norm(); }

double max_abs(const Matrix& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

std::optional<double> try_eta_min(const Matrix& a) {
  const Vector s = singular_values(a);
  if (s.size() == 0 || s(0) == 0.0) return std::nullopt;
  const double cutoff = kRankTolerance * s(0);
  std::optional<double> best;
  for (Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff) best = s(i);
  }
  return best;
}

double eta_min(const Matrix& a) {
  const auto value = try_eta_min(a);
  if (!value) throw NumericalError("eta_min: matrix has no nonzero singular value");
  return *value;
}

double sigma_min(const Matrix& a) {
  const Vector s = singular_values(a);
  if (s.size() == 0) return 0.0;
  // Non-square inputs have min(rows, cols) singular values; for a tall or
  // wide matrix the missing ones are not zeros of the operator.
  return s(s.size() - 1);
}

double condition_number(const Matrix& a) {
  const Vector s = singular_values(a);
  if (s.size() == 0 || s(s.size() - 1) == 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / s(s.size() - 1);
}

void normalize_column_signs(Matrix& columns) {
  for (Index j = 0; j < columns.cols(); ++j) {
    for (Index i = 0; i < columns.rows(); ++i) {
      if (std::abs(columns(i, j)) > 1e-12) {
        if (columns(i, j) < 0) columns.col(j) *= -1.0;
        break;
      }
    }
  }
}

EigenPairs sym_eig_desc(const Matrix& s) {
  if (s.rows() != s.cols()) throw DimensionError("sym_eig_desc: matrix is not square");
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw PreconditionError("sym_eig_desc: matrix is not symmetric within 1e-10");
  }
  const Matrix sym = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) throw NumericalError("sym_eig_desc: solver failed");
  const Index n = sym.rows();
  EigenPairs out{Vector(n), Matrix(n, n)};
  // Eigen returns ascending order.
  for (Index i = 0; i < n; ++i) {
    out.values(i) = solver.eigenvalues()(n - 1 - i);
    out.vectors.col(i) = solver.eigenvectors().col(n - 1 - i);
  }
  normalize_column_signs(out.vectors);
  return out;
}

Matrix random_orthogonal(Index d, Rng& rng) {
  const Matrix g = rng.gaussian(d, d);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(d, d);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index i = 0; i < d; ++i) {
    if (r(i, i) < 0) q.col(i) *= -1.0;
  }
  return q;
}

Matrix random_invertible(Index d, double cond_max, Rng& rng) {
  if (d <= 0) throw DimensionError("random_invertible: d must be positive");
  if (!(cond_max >= 1.0)) throw PreconditionError("random_invertible: cond_max must be >= 1");
  const Matrix u = random_orthogonal(d, rng);
  const Matrix v = random_orthogonal(d, rng);
  Vector s(d);
  for (Index i = 0; i < d; ++i) s(i) = 1.0 + (cond_max - 1.0) * rng.uniform();
  if (d > 1) {
    s(0) = 1.0;
    s(d - 1) = cond_max;
  }
  return u * s.asDiagonal() * v.transpose();
}

Matrix solve_checked(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != a.cols() || a.rows() != b.rows()) {
    throw DimensionError(std::string(what) + ": incompatible solve shapes");
  }
  const double smin = sigma_min(a);
  const double smax = spectral_norm(a);
  if (!(smax > 0.0) || smin <= 1e-12 * smax) {
    throw PreconditionError(std::string(what) + ": matrix is singular");
  }
  Eigen::PartialPivLU<Matrix> lu(a);
  return lu.solve(b);
}

Matrix inverse_checked(const Matrix& a, const char* what) {
  return solve_checked(a, Matrix::Identity(a.rows(), a.cols()), what);
}

namespace {

double step_for(const Vector& point, double h) {
  if (!(h > 0.0)) throw PreconditionError("finite differences: step must be positive");
  const double inf_norm = point.size() == 0 ? 0.0 : point.cwiseAbs().maxCoeff();
  return h * (1.0 + inf_norm);
}

double eval_finite(const ScalarField& f, const Vector& x) {
  const double value = f(x);
  if (!std::isfinite(value)) throw NumericalError("finite differences: non-finite evaluation");
  return value;
}

}  // namespace

Vector fd_gradient(const ScalarField& f, const Vector& point, double h) {
  const double step = step_for(point, h);
  Vector grad(point.size());
  Vector x = point;
  for (Index i = 0; i < point.size(); ++i) {
    x(i) = point(i) + step;
    const double plus = eval_finite(f, x);
    x(i) = point(i) - step;
    const double minus = eval_finite(f, x);
    x(i) = point(i);
    grad(i) = (plus - minus) / (2.0 * step);
  }
  return grad;
}

Matrix fd_hessian(const ScalarField& f, const Vector& point, double h) {
  const double step = step_for(point, h);
  const Index n = point.size();
  Matrix hess(n, n);
  Vector x = point;
  const double center = eval_finite(f, point);
  for (Index i = 0; i < n; ++i) {
    x(i) = point(i) + step;
    const double plus = eval_finite(f, x);
    x(i) = point(i) - step;
    const double minus = eval_finite(f, x);
    x(i) = point(i);
    hess(i, i) = (plus - 2.0 * center + minus) / (step * step);
  }
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      auto at = [&](double si, double sj) {
        x(i) = point(i) + si * step;
        x(j) = point(j) + sj * step;
        const double value = eval_finite(f, x);
        x(i) = point(i);
        x(j) = point(j);
        return value;
      };
      const double value = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * step * step);
      hess(i, j) = value;
      hess(j, i) = value;
    }
  }
  return 0.5 * (hess + hess.transpose());
}

double relative_error(const Matrix& a, const Matrix& b, double floor) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("relative_error: operand shapes differ");
  }
  const double denom = std::max({a.norm(), b.norm(), floor});
  return (a - b).norm() / denom;
}

bool all_finite(const Matrix& a) { return a.allFinite(); }

}  // namespace nnland
