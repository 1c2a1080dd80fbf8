#include "nnland/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "nnland/errors.hpp"

namespace nnland {

DataPair::DataPair(Matrix x, Matrix y) : x_(std::move(x)), y_(std::move(y)) {
  if (x_.rows() <= 0 || x_.cols() <= 0) throw DimensionError("DataPair: X is empty");
  if (x_.rows() != y_.rows() || x_.cols() != y_.cols()) {
    throw DimensionError("DataPair: X and Y must have equal shapes");
  }
  if (x_.cols() < x_.rows()) {
    throw PreconditionError("DataPair: need m >= d, got d=" + std::to_string(x_.rows()) +
                            " m=" + std::to_string(x_.cols()));
  }
  if (!x_.allFinite() || !y_.allFinite()) throw NumericalError("DataPair: non-finite entry");
}

double min_eigen_gap(const Vector& descending) {
  if (descending.size() == 0) return 0.0;
  if (descending.size() == 1) return std::abs(descending(0));
  double gap = std::numeric_limits<double>::infinity();
  for (Index i = 0; i + 1 < descending.size(); ++i) {
    gap = std::min(gap, descending(i) - descending(i + 1));
  }
  return gap;
}

namespace {

Matrix sigma_of(const DataPair& pair) {
  const Matrix sxx = pair.x() * pair.x().transpose();
  const Matrix sxy = pair.x() * pair.y().transpose();
  Eigen::LLT<Matrix> llt(sxx);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("spectral_summary: S_xx is not positive definite");
  }
  const Matrix solved = llt.solve(sxy);
  const Matrix sigma = sxy.transpose() * solved;
  return 0.5 * (sigma + sigma.transpose());
}

}  // namespace

AssumptionReport validate_assumptions(const DataPair& pair, double tol) {
  AssumptionReport report;
  report.tolerance = tol;
  const Matrix sxx = pair.x() * pair.x().transpose();
  const Matrix sxy = pair.x() * pair.y().transpose();
  report.sigma_xx_margin = sigma_min(sxx);
  report.sigma_xy_margin = sigma_min(sxy);
  report.sigma_xx_full_rank = report.sigma_xx_margin > tol;
  report.sigma_xy_full_rank = report.sigma_xy_margin > tol;
  if (report.sigma_xx_full_rank) {
    const Vector values = sym_eig_desc(sigma_of(pair)).values;
    report.eigen_gap = min_eigen_gap(values);
  }
  report.eigenvalues_distinct = report.sigma_xx_full_rank && report.eigen_gap > tol;
  return report;
}

SpectralSummary spectral_summary(const DataPair& pair) {
  SpectralSummary out;
  out.sigma = sigma_of(pair);
  out.eig = sym_eig_desc(out.sigma);
  out.sigma_yy_trace = (pair.y() * pair.y().transpose()).trace();
  out.optimal_value = out.sigma_yy_trace - out.eig.values.sum();
  return out;
}

DataPair gen_data(Index d, Index m, Rng& rng, double gap_relative, int retries, double tol) {
  if (d <= 0) throw PreconditionError("gen_data: d must be positive");
  if (m < d) throw PreconditionError("gen_data: need m >= d for a full-rank S_xx");
  for (int attempt = 0; attempt < std::max(retries, 1); ++attempt) {
    DataPair pair(rng.gaussian(d, m), rng.gaussian(d, m));
    const AssumptionReport report = validate_assumptions(pair, tol);
    if (!report.passed()) continue;
    const Vector values = spectral_summary(pair).eig.values;
    if (report.eigen_gap > gap_relative * std::abs(values(0))) return pair;
  }
  throw NumericalError("gen_data: retries exhausted before the eigenvalue gap cleared " +
                       std::to_string(gap_relative) + " * lambda_max");
}

DataPair fixture_f1() {
  Matrix x = Matrix::Identity(2, 2);
  Matrix y = Matrix::Zero(2, 2);
  y(0, 0) = 2.0;
  y(1, 1) = 1.0;
  return DataPair(std::move(x), std::move(y));
}

std::string format_fixture(const DataPair& pair) {
  std::ostringstream out;
  out.precision(17);
  out << pair.d() << ' ' << pair.m() << '\n';
  for (const Matrix* m : {&pair.x(), &pair.y()}) {
    for (Index i = 0; i < m->rows(); ++i) {
      for (Index j = 0; j < m->cols(); ++j) {
        if (j) out << ' ';
        out << (*m)(i, j);
      }
      out << '\n';
    }
  }
  return out.str();
}

DataPair parse_fixture(const std::string& text) {
  std::istringstream in(text);
  long long d = 0;
  long long m = 0;
  if (!(in >> d >> m)) throw ParseError("fixture: missing 'd m' header");
  if (d <= 0 || m <= 0 || d > kMaxDim || m > kMaxDim) {
    throw ParseError("fixture: dimensions out of range");
  }
  auto read_matrix = [&](const char* name) {
    Matrix out(d, m);
    for (Index i = 0; i < d; ++i) {
      for (Index j = 0; j < m; ++j) {
        if (!(in >> out(i, j))) {
          throw ParseError(std::string("fixture: truncated or malformed ") + name + " entries");
        }
      }
    }
    return out;
  };
  Matrix x = read_matrix("X");
  Matrix y = read_matrix("Y");
  std::string trailing;
  if (in >> trailing) throw ParseError("fixture: unexpected trailing content");
  return DataPair(std::move(x), std::move(y));
}

void save_fixture(const DataPair& pair, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open fixture for writing: " + path.string());
  out << format_fixture(pair);
  if (!out) throw Error("failed writing fixture: " + path.string());
}

DataPair load_fixture(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open fixture: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_fixture(buffer.str());
}

}  // namespace nnland
