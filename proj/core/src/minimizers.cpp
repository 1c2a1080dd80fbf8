#include "nnland/minimizers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nnland/errors.hpp"

namespace nnland {

std::vector<Matrix> Transforms::draw(Index count, Index d, std::uint64_t stream) const {
  std::vector<Matrix> out;
  if (count <= 0) return out;
  switch (kind_) {
    case Kind::Identity:
      out.assign(static_cast<size_t>(count), Matrix::Identity(d, d));
      break;
    case Kind::Random: {
      Rng rng = Rng(seed_).split(stream);
      for (Index i = 0; i < count; ++i) out.push_back(random_invertible(d, cond_max_, rng));
      break;
    }
    case Kind::Given: {
      const Index offset = static_cast<Index>(stream) * count;
      if (static_cast<Index>(mats_.size()) < offset + count) {
        throw PreconditionError("Transforms: not enough explicit transforms supplied");
      }
      for (Index i = 0; i < count; ++i) {
        const Matrix& c = mats_[static_cast<size_t>(offset + i)];
        if (c.rows() != d || c.cols() != d) throw DimensionError("Transforms: wrong transform shape");
        if (sigma_min(c) <= 1e-12 * std::max(1.0, spectral_norm(c))) {
          throw PreconditionError("Transforms: supplied transform is singular");
        }
        out.push_back(c);
      }
      break;
    }
  }
  return out;
}

double RankProfile::min_eta() const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto* list : {&blocks, &units}) {
    for (const auto& v : *list) best = std::min(best, v.value_or(0.0));
  }
  return std::isfinite(best) ? best : 0.0;
}

bool MinimizerCertificate::value_matches() const noexcept {
  return std::abs(achieved_loss - predicted_value) < 1e-8 * (1.0 + std::abs(predicted_value));
}

bool MinimizerCertificate::stationary() const noexcept { return grad_norm < 1e-8; }

double optimal_value(const DataPair& data) { return spectral_summary(data).optimal_value; }

namespace {

/// S_xy^T S_xx^{-1}, the least-squares end-to-end map.
Matrix regression_map(const DataPair& data) {
  const Matrix sxx = data.x() * data.x().transpose();
  const Matrix sxy = data.x() * data.y().transpose();
  Eigen::LLT<Matrix> llt(sxx);
  if (llt.info() != Eigen::Success) throw NumericalError("regression_map: S_xx is not positive definite");
  return llt.solve(sxy).transpose();
}

void finish(MinimizerCertificate& cert, const DataPair& data, double predicted) {
  cert.predicted_value = predicted;
  cert.achieved_loss = evaluate(cert.net, data).loss;
  cert.grad_norm = gradient(cert.net, data).total_norm;
  cert.rank_profile = rank_profile(cert.net);
}

void require_square_data(const DataPair& data, const char* what) {
  if (!data.square()) throw PreconditionError(std::string(what) + ": requires m = d");
}

/// Layers of the linear family for a given U, regression map and C_2..C_l.
std::vector<Matrix> linear_family(const Matrix& u, const Matrix& regression, Index depth,
                                  const std::vector<Matrix>& cs) {
  std::vector<Matrix> layers(static_cast<size_t>(depth));
  if (depth == 1) {
    layers[0] = regression;
    return layers;
  }
  // cs[i] holds C_{i+2}; layers[k] holds W_{k+1}.
  layers[static_cast<size_t>(depth - 1)] = u * cs.back();
  for (Index k = 1; k + 1 < depth; ++k) {
    layers[static_cast<size_t>(k)] =
        solve_checked(cs[static_cast<size_t>(k)], cs[static_cast<size_t>(k - 1)], "linear_minimizer");
  }
  layers[0] = solve_checked(cs[0], u.transpose() * regression, "linear_minimizer");
  return layers;
}

}  // namespace

MinimizerCertificate linear_minimizer(const DataPair& data, Index depth, const Transforms& transforms) {
  if (depth < 1) throw PreconditionError("linear_minimizer: depth must be >= 1");
  const SpectralSummary summary = spectral_summary(data);
  const Index d = data.d();
  std::vector<Matrix> cs = transforms.draw(depth - 1, d, 0);
  MinimizerCertificate cert{LinearNet{linear_family(summary.eig.vectors, regression_map(data), depth, cs)},
                            0.0, 0.0, 0.0, std::move(cs), {}};
  finish(cert, data, summary.min_loss());
  return cert;
}

MinimizerCertificate residual_minimizer(const DataPair& data, Index units, Index depth,
                                        const Transforms& outer, const Transforms& inner) {
  require_square_data(data, "residual_minimizer");
  if (units < 1 || depth < 1) throw PreconditionError("residual_minimizer: need l >= 1 and r >= 1");
  const MinimizerCertificate linear = linear_minimizer(data, units, outer);
  const auto& unit_targets = std::get<LinearNet>(linear.net).layers;
  const Index d = data.d();
  const Matrix id = Matrix::Identity(d, d);

  std::vector<Matrix> blocks;
  std::vector<Matrix> used = linear.transforms;
  for (Index k = 0; k < units; ++k) {
    const Matrix target = unit_targets[static_cast<size_t>(k)] - id;
    if (depth == 1) {
      blocks.push_back(target);
      continue;
    }
    if (sigma_min(target) <= kRankTolerance * std::max(1.0, spectral_norm(target))) {
      throw PreconditionError("residual_minimizer: full-rank factorization unavailable (W_" +
                              std::to_string(k + 1) + "* - I is singular, r > 1)");
    }
    Eigen::JacobiSVD<Matrix> svd(target, Eigen::ComputeFullU);
    Matrix u = svd.matrixU();
    normalize_column_signs(u);
    const std::vector<Matrix> cs = inner.draw(depth - 1, d, static_cast<std::uint64_t>(k));
    std::vector<Matrix> unit(static_cast<size_t>(depth));
    unit[static_cast<size_t>(depth - 1)] = u * cs.back();
    for (Index q = 1; q + 1 < depth; ++q) {
      unit[static_cast<size_t>(q)] =
          solve_checked(cs[static_cast<size_t>(q)], cs[static_cast<size_t>(q - 1)], "residual_minimizer");
    }
    unit[0] = solve_checked(cs[0], u.transpose() * target, "residual_minimizer");
    blocks.insert(blocks.end(), unit.begin(), unit.end());
    used.insert(used.end(), cs.begin(), cs.end());
  }
  MinimizerCertificate cert{ResidualNet(units, depth, std::move(blocks)), 0.0, 0.0, 0.0, std::move(used), {}};
  finish(cert, data, linear.predicted_value);
  return cert;
}

MinimizerCertificate nonlinear_minimizer(const DataPair& data, const Activation& activation,
                                         const Transforms& transforms) {
  require_square_data(data, "nonlinear_minimizer");
  const MinimizerCertificate linear = linear_minimizer(data, 2, transforms);
  const auto& layers = std::get<LinearNet>(linear.net).layers;
  const Matrix hidden_target = layers[0] * data.x();
  const Matrix pre = activation.apply_inverse(hidden_target);
  // W_1 X = pre  <=>  X^T W_1^T = pre^T
  const Matrix w1 = solve_checked(data.x().transpose(), pre.transpose(), "nonlinear_minimizer").transpose();
  const Matrix reached = activation.apply(w1 * data.x());
  if ((reached - hidden_target).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, max_abs(hidden_target))) {
    throw NumericalError("nonlinear_minimizer: sigma(W_1 X) does not reproduce the linear hidden layer");
  }
  MinimizerCertificate cert{NonlinearNet{w1, layers[1], activation}, 0.0, 0.0, 0.0, linear.transforms, {}};
  finish(cert, data, linear.predicted_value);
  return cert;
}

LinearNet apply_equivalence(const LinearNet& net, const std::vector<Matrix>& cs) {
  const Index l = net.depth();
  if (static_cast<Index>(cs.size()) != l - 1) {
    throw PreconditionError("apply_equivalence: need exactly l - 1 transforms");
  }
  const Index d = net.dim();
  for (const Matrix& c : cs) {
    if (c.rows() != d || c.cols() != d) throw DimensionError("apply_equivalence: wrong transform shape");
  }
  if (l == 1) return net;
  LinearNet out = net;
  // layers[k] = W_{k+1}; cs[i] = C_{i+2}.
  out.layers[static_cast<size_t>(l - 1)] = net.layers[static_cast<size_t>(l - 1)] * cs.back();
  for (Index k = 1; k + 1 < l; ++k) {
    out.layers[static_cast<size_t>(k)] = solve_checked(
        cs[static_cast<size_t>(k)], net.layers[static_cast<size_t>(k)] * cs[static_cast<size_t>(k - 1)],
        "apply_equivalence");
  }
  out.layers[0] = solve_checked(cs[0], net.layers[0], "apply_equivalence");
  return out;
}

RankProfile rank_profile(const Net& net) {
  RankProfile profile;
  for (const Matrix& block : parameter_blocks(net)) profile.blocks.push_back(try_eta_min(block));
  if (const auto* residual = std::get_if<ResidualNet>(&net)) {
    for (const Matrix& unit : residual->unit_maps()) profile.units.push_back(try_eta_min(unit));
  }
  return profile;
}

}  // namespace nnland
