#include "nnland/landscape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nnland/errors.hpp"
#include "nnland/parallel.hpp"

namespace nnland {

namespace {

void require_arch(const MinimizerCertificate& cert, Architecture arch, const char* what) {
  if (cert.architecture() != arch) {
    throw PreconditionError(std::string(what) + ": certificate architecture is " +
                            to_string(cert.architecture()));
  }
}

void require_square(const DataPair& data, const char* what) {
  if (!data.square()) throw PreconditionError(std::string(what) + ": landscape checks require m = d");
}

double min_eta_of(const std::vector<Matrix>& blocks, const char* what) {
  double best = std::numeric_limits<double>::infinity();
  for (const Matrix& b : blocks) {
    const double s = sigma_min(b);
    if (s <= kRankTolerance * std::max(1.0, spectral_norm(b))) {
      throw PreconditionError(std::string(what) + ": minimizer has a rank-deficient block");
    }
    best = std::min(best, s);
  }
  return best;
}

double max_spectral(const std::vector<Matrix>& blocks) {
  double best = 0.0;
  for (const Matrix& b : blocks) best = std::max(best, spectral_norm(b));
  return best;
}

Matrix random_direction(Index d, NormKind norm, Rng& rng) {
  for (;;) {
    Matrix dir = rng.gaussian(d, d);
    const double n = norm == NormKind::Spectral ? spectral_norm(dir) : fro_norm(dir);
    if (n > 0.0) return dir / n;
  }
}

double ratio_of(double excess, double lambda, double grad_sq) {
  if (std::abs(excess) < 1e-14 && grad_sq < 1e-28) return 0.0;
  if (grad_sq == 0.0) return std::numeric_limits<double>::max();
  return excess / (lambda * grad_sq);
}

void keep_witness(ConditionReport& report, const SampleRecord& record) {
  if (record.violation && report.witnesses.size() < kMaxWitnesses) report.witnesses.push_back(record);
}

}  // namespace

// ------------------------------------------------------ gradient dominance

GDParams gd_params_linear(const MinimizerCertificate& cert, const DataPair& data) {
  require_arch(cert, Architecture::Linear, "gd_params_linear");
  require_square(data, "gd_params_linear");
  const auto& layers = std::get<LinearNet>(cert.net).layers;
  GDParams p;
  p.arch = Architecture::Linear;
  p.units = static_cast<Index>(layers.size());
  p.tau = 0.5 * min_eta_of(layers, "gd_params_linear");
  p.eta_min_x = eta_min(data.x());
  const double l = static_cast<double>(p.units);
  p.lambda = 1.0 / (2.0 * l * std::pow(p.tau, 2.0 * (l - 1.0)) * p.eta_min_x * p.eta_min_x);
  p.radius = p.tau;
  return p;
}

double product_perturbation_bound(double a_max, double t, Index r) {
  return std::pow(a_max + t, static_cast<double>(r)) - std::pow(a_max, static_cast<double>(r));
}

GDParams gd_params_residual(const MinimizerCertificate& cert, const DataPair& data, int search_budget) {
  require_arch(cert, Architecture::Residual, "gd_params_residual");
  require_square(data, "gd_params_residual");
  const auto& net = std::get<ResidualNet>(cert.net);
  GDParams p;
  p.arch = Architecture::Residual;
  p.units = net.units();
  p.depth = net.depth();
  p.tau = 0.5 * min_eta_of(net.unit_maps(), "gd_params_residual");
  if (p.depth > 1) p.tau_tilde = 0.5 * min_eta_of(net.blocks(), "gd_params_residual");
  p.eta_min_x = eta_min(data.x());

  if (p.depth == 1) {
    p.tau_hat = p.tau;
  } else {
    const double a_max = max_spectral(net.blocks());
    double lo = 0.0;
    double hi = p.tau;
    while (product_perturbation_bound(a_max, hi, p.depth) <= p.tau) hi *= 2.0;
    for (int i = 0; i < search_budget; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (product_perturbation_bound(a_max, mid, p.depth) <= p.tau) {
        lo = mid;
      } else {
        hi = mid;
      }
      if (hi - lo <= 1e-15 * hi) break;
    }
    if (!(lo > 1e-12)) {
      throw NumericalError("gd_params_residual: bisection found no positive tau_hat");
    }
    p.tau_hat = lo;
  }

  const double l = static_cast<double>(p.units);
  const double r = static_cast<double>(p.depth);
  const double tilde_term = p.tau_tilde ? std::pow(*p.tau_tilde, 2.0 * (r - 1.0)) : 1.0;
  p.lambda = 1.0 / (2.0 * l * r * tilde_term * std::pow(p.tau, 2.0 * (l - 1.0)) * p.eta_min_x * p.eta_min_x);
  p.radius = p.tau_tilde ? std::min(*p.tau_hat, *p.tau_tilde) : *p.tau_hat;
  return p;
}

GDParams gd_params_nonlinear(const MinimizerCertificate& cert, const DataPair& data) {
  require_arch(cert, Architecture::Nonlinear, "gd_params_nonlinear");
  require_square(data, "gd_params_nonlinear");
  const auto& net = std::get<NonlinearNet>(cert.net);
  GDParams p;
  p.arch = Architecture::Nonlinear;
  p.units = 2;
  const Matrix hidden = net.activation.apply(net.w1 * data.x());
  p.tau = 0.5 * min_eta_of({hidden}, "gd_params_nonlinear");
  p.eta_min_x = eta_min(data.x());
  p.lambda = 1.0 / (2.0 * p.tau * p.tau);
  p.radius = p.tau;
  return p;
}

GDParams gd_params(const MinimizerCertificate& cert, const DataPair& data) {
  switch (cert.architecture()) {
    case Architecture::Linear:
      return gd_params_linear(cert, data);
    case Architecture::Residual:
      return gd_params_residual(cert, data);
    case Architecture::Nonlinear:
      return gd_params_nonlinear(cert, data);
  }
  throw PreconditionError("gd_params: unknown architecture");
}

NeighborhoodSample sample_neighborhood(const MinimizerCertificate& cert, const DataPair& data,
                                       double radius, NormKind norm, Rng& rng) {
  if (!(radius > 0.0)) throw PreconditionError("sample_neighborhood: radius must be positive");
  const std::vector<Matrix> star = parameter_blocks(cert.net);
  const Index d = net_dim(cert.net);
  NeighborhoodSample out{cert.net, 0.0, 0, 0};

  const auto* nonlinear = std::get_if<NonlinearNet>(&cert.net);
  if (nonlinear != nullptr && norm == NormKind::Spectral) {
    const Matrix hidden_star = nonlinear->activation.apply(nonlinear->w1 * data.x());
    double proposal = radius / std::max(spectral_norm(data.x()), 1e-300);
    Index consecutive = 0;
    for (;;) {
      const Matrix e1 = rng.uniform() * proposal * random_direction(d, NormKind::Spectral, rng);
      const Matrix w1 = nonlinear->w1 + e1;
      const Matrix hidden = nonlinear->activation.apply(w1 * data.x());
      if (spectral_norm(hidden - hidden_star) <= radius) {
        const Matrix e2 = rng.uniform() * radius * random_direction(d, NormKind::Spectral, rng);
        out.net = NonlinearNet{w1, nonlinear->w2 + e2, nonlinear->activation};
        out.scale = std::max(spectral_norm(e1), spectral_norm(e2));
        return out;
      }
      ++out.rejections;
      if (++consecutive >= 1000) {
        proposal *= 0.5;
        ++out.shrinks;
        consecutive = 0;
      }
    }
  }

  std::vector<Matrix> blocks = star;
  for (Matrix& b : blocks) {
    const double size = rng.uniform() * radius;
    b += size * random_direction(d, norm, rng);
    out.scale = std::max(out.scale, size);
  }
  out.net = with_blocks(cert.net, blocks);
  return out;
}

ConditionReport check_gd(const MinimizerCertificate& cert, const DataPair& data, const GDParams& params,
                         Index n_samples, const Rng& rng, std::optional<double> radius) {
  require_square(data, "check_gd");
  if (params.arch != cert.architecture()) throw PreconditionError("check_gd: params do not match certificate");
  ConditionReport report;
  report.condition = "gradient_dominance";
  report.params = params;
  report.radius = radius.value_or(params.radius);
  report.in_theorem_regime = report.radius <= params.radius;

  struct Outcome {
    SampleRecord record;
    Index shrinks = 0;
  };
  std::vector<Outcome> outcomes(static_cast<size_t>(std::max<Index>(n_samples, 0)));
  parallel_for(outcomes.size(), [&](std::size_t i) {
    Rng local = rng.split(i);
    const NeighborhoodSample s = sample_neighborhood(cert, data, report.radius, NormKind::Spectral, local);
    const double excess = evaluate(s.net, data).loss - cert.achieved_loss;
    const double grad_sq = gradient(s.net, data).values.squaredNorm();
    Outcome& o = outcomes[i];
    o.record.index = static_cast<Index>(i);
    o.record.scale = s.scale;
    o.record.value = ratio_of(excess, params.lambda, grad_sq);
    o.record.violation = o.record.value > 1.0 + kViolationSlack;
    o.shrinks = s.shrinks;
  });

  report.records.reserve(outcomes.size());
  for (const Outcome& o : outcomes) {
    ++report.samples_tested;
    ++report.samples_qualifying;
    report.worst_ratio = std::max(report.worst_ratio, o.record.value);
    report.radius_shrinks += o.shrinks;
    if (o.record.violation) ++report.violations;
    keep_witness(report, o.record);
    report.records.push_back(o.record);
  }
  return report;
}

double empirical_safe_radius(const MinimizerCertificate& cert, const GDParams& params, Index samples,
                             Rng& rng) {
  const auto* net = std::get_if<ResidualNet>(&cert.net);
  if (net == nullptr || !params.tau_hat) {
    throw PreconditionError("empirical_safe_radius: needs residual GD parameters");
  }
  const std::vector<Matrix> units_star = net->unit_maps();
  const Index d = net->dim();
  double safe = 0.0;
  for (double radius = *params.tau_hat; radius <= 64.0 * *params.tau_hat; radius *= 2.0) {
    bool ok = true;
    for (Index s = 0; s < samples && ok; ++s) {
      std::vector<Matrix> blocks = net->blocks();
      for (Matrix& b : blocks) b += rng.uniform() * radius * random_direction(d, NormKind::Spectral, rng);
      const ResidualNet moved(net->units(), net->depth(), std::move(blocks));
      for (Index k = 0; k < net->units() && ok; ++k) {
        ok = spectral_norm(moved.unit_map(k) - units_star[static_cast<size_t>(k)]) < params.tau;
      }
    }
    if (!ok) break;
    safe = radius;
  }
  return safe;
}

// -------------------------------------------------------------- regularity

RCParams rc_params(const MinimizerCertificate& cert, const DataPair& data, double gamma,
                   std::optional<double> delta) {
  require_square(data, "rc_params");
  if (!(gamma > 0.0 && gamma < 1.0)) throw PreconditionError("rc_params: gamma must lie in (0, 1)");
  RCParams p;
  p.arch = cert.architecture();
  p.gamma = gamma;
  p.x_norm = spectral_norm(data.x());
  const double x_sq = p.x_norm * p.x_norm;

  switch (p.arch) {
    case Architecture::Linear: {
      const auto& layers = std::get<LinearNet>(cert.net).layers;
      const double l = static_cast<double>(layers.size());
      p.zeta = 2.0 * max_spectral(layers);
      p.alpha = gamma / (l * std::pow(p.zeta, 2.0 * (l - 1.0)) * x_sq);
      break;
    }
    case Architecture::Residual: {
      const auto& net = std::get<ResidualNet>(cert.net);
      const double l = static_cast<double>(net.units());
      const double r = static_cast<double>(net.depth());
      p.zeta = 2.0 * max_spectral(net.unit_maps());
      p.zeta_tilde = 2.0 * max_spectral(net.blocks());
      p.alpha = gamma / (l * r * std::pow(*p.zeta_tilde, 2.0 * (r - 1.0)) *
                         std::pow(p.zeta, 2.0 * (l - 1.0)) * x_sq);
      break;
    }
    case Architecture::Nonlinear: {
      const auto& net = std::get<NonlinearNet>(cert.net);
      const Matrix pre = net.w1 * data.x();
      p.zeta = 2.0 * std::max({spectral_norm(net.activation.apply(pre)), spectral_norm(net.w2),
                               max_abs(net.activation.apply_derivative(pre))});
      p.alpha = gamma / std::max(x_sq * std::pow(p.zeta, 4.0), p.zeta * p.zeta);
      break;
    }
  }

  p.factor_eta_min = eta_min(factor_matrix(cert.net, data));
  p.delta = delta.value_or(p.factor_eta_min);
  if (!(p.delta > 0.0)) throw PreconditionError("rc_params: delta must be positive");
  p.beta = (1.0 - gamma) * p.delta * p.delta / 2.0;
  return p;
}

bool direction_qualifies(const Matrix& factor, const Vector& displacement, double delta) {
  if (factor.cols() != displacement.size()) {
    throw DimensionError("direction_qualifies: displacement length does not match the factor");
  }
  const double norm = displacement.norm();
  if (!(norm > 0.0)) throw PreconditionError("direction_qualifies: zero displacement");
  return (factor * displacement).norm() >= delta * norm * (1.0 - 1e-10);
}

double rc_slack(const Net& net_star, const Net& net, const DataPair& data, const RCParams& params) {
  const Vector v = flatten(net) - flatten(net_star);
  const Vector g = gradient(net, data).values;
  return g.dot(v) - params.alpha * g.squaredNorm() - params.beta * v.squaredNorm();
}

namespace {

/// Orthonormal basis of the row space of F (right singular vectors with
/// nonzero singular value).
Matrix row_space_basis(const Matrix& factor) {
  Eigen::JacobiSVD<Matrix> svd(factor, Eigen::ComputeFullV);
  const Vector s = svd.singularValues();
  Index rank = 0;
  while (rank < s.size() && s(rank) > kRankTolerance * s(0)) ++rank;
  return svd.matrixV().leftCols(rank);
}

}  // namespace

ConditionReport regularity_sweep(const MinimizerCertificate& cert, const DataPair& data,
                                 const RCParams& params, double epsilon, Index n_qualifying,
                                 const Rng& rng) {
  require_square(data, "regularity_sweep");
  if (!(epsilon > 0.0)) throw PreconditionError("regularity_sweep: epsilon must be positive");
  ConditionReport report;
  report.condition = "regularity";
  RCParams echoed = params;
  echoed.epsilon = epsilon;
  report.params = echoed;
  report.radius = epsilon;
  report.min_slack = std::numeric_limits<double>::infinity();

  const Matrix factor = factor_matrix(cert.net, data);
  const Matrix basis = row_space_basis(factor);
  const Vector star = flatten(cert.net);
  const Index d = net_dim(cert.net);
  const Index blocks = block_count(cert.net);
  const Index n = star.size();

  const Index batch = std::max<Index>(64, n_qualifying);
  const Index max_draws = 50 * std::max<Index>(n_qualifying, 1);
  Index next = 0;
  while (report.samples_qualifying < n_qualifying && next < max_draws) {
    const Index count = std::min(batch, max_draws - next);
    std::vector<SampleRecord> results(static_cast<size_t>(count));
    parallel_for(results.size(), [&](std::size_t j) {
      const Index i = next + static_cast<Index>(j);
      Rng local = rng.split(static_cast<std::uint64_t>(i));
      Vector v = local.gaussian(n, 1);
      // Half the draws lie in the row space of F (always qualifying); the
      // rest are raw directions that exercise the filter.
      if (local.uniform() < 0.5) v = basis * (basis.transpose() * v);
      double largest = 0.0;
      for (Index b = 0; b < blocks; ++b) largest = std::max(largest, v.segment(b * d * d, d * d).norm());
      SampleRecord& rec = results[j];
      rec.index = i;
      if (!(largest > 0.0)) {
        rec.qualifies = false;
        return;
      }
      rec.scale = local.uniform() * epsilon;
      v *= rec.scale / largest;
      rec.qualifies = direction_qualifies(factor, v, params.delta);
      if (!rec.qualifies) return;
      const Net moved = with_parameters(cert.net, star + v);
      rec.value = rc_slack(cert.net, moved, data, params);
      rec.violation = rec.value < -kViolationSlack;
    });
    for (const SampleRecord& rec : results) {
      if (report.samples_qualifying >= n_qualifying) break;
      ++report.samples_tested;
      if (!rec.qualifies) {
        ++report.samples_nonqualifying;
        continue;
      }
      ++report.samples_qualifying;
      report.min_slack = std::min(report.min_slack, rec.value);
      if (rec.violation) ++report.violations;
      keep_witness(report, rec);
      report.records.push_back(rec);
    }
    next += count;
  }
  if (report.samples_qualifying == 0) report.min_slack = 0.0;
  return report;
}

EpsilonSearchResult epsilon_search(const MinimizerCertificate& cert, const DataPair& data,
                                   const RCParams& params, Index n_per_level, const Rng& rng,
                                   std::optional<double> eps_hi, int levels) {
  if (levels < 1) throw PreconditionError("epsilon_search: need at least one level");
  const double top = eps_hi.value_or(0.5 * params.zeta);
  if (!(top > 0.0)) throw PreconditionError("epsilon_search: eps_hi must be positive");
  EpsilonSearchResult out;
  out.params = params;
  out.params.epsilon = 0.0;
  // Smallest perturbation scale at which any level saw a violation; it rules
  // out every lattice level above it.
  double bad_scale = std::numeric_limits<double>::infinity();
  bool previous_passed = false;
  for (int j = 0; j < levels; ++j) {
    const double eps = top * std::ldexp(1.0, -j);
    ConditionReport level = regularity_sweep(cert, data, params, eps, n_per_level,
                                             rng.split(static_cast<std::uint64_t>(j)));
    for (const SampleRecord& s : level.records) {
      if (s.violation) bad_scale = std::min(bad_scale, s.scale);
    }
    out.levels.push_back({eps, level.samples_qualifying, level.violations, level.min_slack});
    const bool passed = level.violations == 0 && level.samples_qualifying >= n_per_level && eps <= bad_scale;
    // A level is reported once the level above it passed too, so the answer
    // sits one halving inside the largest clean level; the lattice bottom
    // has nothing below it and stands alone.
    if (passed && (previous_passed || j + 1 == levels)) {
      out.params.epsilon = eps;
      out.report = std::move(level);
      out.report.params = out.params;
      return out;
    }
    previous_passed = passed;
    out.report = std::move(level);
  }
  out.diagnostic = "no lattice level down to epsilon = " + std::to_string(top * std::ldexp(1.0, 1 - levels)) +
                   " passed without violations";
  out.report.params = out.params;
  return out;
}

ConditionReport check_rc(const MinimizerCertificate& cert, const DataPair& data, const RCParams& params,
                         Index n_samples, const Rng& rng) {
  if (!(params.epsilon > 0.0)) throw PreconditionError("check_rc: epsilon must be positive");
  return regularity_sweep(cert, data, params, params.epsilon, n_samples, rng);
}

}  // namespace nnland
