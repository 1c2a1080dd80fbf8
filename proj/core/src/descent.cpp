#include "nnland/descent.hpp"

#include <algorithm>
#include <cmath>

#include "nnland/errors.hpp"

namespace nnland {

namespace {

struct Attempt {
  DescentTrace trace;
  bool increased = false;
};

bool increased(double prev, double next) { return next > prev * (1.0 + 1e-12) + 1e-18; }

Attempt attempt(const Net& net0, const Vector& star, const DataPair& data, double optimal_value, double step,
                const DescentOptions& options) {
  Attempt out;
  DescentTrace& t = out.trace;
  t.step = step;
  t.optimal_value = optimal_value;
  Vector params = flatten(net0);
  Net net = net0;
  double initial = 0.0;
  for (Index it = 0;; ++it) {
    const double loss = evaluate(net, data).loss;
    t.losses.push_back(loss);
    t.iterate_dists.push_back((params - star).norm());
    if (it == 0) initial = loss;
    if (!t.exit_iter && options.in_neighborhood && !options.in_neighborhood(net)) t.exit_iter = it;
    if (it > 0 && (std::isnan(loss) || increased(t.losses[static_cast<size_t>(it - 1)], loss))) {
      t.monotone = false;
      out.increased = true;
    }
    if (!std::isfinite(loss) || loss > options.divergence_factor * std::max(initial, 1e-300)) {
      t.diverged = true;
      break;
    }
    if (out.increased && options.halving_guard) break;
    if (it >= options.iters || loss - optimal_value < options.stop_residual) break;
    params -= step * gradient(net, data).values;
    net = with_parameters(net, params);
    t.iters = it + 1;
  }
  return out;
}

}  // namespace

DescentTrace run_gd(const Net& net0, const Net& net_star, const DataPair& data, double optimal_value,
                    const DescentOptions& options) {
  if (!(options.step > 0.0)) throw PreconditionError("run_gd: step must be positive");
  if (options.iters < 0) throw PreconditionError("run_gd: iters must be nonnegative");
  if (architecture_of(net0) != architecture_of(net_star) || parameter_count(net0) != parameter_count(net_star)) {
    throw DimensionError("run_gd: start and reference nets differ in shape");
  }
  const Vector star = flatten(net_star);
  double step = options.step;
  int halvings = 0;
  Attempt run = attempt(net0, star, data, optimal_value, step, options);
  while (options.halving_guard && (run.increased || run.trace.diverged) && halvings < options.max_halvings) {
    step *= 0.5;
    ++halvings;
    run = attempt(net0, star, data, optimal_value, step, options);
  }
  run.trace.halvings = halvings;
  run.trace.fit = estimate_rate(run.trace, options.tail_fraction);
  return run.trace;
}

RateFit estimate_rate(const std::vector<double>& residuals, double tail_fraction) {
  if (!(tail_fraction > 0.0 && tail_fraction <= 1.0)) {
    throw PreconditionError("estimate_rate: tail fraction must lie in (0, 1]");
  }
  std::size_t usable = 0;
  while (usable < residuals.size() && residuals[usable] > 0.0 && std::isfinite(residuals[usable])) ++usable;
  const auto tail = static_cast<std::size_t>(std::ceil(tail_fraction * static_cast<double>(usable)));
  RateFit fit;
  fit.points = static_cast<Index>(tail);
  if (tail < 10) return fit;

  const std::size_t first = usable - tail;
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = first; i < usable; ++i) {
    mx += static_cast<double>(i);
    my += std::log(residuals[i]);
  }
  mx /= static_cast<double>(tail);
  my /= static_cast<double>(tail);
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = first; i < usable; ++i) {
    const double dx = static_cast<double>(i) - mx;
    const double dy = std::log(residuals[i]) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  const double slope = sxy / sxx;
  fit.ratio = std::exp(slope);
  if (syy <= 1e-24 * std::max(1.0, my * my) * static_cast<double>(tail)) {
    fit.ratio = 1.0;
    fit.r_squared = 1.0;
    fit.status = "constant";
    return fit;
  }
  fit.r_squared = sxy * sxy / (sxx * syy);
  fit.status = "ok";
  return fit;
}

RateFit estimate_rate(const DescentTrace& trace, double tail_fraction) {
  std::size_t end = trace.losses.size();
  if (trace.exit_iter) end = std::min(end, static_cast<std::size_t>(*trace.exit_iter));
  std::vector<double> residuals;
  residuals.reserve(end);
  for (std::size_t i = 0; i < end; ++i) residuals.push_back(trace.losses[i] - trace.optimal_value);
  return estimate_rate(residuals, tail_fraction);
}

double default_step(const MinimizerCertificate& cert, const DataPair& data) {
  const double curvature = spectral_norm(factor_matrix(cert.net, data));
  if (!(curvature > 0.0)) throw NumericalError("default_step: factor matrix vanishes");
  return 1.0 / (curvature * curvature);
}

NeighborhoodPredicate gd_neighborhood(const MinimizerCertificate& cert, const DataPair& data,
                                      const GDParams& params) {
  if (const auto* nl = std::get_if<NonlinearNet>(&cert.net)) {
    const Matrix x = data.x();
    const Matrix hidden_star = nl->activation.apply(nl->w1 * x);
    const double tau = params.radius;
    return [x, hidden_star, tau](const Net& net) {
      const auto& n = std::get<NonlinearNet>(net);
      return spectral_norm(n.activation.apply(n.w1 * x) - hidden_star) <= tau;
    };
  }
  const std::vector<Matrix> star = parameter_blocks(cert.net);
  const double radius = params.radius;
  return [star, radius](const Net& net) {
    const std::vector<Matrix> blocks = parameter_blocks(net);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      if (spectral_norm(blocks[i] - star[i]) >= radius) return false;
    }
    return true;
  };
}

namespace {

Matrix spectral_direction(Index d, Rng& rng) {
  for (;;) {
    Matrix m = rng.gaussian(d, d);
    const double n = spectral_norm(m);
    if (n > 0.0) return m / n;
  }
}

}  // namespace

Net displaced_start(const MinimizerCertificate& cert, const DataPair& data, const GDParams& params,
                    double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw PreconditionError("displaced_start: fraction must lie in (0, 1)");
  const double size = fraction * params.radius;
  const Index d = net_dim(cert.net);
  if (const auto* nl = std::get_if<NonlinearNet>(&cert.net)) {
    const Matrix hidden_star = nl->activation.apply(nl->w1 * data.x());
    const Matrix e1 = spectral_direction(d, rng);
    double s1 = size / spectral_norm(data.x());
    Matrix w1 = nl->w1 + s1 * e1;
    while (spectral_norm(nl->activation.apply(w1 * data.x()) - hidden_star) > size) {
      s1 *= 0.5;
      w1 = nl->w1 + s1 * e1;
    }
    return NonlinearNet{w1, nl->w2 + size * spectral_direction(d, rng), nl->activation};
  }
  std::vector<Matrix> blocks = parameter_blocks(cert.net);
  for (Matrix& b : blocks) b += size * spectral_direction(d, rng);
  return with_blocks(cert.net, blocks);
}

ParameterizationComparison compare_residual_plain(const MinimizerCertificate& residual_cert,
                                                  const DataPair& data, double fraction,
                                                  const DescentOptions& options, Rng& rng) {
  const auto* res = std::get_if<ResidualNet>(&residual_cert.net);
  if (res == nullptr || res->depth() != 1) {
    throw PreconditionError("compare_residual_plain: needs an r = 1 residual certificate");
  }
  MinimizerCertificate plain_cert = residual_cert;
  plain_cert.net = LinearNet{res->unit_maps()};
  plain_cert.rank_profile = rank_profile(plain_cert.net);

  ParameterizationComparison out;
  const GDParams gf = gd_params_residual(residual_cert, data);
  const GDParams gh = gd_params_linear(plain_cert, data);
  out.lambda_f = gf.lambda;
  out.lambda_h = gh.lambda;

  // For r = 1 the displacement of A_k and of W_k = I + A_k coincide.
  const Net start_res = displaced_start(residual_cert, data, gf, fraction, rng);
  const Net start_plain = LinearNet{std::get<ResidualNet>(start_res).unit_maps()};

  DescentOptions res_opts = options;
  res_opts.in_neighborhood = gd_neighborhood(residual_cert, data, gf);
  DescentOptions plain_opts = options;
  plain_opts.in_neighborhood = gd_neighborhood(plain_cert, data, gh);
  out.residual = run_gd(start_res, residual_cert.net, data, residual_cert.predicted_value, res_opts);
  out.plain = run_gd(start_plain, plain_cert.net, data, residual_cert.predicted_value, plain_opts);
  return out;
}

}  // namespace nnland
