#include "nnland/report.hpp"

#include <cmath>
#include <sstream>

#include "report_json.hpp"

#ifndef NNLAND_VERSION
#define NNLAND_VERSION "0.0.0"
#endif

namespace nnland {

const char* version_tag() noexcept { return NNLAND_VERSION; }

namespace {

std::string csv_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string samples_csv(const std::vector<const ConditionReport*>& reports) {
  std::ostringstream os;
  os << "condition,index,scale,qualifies,value,violation\n";
  for (const ConditionReport* r : reports) {
    for (const SampleRecord& s : r->records) {
      os << r->condition << ',' << s.index << ',' << csv_number(s.scale) << ',' << (s.qualifies ? 1 : 0) << ','
         << csv_number(s.value) << ',' << (s.violation ? 1 : 0) << '\n';
    }
  }
  return os.str();
}

namespace report {

namespace {

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json finite(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json sample_json(const SampleRecord& s) {
  Json j;
  j["index"] = s.index;
  j["scale"] = s.scale;
  j["qualifies"] = s.qualifies;
  j["value"] = finite(s.value);
  j["violation"] = s.violation;
  return j;
}

}  // namespace

Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json to_json(const AssumptionReport& a) {
  Json j;
  j["sigma_xx_margin"] = a.sigma_xx_margin;
  j["sigma_xy_margin"] = a.sigma_xy_margin;
  j["eigen_gap"] = a.eigen_gap;
  j["tolerance"] = a.tolerance;
  j["passed"] = a.passed();
  return j;
}

Json to_json(const MinimizerCertificate& cert, bool include_blocks) {
  Json j;
  j["architecture"] = to_string(cert.architecture());
  j["predicted_value"] = cert.predicted_value;
  j["achieved_loss"] = cert.achieved_loss;
  j["grad_norm"] = cert.grad_norm;
  j["value_matches"] = cert.value_matches();
  j["stationary"] = cert.stationary();
  Json blocks_eta = Json::array();
  for (const auto& v : cert.rank_profile.blocks) blocks_eta.push_back(optional_json(v));
  j["block_eta_min"] = std::move(blocks_eta);
  if (!cert.rank_profile.units.empty()) {
    Json units_eta = Json::array();
    for (const auto& v : cert.rank_profile.units) units_eta.push_back(optional_json(v));
    j["unit_eta_min"] = std::move(units_eta);
  }
  if (include_blocks) {
    Json blocks = Json::array();
    for (const Matrix& b : parameter_blocks(cert.net)) blocks.push_back(matrix_json(b));
    j["blocks"] = std::move(blocks);
  }
  return j;
}

Json to_json(const GDParams& p) {
  Json j;
  j["architecture"] = to_string(p.arch);
  j["l"] = p.units;
  if (p.arch == Architecture::Residual) j["r"] = p.depth;
  j["tau"] = p.tau;
  j["tau_tilde"] = optional_json(p.tau_tilde);
  j["tau_hat"] = optional_json(p.tau_hat);
  j["lambda"] = p.lambda;
  j["eta_min_x"] = p.eta_min_x;
  j["radius"] = p.radius;
  return j;
}

Json to_json(const RCParams& p) {
  Json j;
  j["architecture"] = to_string(p.arch);
  j["zeta"] = p.zeta;
  j["zeta_tilde"] = optional_json(p.zeta_tilde);
  j["gamma"] = p.gamma;
  j["delta"] = p.delta;
  j["alpha"] = p.alpha;
  j["beta"] = p.beta;
  j["epsilon"] = p.epsilon;
  j["factor_eta_min"] = p.factor_eta_min;
  j["x_norm"] = p.x_norm;
  return j;
}

Json to_json(const ConditionReport& r) {
  Json j;
  j["condition"] = r.condition;
  j["params"] = std::visit([](const auto& p) { return to_json(p); }, r.params);
  j["radius"] = r.radius;
  j["in_theorem_regime"] = r.in_theorem_regime;
  j["samples_tested"] = r.samples_tested;
  if (r.condition == "regularity") {
    j["samples_qualifying"] = r.samples_qualifying;
    j["samples_nonqualifying"] = r.samples_nonqualifying;
    j["min_slack"] = finite(r.min_slack);
  } else {
    j["worst_ratio"] = finite(r.worst_ratio);
    j["radius_shrinks"] = r.radius_shrinks;
  }
  j["violations"] = r.violations;
  Json w = Json::array();
  for (const SampleRecord& s : r.witnesses) w.push_back(sample_json(s));
  j["witnesses"] = std::move(w);
  return j;
}

Json to_json(const EpsilonSearchResult& s) {
  Json j;
  j["epsilon"] = s.params.epsilon;
  j["note"] = "sampled certificate, not a proof";
  Json levels = Json::array();
  for (const EpsilonLevel& l : s.levels) {
    Json e;
    e["epsilon"] = l.epsilon;
    e["qualifying"] = l.qualifying;
    e["violations"] = l.violations;
    e["min_slack"] = finite(l.min_slack);
    levels.push_back(std::move(e));
  }
  j["levels"] = std::move(levels);
  if (!s.diagnostic.empty()) j["diagnostic"] = s.diagnostic;
  return j;
}

Json to_json(const RateFit& f) {
  Json j;
  j["ratio"] = f.ratio;
  j["r_squared"] = f.r_squared;
  j["points"] = f.points;
  j["status"] = f.status;
  return j;
}

Json to_json(const DescentTrace& t) {
  Json j;
  j["step"] = t.step;
  j["iters"] = t.iters;
  j["optimal_value"] = t.optimal_value;
  j["diverged"] = t.diverged;
  j["monotone"] = t.monotone;
  j["halvings"] = t.halvings;
  j["exit_iter"] = t.exit_iter ? Json(*t.exit_iter) : Json(nullptr);
  j["fit"] = to_json(t.fit);
  Json losses = Json::array();
  for (double v : t.losses) losses.push_back(finite(v));
  j["losses"] = std::move(losses);
  Json dists = Json::array();
  for (double v : t.iterate_dists) dists.push_back(finite(v));
  j["iterate_dists"] = std::move(dists);
  return j;
}

Json to_json(const ExperimentConfig& c) {
  Json j;
  j["architecture"] = to_string(c.architecture);
  j["d"] = c.d;
  j["m"] = c.samples_m();
  j["l"] = c.l;
  if (c.architecture == Architecture::Residual) j["r"] = c.depth();
  if (c.architecture == Architecture::Nonlinear) j["slope"] = c.activation_slope();
  j["seed"] = c.seed;
  j["samples"] = c.samples;
  j["rc_samples"] = c.rc_samples;
  j["search_samples"] = c.search_budget();
  j["gamma"] = c.gamma;
  j["delta"] = c.delta ? Json(*c.delta) : Json("auto");
  j["gd_radius"] = optional_json(c.gd_radius);
  j["eps_hi"] = optional_json(c.eps_hi);
  j["rc_levels"] = c.rc_levels;
  j["transforms"] = c.transforms;
  j["fixture"] = c.fixture;
  j["displacement"] = c.displacement;
  j["descent_iters"] = c.descent_iters;
  j["step"] = optional_json(c.step);
  j["format"] = c.format;
  return j;
}

}  // namespace report
}  // namespace nnland
