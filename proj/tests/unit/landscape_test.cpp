#include <cmath>
#include <cstdlib>

#include "nnland/errors.hpp"
#include "test_support.hpp"

using namespace nnland;
using nnland::testing::mat;
using nnland::testing::random_certificate;
using nnland::testing::square_data;

namespace {

DataPair scaled_f1(double c) { return DataPair(Matrix::Identity(2, 2), c * mat({{2, 0}, {0, 1}})); }

}  // namespace

// ------------------------------------------------------------ GD constants

TEST(GdParamsLinear, F1) {
  const DataPair f1 = fixture_f1();
  const GDParams p = gd_params_linear(linear_minimizer(f1, 2), f1);
  EXPECT_DOUBLE_EQ(p.tau, 0.5);
  EXPECT_DOUBLE_EQ(p.lambda, 1.0);
  EXPECT_DOUBLE_EQ(p.radius, 0.5);
}

TEST(GdParamsLinear, ScalingYKeepsTauFromTheIdentityLayer) {
  const DataPair data = scaled_f1(2.0);
  const auto cert = linear_minimizer(data, 2);
  EXPECT_TRUE(std::get<LinearNet>(cert.net).layers[0].isApprox(mat({{4, 0}, {0, 2}})));
  const GDParams p = gd_params_linear(cert, data);
  EXPECT_DOUBLE_EQ(p.tau, 0.5);
  EXPECT_DOUBLE_EQ(p.lambda, 1.0);
}

TEST(GdParamsLinear, SingleLayer) {
  const DataPair data = square_data(3, 2);
  const auto cert = linear_minimizer(data, 1);
  const GDParams p = gd_params_linear(cert, data);
  const double ex = eta_min(data.x());
  EXPECT_NEAR(p.lambda, 1.0 / (2.0 * ex * ex), 1e-12 * p.lambda);
  EXPECT_NEAR(p.tau, 0.5 * eta_min(std::get<LinearNet>(cert.net).layers[0]), 1e-15);
}

TEST(GdParamsLinear, WrongArchitectureOrShape) {
  const DataPair f1 = fixture_f1();
  EXPECT_THROW(gd_params_linear(residual_minimizer(f1, 2, 1), f1), PreconditionError);
  Rng rng(1);
  const DataPair wide = gen_data(2, 4, rng);
  EXPECT_THROW(gd_params_linear(linear_minimizer(wide, 2), wide), PreconditionError);
}

TEST(GdParamsResidual, SingleFactorTauHatEqualsTau) {
  const DataPair f1 = fixture_f1();
  const GDParams p = gd_params_residual(residual_minimizer(f1, 2, 1), f1);
  EXPECT_DOUBLE_EQ(p.tau, 0.5);
  EXPECT_DOUBLE_EQ(*p.tau_hat, p.tau);
  EXPECT_FALSE(p.tau_tilde.has_value());
  EXPECT_DOUBLE_EQ(p.lambda, 1.0);
}

TEST(GdParamsResidual, TwoFactorBisectionBoundHoldsOnSamples) {
  // A synthetic certificate with |A*| <= 1: unit map I + A2 A1 with
  // orthogonal-times-diagonal factors.
  const Matrix d = mat({{0.9, 0.3}, {-0.2, 0.8}});
  const DataPair data(Matrix::Identity(2, 2), Matrix::Identity(2, 2) + d);
  const auto cert = residual_minimizer(data, 1, 2);
  const auto& net = std::get<ResidualNet>(cert.net);
  double a_max = 0;
  for (const Matrix& b : net.blocks()) a_max = std::max(a_max, spectral_norm(b));
  ASSERT_LE(a_max, 1.0 + 1e-12);

  const GDParams p = gd_params_residual(cert, data);
  ASSERT_TRUE(p.tau_hat && p.tau_tilde);
  EXPECT_GT(*p.tau_hat, 1e-12);
  EXPECT_LE(product_perturbation_bound(a_max, *p.tau_hat, 2), p.tau * (1 + 1e-12));
  EXPECT_DOUBLE_EQ(p.radius, std::min(*p.tau_hat, *p.tau_tilde));

  Rng rng(3);
  const Matrix w_star = net.unit_map(0);
  for (int i = 0; i < 1000; ++i) {
    const NeighborhoodSample s = sample_neighborhood(cert, data, *p.tau_hat, NormKind::Spectral, rng);
    EXPECT_LT(spectral_norm(std::get<ResidualNet>(s.net).unit_map(0) - w_star), p.tau);
  }
}

TEST(GdParamsResidual, EmpiricalSafeRadiusIsAtLeastTauHat) {
  const DataPair data = square_data(2, 4);
  const auto cert = random_certificate(Architecture::Residual, data, 2, 2, 4);
  const GDParams p = gd_params_residual(cert, data);
  Rng rng(4);
  EXPECT_GE(empirical_safe_radius(cert, p, 100, rng), *p.tau_hat);
}

TEST(GdParamsResidual, ShortcutBoundOnTau) {
  // For r = 1 and max |A_k*| <= rho < 1, tau >= (1 - rho) / 2 and lambda_f
  // is at most the matching bound.
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const Index d = 3;
    const Matrix x = random_invertible(d, 5, rng);
    const Matrix a1 = 0.3 * rng.gaussian(d, d), a2 = 0.3 * rng.gaussian(d, d);
    const Matrix y = (Matrix::Identity(d, d) + a2) * (Matrix::Identity(d, d) + a1) * x;
    const DataPair data(x, y);
    const MinimizerCertificate cert{ResidualNet(2, 1, {a1, a2}), 0.0, 0.0, 0.0, {}, {}};
    const double rho = std::max(spectral_norm(a1), spectral_norm(a2));
    if (rho >= 1.0) continue;
    const GDParams p = gd_params_residual(cert, data);
    const double ex = eta_min(x);
    EXPECT_GE(p.tau, (1 - rho) / 2 - 1e-12);
    EXPECT_LE(p.lambda, 1.0 / (2.0 * 2.0 * std::pow((1 - rho) / 2, 2.0) * ex * ex) * (1 + 1e-12));
  }
}

TEST(IdentityShortcut, WeylLowerBound) {
  Rng rng(17);
  for (int i = 0; i < 1000; ++i) {
    const Index d = 2 + i % 3;
    Matrix a = rng.gaussian(d, d);
    a *= rng.uniform() / spectral_norm(a);
    EXPECT_GE(sigma_min(Matrix::Identity(d, d) + a), 1.0 - spectral_norm(a) - 1e-12);
  }
}

TEST(GdParamsNonlinear, F1) {
  const DataPair f1 = fixture_f1();
  const GDParams p = gd_params_nonlinear(nonlinear_minimizer(f1, Activation(0.5)), f1);
  EXPECT_DOUBLE_EQ(p.tau, 0.5);
  EXPECT_DOUBLE_EQ(p.lambda, 2.0);
}

TEST(GdParamsNonlinear, HomogeneousInY) {
  const GDParams base = gd_params_nonlinear(nonlinear_minimizer(scaled_f1(1), Activation(0.5)), scaled_f1(1));
  for (double c : {0.5, 3.0, 10.0}) {
    const DataPair data = scaled_f1(c);
    const GDParams p = gd_params_nonlinear(nonlinear_minimizer(data, Activation(0.5)), data);
    EXPECT_NEAR(p.tau, c * base.tau, 1e-14 * c);
    EXPECT_NEAR(p.lambda, base.lambda / (c * c), 1e-14 * base.lambda / (c * c));
  }
}

TEST(GdParamsNonlinear, IdentityData) {
  const DataPair data(Matrix::Identity(2, 2), Matrix::Identity(2, 2));
  const auto cert = nonlinear_minimizer(data, Activation(0.5));
  // Sigma = I has a repeated eigenvalue, so the eigenbasis (and with it
  // W_1*) is only fixed up to an orthogonal change of basis.
  const Matrix& w1 = std::get<NonlinearNet>(cert.net).w1;
  EXPECT_TRUE(nnland::testing::matrix_near(w1.transpose() * w1, Matrix::Identity(2, 2), 1e-12));
  const GDParams p = gd_params_nonlinear(cert, data);
  EXPECT_DOUBLE_EQ(p.tau, 0.5);
  EXPECT_DOUBLE_EQ(p.lambda, 2.0);
}

// -------------------------------------------------------------- sampling

TEST(SampleNeighborhood, TinyRadiusReturnsTheCertificate) {
  const DataPair f1 = fixture_f1();
  const auto cert = linear_minimizer(f1, 2);
  Rng rng(1);
  const NeighborhoodSample s = sample_neighborhood(cert, f1, 1e-300, NormKind::Spectral, rng);
  EXPECT_TRUE(nnland::testing::matrix_near(flatten(s.net), flatten(cert.net), 1e-290));
}

TEST(SampleNeighborhood, BlockNormsStayInsideTheRadius) {
  const DataPair data = square_data(3, 2);
  for (Architecture a : {Architecture::Linear, Architecture::Residual}) {
    const auto cert = random_certificate(a, data, 2, 2, 5);
    const auto star = parameter_blocks(cert.net);
    Rng rng(2);
    for (NormKind norm : {NormKind::Spectral, NormKind::Frobenius}) {
      for (int i = 0; i < 1000; ++i) {
        const auto blocks = parameter_blocks(sample_neighborhood(cert, data, 0.3, norm, rng).net);
        for (std::size_t b = 0; b < blocks.size(); ++b) {
          const Matrix e = blocks[b] - star[b];
          EXPECT_LT(norm == NormKind::Spectral ? spectral_norm(e) : fro_norm(e), 0.3);
        }
      }
    }
  }
  Rng rng(0);
  EXPECT_THROW(sample_neighborhood(linear_minimizer(data, 2), data, 0.0, NormKind::Spectral, rng),
               PreconditionError);
}

TEST(SampleNeighborhood, NonlinearSamplesRespectTheActivationBound) {
  const DataPair data = square_data(3, 6);
  const auto cert = random_certificate(Architecture::Nonlinear, data, 2, 1, 6);
  const auto& star = std::get<NonlinearNet>(cert.net);
  const Matrix hidden_star = star.activation.apply(star.w1 * data.x());
  const GDParams p = gd_params_nonlinear(cert, data);
  Rng rng(6);
  for (int i = 0; i < 1000; ++i) {
    const auto s = sample_neighborhood(cert, data, p.tau, NormKind::Spectral, rng);
    const auto& n = std::get<NonlinearNet>(s.net);
    EXPECT_LE(spectral_norm(n.activation.apply(n.w1 * data.x()) - hidden_star), p.tau);
  }
}

// --------------------------------------------------------------- check_gd

TEST(CheckGd, RatioVanishesAtTheCertificate) {
  const DataPair f1 = fixture_f1();
  const auto cert = linear_minimizer(f1, 2);
  const ConditionReport r = check_gd(cert, f1, gd_params(cert, f1), 10, Rng(1), 1e-300);
  EXPECT_EQ(r.worst_ratio, 0.0);
  EXPECT_EQ(r.violations, 0);
}

TEST(CheckGd, F1LinearTenThousandSamples) {
  const DataPair f1 = fixture_f1();
  const auto cert = linear_minimizer(f1, 2);
  const ConditionReport r = check_gd(cert, f1, gd_params(cert, f1), 10000, Rng(2));
  EXPECT_EQ(r.samples_tested, 10000);
  EXPECT_EQ(r.violations, 0);
  EXPECT_LE(r.worst_ratio, 1.0);
  EXPECT_TRUE(r.in_theorem_regime);
}

TEST(CheckGd, InflatedRadiusIsFlaggedOutsideTheRegime) {
  const DataPair f1 = fixture_f1();
  const auto cert = linear_minimizer(f1, 2);
  const GDParams p = gd_params(cert, f1);
  const ConditionReport r = check_gd(cert, f1, p, 2000, Rng(3), 10 * p.radius);
  EXPECT_FALSE(r.in_theorem_regime);
  EXPECT_EQ(r.violations == 0, r.worst_ratio <= 1.0 + kViolationSlack);
  EXPECT_LE(r.witnesses.size(), kMaxWitnesses);
  for (std::size_t i = 1; i < r.witnesses.size(); ++i) EXPECT_LT(r.witnesses[i - 1].index, r.witnesses[i].index);
}

TEST(CheckGd, AllArchitecturesDeskScale) {
  for (Architecture a : {Architecture::Linear, Architecture::Residual, Architecture::Nonlinear}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const DataPair data = square_data(3, seed);
      const auto cert = random_certificate(a, data, 2, 2, seed);
      const ConditionReport r = check_gd(cert, data, gd_params(cert, data), 1000, Rng(seed));
      EXPECT_EQ(r.violations, 0) << to_string(a) << " seed " << seed << " worst " << r.worst_ratio;
    }
  }
}

TEST(CheckGd, IndependentOfWorkerCount) {
  const DataPair data = square_data(3, 1);
  const auto cert = random_certificate(Architecture::Residual, data, 2, 2, 1);
  const GDParams p = gd_params(cert, data);
  ::setenv("NNLAND_WORKERS", "1", 1);
  const ConditionReport one = check_gd(cert, data, p, 500, Rng(8));
  ::setenv("NNLAND_WORKERS", "4", 1);
  const ConditionReport four = check_gd(cert, data, p, 500, Rng(8));
  ::unsetenv("NNLAND_WORKERS");
  ASSERT_EQ(one.records.size(), four.records.size());
  for (std::size_t i = 0; i < one.records.size(); ++i) EXPECT_EQ(one.records[i].value, four.records[i].value);
  EXPECT_EQ(one.worst_ratio, four.worst_ratio);
}

// ------------------------------------------------------------ RC constants

TEST(RcParams, F1Linear) {
  const DataPair f1 = fixture_f1();
  const auto cert = linear_minimizer(f1, 2);
  const RCParams p = rc_params(cert, f1, 0.5);
  EXPECT_DOUBLE_EQ(p.zeta, 4.0);
  EXPECT_DOUBLE_EQ(p.alpha, 1.0 / 64.0);
  EXPECT_DOUBLE_EQ(p.delta, eta_min(build_G(std::get<LinearNet>(cert.net), f1)));
  EXPECT_DOUBLE_EQ(rc_params(cert, f1, 0.5, 1.0).beta, 0.25);
}

TEST(RcParams, F1Nonlinear) {
  const DataPair f1 = fixture_f1();
  const RCParams p = rc_params(nonlinear_minimizer(f1, Activation(0.5)), f1, 0.5);
  EXPECT_DOUBLE_EQ(p.zeta, 4.0);
  EXPECT_DOUBLE_EQ(p.alpha, 1.0 / 512.0);
}

TEST(RcParams, ResidualFormula) {
  const DataPair data = square_data(2, 3);
  const auto cert = random_certificate(Architecture::Residual, data, 2, 2, 3);
  const RCParams p = rc_params(cert, data, 0.3, 0.7);
  const double x = spectral_norm(data.x());
  ASSERT_TRUE(p.zeta_tilde);
  EXPECT_NEAR(p.alpha, 0.3 / (2 * 2 * std::pow(*p.zeta_tilde, 2) * std::pow(p.zeta, 2) * x * x), 1e-14 * p.alpha);
  EXPECT_DOUBLE_EQ(p.beta, 0.7 * 0.7 * 0.7 / 2);
}

TEST(RcParams, Errors) {
  const DataPair f1 = fixture_f1();
  const auto cert = linear_minimizer(f1, 2);
  EXPECT_THROW(rc_params(cert, f1, 0.5, 0.0), PreconditionError);
  EXPECT_THROW(rc_params(cert, f1, 0.5, -1.0), PreconditionError);
  EXPECT_THROW(rc_params(cert, f1, 1.0), PreconditionError);
}

// ------------------------------------------------------ direction filter

TEST(DirectionQualifies, SingularVectors) {
  Rng rng(4);
  const Matrix f = rng.gaussian(4, 6);
  Eigen::JacobiSVD<Matrix> svd(f, Eigen::ComputeFullV);
  const Vector s = svd.singularValues();
  for (Index i = 0; i < s.size(); ++i) {
    const Vector v = svd.matrixV().col(i);
    EXPECT_TRUE(direction_qualifies(f, v, s(i)));
    EXPECT_TRUE(direction_qualifies(f, v, 0.999 * s(i)));
    EXPECT_FALSE(direction_qualifies(f, v, 1.001 * s(i)));
  }
  for (Index i = 4; i < 6; ++i) EXPECT_FALSE(direction_qualifies(f, svd.matrixV().col(i), 1e-6));
  EXPECT_THROW(direction_qualifies(f, Vector::Zero(6), 1.0), PreconditionError);
}

TEST(DirectionQualifies, ScaleInvariant) {
  Rng rng(5);
  const Matrix f = rng.gaussian(4, 6);
  const double delta = eta_min(f);
  for (int i = 0; i < 500; ++i) {
    const Vector v = rng.gaussian(6, 1);
    double c = std::exp(6 * (rng.uniform() - 0.5));
    if (rng.uniform() < 0.5) c = -c;
    EXPECT_EQ(direction_qualifies(f, v, delta), direction_qualifies(f, c * v, delta));
  }
}

// ----------------------------------------------------------- regularity

TEST(RcSlack, TaylorLimitAlongQualifyingDirections) {
  const DataPair data = square_data(2, 7);
  const auto cert = random_certificate(Architecture::Linear, data, 2, 1, 7);
  const RCParams p = rc_params(cert, data, 0.5);
  const Matrix f = factor_matrix(cert.net, data);
  Rng rng(7);
  const Vector star = flatten(cert.net);
  for (int trial = 0; trial < 10; ++trial) {
    Vector v = f.transpose() * rng.gaussian(f.rows(), 1);
    v.normalize();
    ASSERT_TRUE(direction_qualifies(f, v, p.delta));
    const Vector fv = f * v;
    const double limit = fv.squaredNorm() - p.alpha * (f.transpose() * fv).squaredNorm() - p.beta;
    EXPECT_GE(limit, (1 - p.gamma) * fv.squaredNorm() - p.beta - 1e-12);
    EXPECT_GE((1 - p.gamma) * fv.squaredNorm() - p.beta, -1e-12);
    double previous = std::numeric_limits<double>::infinity();
    for (double t : {1e-1, 1e-2, 1e-3, 1e-4}) {
      const double ratio = rc_slack(cert.net, with_parameters(cert.net, star + t * v), data, p) / (t * t);
      const double gap = std::abs(ratio - limit);
      EXPECT_LT(gap, previous + 1e-9);
      previous = gap;
    }
    EXPECT_LT(previous, 1e-3 * std::max(1.0, std::abs(limit)));
  }
}

TEST(RegularitySweep, KernelDirectionsAreExcluded) {
  const DataPair f1 = fixture_f1();
  const auto cert = linear_minimizer(f1, 2);
  RCParams p = rc_params(cert, f1, 0.5);
  p.delta = 1e6;  // nothing qualifies
  const ConditionReport r = regularity_sweep(cert, f1, p, 0.1, 20, Rng(1));
  EXPECT_EQ(r.samples_qualifying, 0);
  EXPECT_EQ(r.samples_nonqualifying, r.samples_tested);
  EXPECT_EQ(r.violations, 0);
}

TEST(EpsilonSearch, F1LinearFindsARadius) {
  const DataPair f1 = fixture_f1();
  const auto cert = linear_minimizer(f1, 2);
  const RCParams p = rc_params(cert, f1, 0.5);
  const EpsilonSearchResult s = epsilon_search(cert, f1, p, 1000, Rng(2));
  EXPECT_GT(s.params.epsilon, 0.0);
  EXPECT_EQ(s.report.violations, 0);
  EXPECT_GE(s.report.samples_qualifying, 1000);
  EXPECT_TRUE(s.diagnostic.empty());
}

TEST(EpsilonSearch, ShrinkingTheRadiusCreatesNoViolations) {
  const DataPair data = square_data(3, 4);
  const auto cert = random_certificate(Architecture::Linear, data, 3, 1, 4);
  const RCParams p = rc_params(cert, data, 0.5);
  const EpsilonSearchResult s = epsilon_search(cert, data, p, 2000, Rng(3));
  ASSERT_GT(s.params.epsilon, 0.0);
  for (int j = 1; j <= 4; ++j) {
    const ConditionReport r =
        regularity_sweep(cert, data, p, s.params.epsilon * std::ldexp(1.0, -j), 1000, Rng(100 + j));
    EXPECT_EQ(r.violations, 0) << "epsilon / 2^" << j;
    EXPECT_GE(r.min_slack, -kViolationSlack);
  }
}

TEST(EpsilonSearch, FailureReportsZeroAndADiagnostic) {
  // gamma near 1 with a delta far above eta_min(G) still qualifies nothing,
  // so no level can collect its samples.
  const DataPair f1 = fixture_f1();
  const auto cert = linear_minimizer(f1, 2);
  RCParams p = rc_params(cert, f1, 0.5);
  p.delta = 1e6;
  const EpsilonSearchResult s = epsilon_search(cert, f1, p, 10, Rng(1), 1.0, 3);
  EXPECT_EQ(s.params.epsilon, 0.0);
  EXPECT_FALSE(s.diagnostic.empty());
  EXPECT_EQ(s.levels.size(), 3u);
  EXPECT_THROW(epsilon_search(cert, f1, p, 10, Rng(1), 1.0, 0), PreconditionError);
}

TEST(CheckRc, F1AllArchitectures) {
  const DataPair f1 = fixture_f1();
  const std::vector<MinimizerCertificate> certs = {linear_minimizer(f1, 2), residual_minimizer(f1, 2, 1),
                                                   nonlinear_minimizer(f1, Activation(0.5))};
  for (const auto& cert : certs) {
    const RCParams p = rc_params(cert, f1, 0.5);
    const EpsilonSearchResult s = epsilon_search(cert, f1, p, 10000, Rng(5));
    ASSERT_GT(s.params.epsilon, 0.0) << to_string(cert.architecture()) << ": " << s.diagnostic;
    const ConditionReport r = check_rc(cert, f1, s.params, 1000, Rng(6));
    EXPECT_EQ(r.violations, 0) << to_string(cert.architecture()) << " min slack " << r.min_slack;
    EXPECT_GE(r.samples_qualifying, 1000);
  }
}

TEST(CheckRc, RequiresEpsilon) {
  const DataPair f1 = fixture_f1();
  const auto cert = linear_minimizer(f1, 2);
  EXPECT_THROW(check_rc(cert, f1, rc_params(cert, f1), 10, Rng(1)), PreconditionError);
}
