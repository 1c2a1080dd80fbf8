#include "nnland/errors.hpp"
#include "test_support.hpp"

using namespace nnland;
using nnland::testing::loss_field;
using nnland::testing::mat;
using nnland::testing::matrix_near;
using nnland::testing::random_net;
using nnland::testing::square_data;

namespace {

const Matrix kDiag21 = (Matrix(2, 2) << 2, 0, 0, 1).finished();

double fd_gradient_error(const Net& net, const DataPair& data) {
  const Vector analytic = gradient(net, data).values;
  const Vector numeric = fd_gradient(loss_field(net, data), flatten(net));
  return relative_error(analytic, numeric, 1e-8);
}

double fd_hessian_error(const Net& net_star, const DataPair& data) {
  const Matrix analytic = hessian_at_min(net_star, data);
  const Matrix numeric = fd_hessian(loss_field(net_star, data), flatten(net_star));
  return relative_error(analytic, numeric);
}

double min_eigenvalue(const Matrix& h) { return sym_eig_desc(h).values.minCoeff(); }

}  // namespace

// ------------------------------------------------------------- activation

TEST(Activation, InverseAndDerivativeConvention) {
  const Activation s(0.25);
  for (double y : {-3.0, -0.5, 0.0, 0.75, 2.0}) EXPECT_EQ(s(s.inverse(y)), y);
  EXPECT_DOUBLE_EQ(s(-2.0), -0.5);
  EXPECT_DOUBLE_EQ(s.derivative(0.0), 0.25);
  EXPECT_DOUBLE_EQ(s.derivative(1e-300), 1.0);
  EXPECT_DOUBLE_EQ(s.derivative(-1.0), 0.25);
  EXPECT_THROW(Activation(1.0), PreconditionError);
  EXPECT_THROW(Activation(0.0), PreconditionError);
}

// ------------------------------------------------------------------ linear

TEST(LinearEval, F1Examples) {
  const DataPair f1 = fixture_f1();
  const LinearNet star{{kDiag21, Matrix::Identity(2, 2)}};
  EXPECT_DOUBLE_EQ(linear_eval(star, f1).loss, 0.0);
  const LinearNet zero{{Matrix::Zero(2, 2), Matrix::Zero(2, 2)}};
  EXPECT_DOUBLE_EQ(linear_eval(zero, f1).loss, 2.5);
}

TEST(LinearEval, SingleLayerExactSolve) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const DataPair data = square_data(3, seed);
    const LinearNet net{{data.y() * data.x().inverse()}};
    EXPECT_LT(linear_eval(net, data).loss, 1e-20 * std::max(1.0, data.y().squaredNorm()) + 1e-24);
  }
}

TEST(LinearEval, DimensionMismatch) {
  const LinearNet net{{Matrix::Identity(3, 3)}};
  EXPECT_THROW(linear_eval(net, fixture_f1()), DimensionError);
}

TEST(LinearGrad, MatchesFiniteDifferences) {
  for (Index d : {2, 3, 4}) {
    for (Index l : {1, 2, 3}) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const DataPair data = square_data(d, seed);
        Rng rng(seed + 100);
        const Net net = random_net(Architecture::Linear, d, l, 1, data, rng);
        EXPECT_LT(fd_gradient_error(net, data), 1e-6) << "d=" << d << " l=" << l << " seed=" << seed;
      }
    }
  }
}

TEST(LinearGrad, SingleLayerIsErrorTimesXTranspose) {
  const DataPair data = square_data(3, 4);
  Rng rng(4);
  const LinearNet net{{rng.gaussian(3, 3)}};
  const Evaluation ev = linear_eval(net, data);
  EXPECT_TRUE(matrix_near(linear_grad(net, data).values, vec_cols(ev.error * data.x().transpose()), 1e-12));
}

TEST(LinearGrad, VanishesAtMinimizer) {
  const LinearNet star{{kDiag21, Matrix::Identity(2, 2)}};
  EXPECT_LT(linear_grad(star, fixture_f1()).total_norm, 1e-9);
}

TEST(BuildG, SingleLayerIsXTransposeKronIdentity) {
  const DataPair data = square_data(2, 1);
  const LinearNet net{{Matrix::Identity(2, 2)}};
  EXPECT_TRUE(matrix_near(build_G(net, data), kron(data.x().transpose(), Matrix::Identity(2, 2)), 0.0));
}

TEST(BuildG, F1SecondBlock) {
  const LinearNet star{{kDiag21, Matrix::Identity(2, 2)}};
  EXPECT_TRUE(matrix_near(build_G_block(star, fixture_f1(), 1), kron(kDiag21.transpose(), Matrix::Identity(2, 2)),
                          0.0));
  EXPECT_EQ(build_G(star, fixture_f1()).cols(), 8);
}

TEST(BuildG, ReproducesGradient) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const DataPair data = square_data(3, seed);
    Rng rng(seed);
    const Net net = random_net(Architecture::Linear, 3, 3, 1, data, rng);
    const Vector e = vec_cols(evaluate(net, data).error);
    EXPECT_TRUE(matrix_near(factor_matrix(net, data).transpose() * e, gradient(net, data).values, 1e-12 * 100));
  }
}

TEST(LinearHessian, F1GramMatchesFiniteDifferences) {
  const LinearNet star{{kDiag21, Matrix::Identity(2, 2)}};
  const Matrix h = linear_hessian_at_min(star, fixture_f1());
  EXPECT_GE(min_eigenvalue(h), -1e-10);
  EXPECT_LT(fd_hessian_error(star, fixture_f1()), 1e-4);
}

TEST(LinearHessian, RejectsNonMinimizer) {
  const LinearNet zero{{Matrix::Zero(2, 2), Matrix::Zero(2, 2)}};
  EXPECT_THROW(linear_hessian_at_min(zero, fixture_f1()), PreconditionError);
}

TEST(LinearNet, ScalingOneLayerScalesTheEndToEndMap) {
  Rng rng(6);
  const DataPair data = square_data(3, 6);
  auto net = std::get<LinearNet>(random_net(Architecture::Linear, 3, 3, 1, data, rng));
  const Matrix before = net.end_to_end();
  const Matrix g0 = build_G_block(net, data, 0);
  net.layers[1] *= 2.5;
  EXPECT_TRUE(matrix_near(net.end_to_end(), 2.5 * before, 1e-12 * 100));
  // G_1 = X^T kron (W_3 W_2) picks up the factor; G_2 does not involve W_2.
  EXPECT_TRUE(matrix_near(build_G_block(net, data, 0), 2.5 * g0, 1e-12 * 100));
}

// ---------------------------------------------------------------- residual

TEST(ResidualEval, Examples) {
  const DataPair f1 = fixture_f1();
  const ResidualNet zero(2, 1, {Matrix::Zero(2, 2), Matrix::Zero(2, 2)});
  EXPECT_DOUBLE_EQ(residual_eval(zero, f1).loss, 0.5 * (f1.x() - f1.y()).squaredNorm());
  const ResidualNet star(2, 1, {mat({{1, 0}, {0, 0}}), Matrix::Zero(2, 2)});
  EXPECT_DOUBLE_EQ(residual_eval(star, f1).loss, 0.0);
}

TEST(ResidualEval, FactoredUnitsGiveTheSameLoss) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const DataPair data = square_data(3, seed);
    const Matrix a11 = rng.gaussian(3, 3), a12 = rng.gaussian(3, 3), a21 = rng.gaussian(3, 3),
                 a22 = rng.gaussian(3, 3);
    const ResidualNet one(2, 1, {a12 * a11, a22 * a21});
    const ResidualNet two(2, 2, {a11, a12, a21, a22});
    EXPECT_NEAR(residual_eval(one, data).loss, residual_eval(two, data).loss,
                1e-12 * std::max(1.0, residual_eval(one, data).loss));
  }
}

TEST(ResidualGrad, MatchesFiniteDifferences) {
  for (Index d : {2, 3, 4}) {
    for (Index l : {1, 2, 3}) {
      for (Index r : {1, 2}) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
          const DataPair data = square_data(d, seed);
          Rng rng(seed + 200);
          const Net net = random_net(Architecture::Residual, d, l, r, data, rng);
          EXPECT_LT(fd_gradient_error(net, data), 1e-6) << "d=" << d << " l=" << l << " r=" << r;
        }
      }
    }
  }
}

TEST(ResidualGrad, SingleFactorUnitsMatchPlainLayers) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const DataPair data = square_data(3, seed);
    const auto net = std::get<ResidualNet>(random_net(Architecture::Residual, 3, 3, 1, data, rng));
    const LinearNet plain{net.unit_maps()};
    EXPECT_TRUE(matrix_near(residual_grad(net, data).values, linear_grad(plain, data).values, 1e-12 * 100));
    EXPECT_TRUE(matrix_near(build_Q(net, data), build_G(plain, data), 1e-12 * 100));
  }
}

TEST(ResidualGrad, VanishesAtMinimizer) {
  const ResidualNet star(2, 1, {mat({{1, 0}, {0, 0}}), Matrix::Zero(2, 2)});
  EXPECT_LT(residual_grad(star, fixture_f1()).total_norm, 1e-9);
}

TEST(BuildQ, ReproducesGradient) {
  Rng rng(2);
  const DataPair data = square_data(2, 2);
  const Net net = random_net(Architecture::Residual, 2, 2, 2, data, rng);
  const Vector e = vec_cols(evaluate(net, data).error);
  EXPECT_TRUE(matrix_near(build_Q(std::get<ResidualNet>(net), data).transpose() * e, gradient(net, data).values,
                          1e-12 * 100));
}

TEST(ResidualHessian, F1SingleFactor) {
  const ResidualNet star(2, 1, {mat({{1, 0}, {0, 0}}), Matrix::Zero(2, 2)});
  const Matrix h = residual_hessian_at_min(star, fixture_f1());
  EXPECT_GE(min_eigenvalue(h), -1e-10);
  EXPECT_LT(fd_hessian_error(star, fixture_f1()), 1e-4);
}

TEST(ResidualHessian, BlockSymmetry) {
  const DataPair data = square_data(2, 3);
  const auto cert = nnland::testing::random_certificate(Architecture::Residual, data, 2, 2, 3);
  const Matrix h = residual_hessian_at_min(std::get<ResidualNet>(cert.net), data);
  const Index b = 4;
  for (Index i = 0; i < 4; ++i) {
    for (Index j = 0; j < 4; ++j) {
      EXPECT_EQ(h.block(i * b, j * b, b, b), h.block(j * b, i * b, b, b).transpose());
    }
  }
  EXPECT_GE(min_eigenvalue(h), -1e-10 * h.norm());
}

TEST(ResidualHessian, RejectsNonMinimizer) {
  const ResidualNet zero(1, 1, {Matrix::Zero(2, 2)});
  EXPECT_THROW(residual_hessian_at_min(zero, fixture_f1()), PreconditionError);
}

// --------------------------------------------------------------- nonlinear

TEST(NonlinearEval, PositivePreactivationsReduceToLinear) {
  const DataPair f1 = fixture_f1();
  Rng rng(5);
  const Matrix w1 = rng.gaussian(2, 2).cwiseAbs() + Matrix::Constant(2, 2, 0.1);
  const Matrix w2 = rng.gaussian(2, 2);
  const NonlinearNet net{w1, w2, Activation(0.3)};
  const LinearNet plain{{w1, w2}};
  EXPECT_DOUBLE_EQ(nonlinear_eval(net, f1).loss, linear_eval(plain, f1).loss);
  EXPECT_TRUE(matrix_near(nonlinear_grad(net, f1).values, linear_grad(plain, f1).values, 1e-14));
  EXPECT_TRUE(matrix_near(build_H(net, f1), build_G(plain, f1), 1e-14));
}

TEST(NonlinearEval, Examples) {
  const DataPair f1 = fixture_f1();
  const NonlinearNet star{kDiag21, Matrix::Identity(2, 2), Activation(0.5)};
  EXPECT_DOUBLE_EQ(nonlinear_eval(star, f1).loss, 0.0);
  const NonlinearNet zero_out{kDiag21, Matrix::Zero(2, 2), Activation(0.5)};
  EXPECT_DOUBLE_EQ(nonlinear_eval(zero_out, f1).loss, 0.5 * f1.y().squaredNorm());
}

TEST(NonlinearGrad, MatchesFiniteDifferencesAwayFromKinks) {
  for (Index d : {2, 3, 4}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const DataPair data = square_data(d, seed);
      Rng rng(seed + 300);
      const Net net = random_net(Architecture::Nonlinear, d, 2, 1, data, rng);
      EXPECT_LT(fd_gradient_error(net, data), 1e-6) << "d=" << d << " seed=" << seed;
    }
  }
}

TEST(NonlinearGrad, VanishesAtMinimizer) {
  const DataPair data = square_data(3, 1);
  const auto cert = nonlinear_minimizer(data, Activation(0.5));
  EXPECT_LT(nonlinear_grad(std::get<NonlinearNet>(cert.net), data).total_norm, 1e-9);
}

TEST(BuildH, ShapeAndGram) {
  const DataPair data = square_data(3, 2);
  const auto cert = nnland::testing::random_certificate(Architecture::Nonlinear, data, 2, 1, 2);
  const auto& net = std::get<NonlinearNet>(cert.net);
  const Matrix h = build_H(net, data);
  EXPECT_EQ(h.rows(), 9);
  EXPECT_EQ(h.cols(), 18);
  const Matrix hess = nonlinear_hessian_at_min(net, data);
  EXPECT_EQ(hess, hess.transpose());
  EXPECT_GE(min_eigenvalue(hess), -1e-10 * hess.norm());
}

TEST(NonlinearHessian, F1WithRandomTransformsMatchesFiniteDifferences) {
  // With identity transforms the F1 minimizer has zero preactivations off
  // the diagonal, where the Hessian does not exist; random transforms move
  // the preactivations off the kink.
  const DataPair f1 = fixture_f1();
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 5; ++seed) {
    const auto cert = nnland::testing::random_certificate(Architecture::Nonlinear, f1, 2, 1, seed);
    const auto& net = std::get<NonlinearNet>(cert.net);
    if (kink_margin(net, f1) < 1e-2) continue;
    EXPECT_LT(fd_hessian_error(net, f1), 1e-3) << "seed " << seed;
    ++checked;
  }
}

TEST(NonlinearHessian, F1IdentityTransformsSitOnTheKink) {
  const NonlinearNet star{kDiag21, Matrix::Identity(2, 2), Activation(0.5)};
  EXPECT_DOUBLE_EQ(kink_margin(star, fixture_f1()), 0.0);
  EXPECT_THROW(nonlinear_hessian_at_min(star, fixture_f1()), PreconditionError);
}

// ----------------------------------------------------------------- generic

TEST(FlatLayout, RoundTripsForEveryArchitecture) {
  const DataPair data = square_data(3, 9);
  Rng rng(9);
  for (Architecture a : {Architecture::Linear, Architecture::Residual, Architecture::Nonlinear}) {
    const Net net = random_net(a, 3, 2, 2, data, rng);
    const Vector p = flatten(net);
    EXPECT_EQ(p.size(), parameter_count(net));
    EXPECT_EQ(flatten(with_parameters(net, p)), p);
    EXPECT_EQ(gradient(net, data).values.size(), p.size());
    EXPECT_THROW(with_parameters(net, Vector::Zero(p.size() + 1)), DimensionError);
  }
}
