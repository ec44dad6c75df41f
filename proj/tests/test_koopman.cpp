#include <doctest.h>

#include <cmath>
#include <random>

#include "koopred/baselines.hpp"
#include "koopred/errors.hpp"
#include "koopred/koopman.hpp"
#include "koopred/vb.hpp"

using namespace koopred;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

dict::Dictionary identity_dictionary(int n) {
  dict::Dictionary d;
  d.state_dim = n;
  for (int i = 0; i < n; ++i) {
    d.observables.push_back(dict::Identity{i});
    d.output_indices.push_back(i);
  }
  return d;
}

koopman::KoopmanModel scalar_model(double a, koopman::Method method = koopman::Method::I) {
  MatrixXd K(1, 1);
  K << a;
  return koopman::make_model(identity_dictionary(1), K, method);
}

}  // namespace

TEST_SUITE("koopman") {

TEST_CASE("identity dynamics map a state to itself") {
  const auto model = koopman::make_model(identity_dictionary(3),
                                         MatrixXd::Identity(3, 3), koopman::Method::I);
  const Eigen::Vector3d x(1.5, -2.0, 0.25);
  const auto step = koopman::one_step(model, x, VectorXd());
  CHECK(step.x_next == x);
}

TEST_CASE("a zero operator maps everything to zero") {
  const auto model = koopman::make_model(identity_dictionary(2), MatrixXd::Zero(2, 2),
                                         koopman::Method::II);
  const auto step = koopman::one_step(model, Eigen::Vector2d(3.0, 4.0), VectorXd());
  CHECK(step.x_next.isZero(0.0));
}

TEST_CASE("a fitted scalar system predicts its decay rate") {
  const int m = 40;
  MatrixXd X(m, 1), X_next(m, 1);
  double x = 1.0;
  for (int k = 0; k < m; ++k) {
    X(k, 0) = x;
    x *= 0.9;
    X_next(k, 0) = x;
  }
  const MatrixXd K = baselines::edmd_pinv(X, X_next);
  const auto model = koopman::make_model(identity_dictionary(1), K, koopman::Method::I);
  VectorXd x0(1);
  x0 << 1.0;
  const auto step = koopman::one_step(model, x0, VectorXd());
  CHECK(step.x_next(0) == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("one_step rejects dimension mismatches") {
  const auto model = scalar_model(0.5);
  CHECK_THROWS_AS(koopman::one_step(model, Eigen::Vector2d(1, 2), VectorXd()),
                  ConfigError);
  CHECK_THROWS_AS(koopman::one_step(model, VectorXd::Ones(1), VectorXd::Ones(1)),
                  ConfigError);
}

TEST_CASE("a one-step rollout equals one_step exactly") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  MatrixXd K(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) K(i, j) = 0.3 * gauss(rng);
  const auto model = koopman::make_model(identity_dictionary(3), K, koopman::Method::I);
  const Eigen::Vector3d x0(0.4, -1.0, 2.0);
  const auto step = koopman::one_step(model, x0, VectorXd());
  const MatrixXd traj = koopman::rollout(model, x0, MatrixXd(), 1);
  CHECK(traj.row(0).transpose() == step.x_next);
}

TEST_CASE("identity dynamics roll out to a constant trajectory") {
  const auto model = koopman::make_model(identity_dictionary(2),
                                         MatrixXd::Identity(2, 2), koopman::Method::I);
  const Eigen::Vector2d x0(1.0, -2.0);
  const MatrixXd traj = koopman::rollout(model, x0, MatrixXd(), 20);
  for (int k = 0; k < 20; ++k) CHECK(traj.row(k).transpose() == x0);
}

TEST_CASE("a stable scalar model decays geometrically") {
  const auto model = scalar_model(0.9);
  VectorXd x0(1);
  x0 << 1.0;
  const MatrixXd traj = koopman::rollout(model, x0, MatrixXd(), 50);
  for (int k = 0; k < 50; ++k)
    CHECK(traj(k, 0) == doctest::Approx(std::pow(0.9, k + 1)).epsilon(1e-6));
}

TEST_CASE("rollout reports the divergence step") {
  const auto model = scalar_model(1e100);
  VectorXd x0(1);
  x0 << 1.0;
  try {
    koopman::rollout(model, x0, MatrixXd(), 10);
    FAIL("expected divergence");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("relift demands full-state outputs") {
  dict::Dictionary d = identity_dictionary(2);
  d.output_indices = {0};  // partial output
  const auto model = koopman::make_model(d, MatrixXd::Identity(2, 2), koopman::Method::I);
  CHECK_THROWS_AS(koopman::rollout(model, Eigen::Vector2d(1, 1), MatrixXd(), 3, true),
                  ConfigError);
}

TEST_CASE("nmse basics") {
  VectorXd t(4);
  t << 1, 2, 3, 4;
  CHECK(koopman::nmse(t, t) == 0.0);
  CHECK(koopman::nmse(t, VectorXd::Constant(4, t.mean())) ==
        doctest::Approx(1.0).epsilon(1e-15));

  VectorXd a(2), b(2);
  a << 0, 2;
  b << 1, 1;
  CHECK(koopman::nmse(a, b) == doctest::Approx(1.0).epsilon(1e-15));

  CHECK_THROWS_AS(koopman::nmse(VectorXd::Constant(3, 2.0), VectorXd::Zero(3)),
                  DataError);
}

TEST_CASE("nmse is invariant under shared affine rescaling") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> gauss(0.0, 1.0);
  VectorXd t(50), p(50);
  for (int i = 0; i < 50; ++i) {
    t(i) = gauss(rng);
    p(i) = t(i) + 0.3 * gauss(rng);
  }
  const double base = koopman::nmse(t, p);
  for (double scale : {0.5, 3.0, 100.0}) {
    for (double shift : {-2.0, 0.0, 7.5}) {
      const VectorXd ts = scale * t.array() + shift;
      const VectorXd ps = scale * p.array() + shift;
      CHECK(koopman::nmse(ts, ps) == doctest::Approx(base).epsilon(1e-10));
    }
  }
}

TEST_CASE("clipped coefficients leak at most clip * |mu| * norm") {
  // fit a sparse problem and bound the contribution of discarded columns
  std::mt19937_64 rng(33);
  std::normal_distribution<double> gauss(0.0, 1.0);
  MatrixXd Phi(80, 6);
  for (int i = 0; i < 80; ++i)
    for (int j = 0; j < 6; ++j) Phi(i, j) = gauss(rng);
  VectorXd w = VectorXd::Zero(6);
  w(2) = 2.0;
  VectorXd t = Phi * w;
  for (int i = 0; i < 80; ++i) t(i) += 0.02 * gauss(rng);

  const vb::Priors priors;
  const auto s = vb::fit_target(Phi, t, priors);
  for (int j = 0; j < 6; ++j) {
    if (s.gamma_hat(j) <= priors.gamma_clip) {
      const double contribution = std::abs(s.gamma_hat(j) * s.mu(j)) * Phi.col(j).norm();
      CHECK(contribution <=
            priors.gamma_clip * std::abs(s.mu(j)) * Phi.col(j).norm() * (1 + 1e-12));
    }
  }
}

TEST_CASE("model JSON round trip is bit-exact") {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> gauss(0.0, 1.0);
  dict::Dictionary d = identity_dictionary(2);
  dict::GaussianRbf g;
  g.center = Eigen::Vector2d(0.017, -1.33);
  g.exponent_coeff = 0.731;
  d.observables.push_back(g);
  d.n_inputs = 1;

  MatrixXd K(4, 3);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) K(i, j) = gauss(rng);
  VectorXd rho(3);
  rho << 1.25e6, 3.5, 1e-7;
  MatrixXd Gamma = MatrixXd::Constant(4, 3, 0.5);
  Gamma(0, 0) = 1e-8;
  Gamma(3, 2) = 1.0 - 1e-8;

  const auto model = koopman::make_model(d, K, koopman::Method::IV, rho, Gamma);
  const auto back = koopman::model_from_json(koopman::to_json(model));
  CHECK(back.K_F_hat == model.K_F_hat);
  CHECK(back.rho_hats == model.rho_hats);
  CHECK(back.Gamma == model.Gamma);
  CHECK(back.C == model.C);
  CHECK(back.method == model.method);
}

TEST_CASE("selection matrix has one unit entry per output row") {
  dict::Dictionary d = identity_dictionary(3);
  dict::GaussianRbf g;
  g.center = Eigen::Vector3d::Zero();
  d.observables.push_back(g);
  const MatrixXd C = koopman::selection_matrix(d);
  CHECK(C.rows() == 3);
  CHECK(C.cols() == 4);
  for (int r = 0; r < 3; ++r) {
    CHECK(C.row(r).sum() == 1.0);
    CHECK(C(r, r) == 1.0);
  }
}

}  // TEST_SUITE
