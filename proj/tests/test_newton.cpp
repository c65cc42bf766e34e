#include "eplab/data.hpp"
#include "eplab/errors.hpp"
#include "eplab/newton.hpp"
#include "eplab/sites.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace eplab;

namespace {

// psi = |x|^{4/3}: Newton maps x to -2x
ObjectiveND four_thirds() {
  ObjectiveND o;
  o.dim = 1;
  o.psi = [](const Eigen::VectorXd& x) { return std::pow(std::abs(x(0)), 4.0 / 3.0); };
  o.grad = [](const Eigen::VectorXd& x) {
    return Eigen::VectorXd::Constant(1, (4.0 / 3.0) * std::copysign(std::cbrt(std::abs(x(0))), x(0)));
  };
  o.hess = [](const Eigen::VectorXd& x) {
    return Eigen::MatrixXd::Constant(1, 1, (4.0 / 9.0) * std::pow(std::abs(x(0)), -2.0 / 3.0));
  };
  return o;
}

ObjectiveND quadratic(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  return objective_from_sites(std::vector<SiteModelND>{gaussian_site_nd(NaturalParamsND(a, b))});
}

}  // namespace

TEST(Newton, QuadraticOneStep) {
  const ObjectiveND q1 = objective_from_sites(std::vector<SiteModel1D>{gaussian_site(1.0, 0.0)});
  EXPECT_NEAR(newton_step(q1, Eigen::VectorXd::Constant(1, 5.0))(0), 0.0, 1e-15);
  Eigen::Matrix2d a;
  a << 3.0, 1.0, 1.0, 2.0;
  const Eigen::Vector2d b(1.0, -1.0);
  const auto q2 = quadratic(a, b);
  EXPECT_LT((newton_step(q2, Eigen::Vector2d(7.0, -3.0)) - a.inverse() * b).norm(), 1e-14);
}

TEST(Newton, FourThirdsOscillates) {
  const auto o = four_thirds();
  Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 1.0);
  x = newton_step(o, x);
  EXPECT_NEAR(x(0), -2.0, 1e-12);
  x = newton_step(o, x);
  EXPECT_NEAR(x(0), 4.0, 1e-11);
}

TEST(Newton, FindModeTamesFourThirds) {
  const ModeResult m = find_mode(four_thirds(), Eigen::VectorXd::Constant(1, 1.0), 1e-4);
  EXPECT_TRUE(m.converged);
  EXPECT_LE(std::abs(m.x_star(0)), 1e-3);
  for (std::size_t i = 1; i < m.psi_trace.size(); ++i) EXPECT_LT(m.psi_trace[i], m.psi_trace[i - 1]);
}

TEST(Newton, SingularHessianThrows) {
  const auto o = quadratic(Eigen::MatrixXd::Zero(2, 2), Eigen::Vector2d(1.0, 0.0));
  EXPECT_THROW(newton_step(o, Eigen::Vector2d::Zero()), SingularHessianError);
}

TEST(Newton, LogitSumSymmetricOffsets) {
  // phi(x - a) + phi(a - x) is even about a; two such pairs at -1.5 and 0.5
  // make the sum even about -0.5
  std::vector<SiteModel1D> s;
  for (double a : {-1.5, 0.5}) {
    s.push_back(affine_site(logit_site(), 1.0, -a));
    s.push_back(affine_site(logit_site(), -1.0, a));
  }
  const ModeResult m = find_mode(objective_from_sites(s), Eigen::VectorXd::Constant(1, -3.0));
  EXPECT_TRUE(m.converged);
  EXPECT_NEAR(m.x_star(0), -0.5, 1e-9);
}

TEST(Newton, InferenceStepMatchesNewtonStep) {
  std::vector<SiteModelND> sites;
  for (double y : {0.3, -1.2, 2.2}) sites.push_back(compose_linear(cauchy_site(y), Eigen::Vector2d(1.0, 0.5)));
  sites.push_back(gaussian_site_nd(NaturalParamsND(Eigen::Matrix2d::Identity(), Eigen::Vector2d::Zero())));
  const auto obj = objective_from_sites(sites);
  const GaussianDensityND g = GaussianDensityND::from_moments(Eigen::Vector2d(0.2, 0.1), Eigen::Matrix2d::Identity());
  const GaussianDensityND next = newton_inference_step(obj, g);
  EXPECT_LT((next.mean() - newton_step(obj, g.mean())).norm(), 1e-12);
  EXPECT_LT((next.params().precision - obj.hess(g.mean())).norm(), 1e-14);
}

TEST(Newton, CgaIsFixedPointOfInferenceStep) {
  const auto data = generate_regression_data(RegressionModel::probit, 50, 3);
  const auto obj = objective_from_sites(regression_sites(data));
  const GaussianDensityND c = cga(obj, Eigen::VectorXd::Zero(4));
  const GaussianDensityND n = newton_inference_step(obj, c);
  EXPECT_LT(relative_distance(n.params(), c.params()), 1e-9);
}

TEST(Newton, GaussianTarget) {
  Eigen::Matrix2d a;
  a << 2.0, 0.5, 0.5, 1.0;
  const Eigen::Vector2d b(0.4, -0.3);
  const auto obj = quadratic(a, b);
  const GaussianDensityND c = cga(obj, Eigen::Vector2d(3.0, 3.0));
  EXPECT_LT((c.params().precision - a).norm(), 1e-14);
  EXPECT_LT((c.mean() - a.inverse() * b).norm(), 1e-12);
  const GaussianDensityND one = newton_inference_step(obj, GaussianDensityND::from_moments(Eigen::Vector2d(-5, 2), Eigen::Matrix2d::Identity()));
  EXPECT_LT(relative_distance(one.params(), NaturalParamsND(a, b)), 1e-13);
}

TEST(Newton, CgaPrecisionGrowsLinearly) {
  std::vector<double> eig;
  for (std::size_t n : {50, 100, 200, 400}) {
    const auto obj = objective_from_sites(regression_sites(generate_regression_data(RegressionModel::probit, n, 8)));
    eig.push_back(min_precision_eigenvalue(cga(obj, Eigen::VectorXd::Zero(4)).params()));
    EXPECT_GT(eig.back(), 0.0);
  }
  // the unit prior adds 1; the data part doubles with n
  for (std::size_t i = 1; i < eig.size(); ++i) {
    EXPECT_GT((eig[i] - 1.0) / (eig[i - 1] - 1.0), 1.5);
    EXPECT_LT((eig[i] - 1.0) / (eig[i - 1] - 1.0), 2.5);
  }
}

TEST(Newton, MixtureModesAreExchangeSymmetric) {
  const auto y = generate_mixture_data(20, Eigen::Vector2d(0.0, -2.5), 0);
  std::vector<SiteModelND> sites;
  for (double v : y) sites.push_back(mixture_site_2d(v));
  sites.push_back(gaussian_site_nd(NaturalParamsND(Eigen::Matrix2d::Identity(), Eigen::Vector2d::Zero())));
  const auto obj = objective_from_sites(sites);
  const GaussianDensityND a = cga(obj, Eigen::Vector2d(0.0, -2.5));
  const GaussianDensityND b = cga(obj, Eigen::Vector2d(-2.5, 0.0));
  EXPECT_GT((a.mean() - b.mean()).norm(), 1.0);
  EXPECT_NEAR(a.mean()(0), b.mean()(1), 1e-8);
  EXPECT_NEAR(a.mean()(1), b.mean()(0), 1e-8);
  EXPECT_NEAR(a.covariance()(0, 0), b.covariance()(1, 1), 1e-8);
}

TEST(Newton, SaddlePointRejected) {
  // psi = x0^2 - x1^2 / 2 + x1^4 / 4 has a saddle at the origin
  ObjectiveND o;
  o.dim = 2;
  o.psi = [](const Eigen::VectorXd& x) { return x(0) * x(0) - 0.5 * x(1) * x(1) + 0.25 * std::pow(x(1), 4); };
  o.grad = [](const Eigen::VectorXd& x) {
    return Eigen::Vector2d(2 * x(0), -x(1) + std::pow(x(1), 3)).eval();
  };
  o.hess = [](const Eigen::VectorXd& x) {
    Eigen::Matrix2d h;
    h << 2.0, 0.0, 0.0, -1.0 + 3 * x(1) * x(1);
    return Eigen::MatrixXd(h);
  };
  EXPECT_THROW(cga(o, Eigen::Vector2d(0.0, 0.0)), SaddlePointError);
  // from off the saddle the search finds a minimum at x1 = +-1
  const GaussianDensityND g = cga(o, Eigen::Vector2d(0.3, 0.2));
  EXPECT_NEAR(std::abs(g.mean()(1)), 1.0, 1e-9);
}
