#include "eplab/data.hpp"

#include "eplab/errors.hpp"

#include <array>
#include <cmath>
#include <random>

namespace eplab {

std::string to_string(RegressionModel m) {
  switch (m) {
    case RegressionModel::probit: return "probit";
    case RegressionModel::cauchy: return "cauchy";
    case RegressionModel::logit: return "logit";
    case RegressionModel::gaussian: return "gaussian";
  }
  return "unknown";
}

RegressionModel regression_model_from_string(const std::string& name) {
  if (name == "probit") return RegressionModel::probit;
  if (name == "cauchy") return RegressionModel::cauchy;
  if (name == "logit") return RegressionModel::logit;
  if (name == "gaussian") return RegressionModel::gaussian;
  throw DomainError("unknown regression model '" + name + "'");
}

Eigen::VectorXd cubic_bspline_basis(double t) {
  constexpr int kDegree = 3;
  constexpr int kBasis = 4;
  static constexpr std::array<double, kBasis + kDegree + 1> knots{0, 0, 0, 0, 1, 1, 1, 1};

  // Cox-de Boor: start from degree-0 indicators on [k_i, k_{i+1}); the last
  // nonempty span is closed so that t = 1 is covered.
  std::array<double, knots.size() - 1> b{};
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    const bool in_span = knots[i] <= t && t < knots[i + 1];
    const bool right_end = t == knots.back() && knots[i] < knots[i + 1] && knots[i + 1] == knots.back();
    b[i] = (in_span || right_end) ? 1.0 : 0.0;
  }
  for (int p = 1; p <= kDegree; ++p) {
    for (std::size_t i = 0; i + p + 1 < knots.size(); ++i) {
      double left = 0.0;
      double right = 0.0;
      const double dl = knots[i + p] - knots[i];
      const double dr = knots[i + p + 1] - knots[i + 1];
      if (dl > 0.0) left = (t - knots[i]) / dl * b[i];
      if (dr > 0.0) right = (knots[i + p + 1] - t) / dr * b[i + 1];
      b[i] = left + right;
    }
  }
  Eigen::VectorXd out(kBasis);
  for (int i = 0; i < kBasis; ++i) out(i) = b[i];
  return out;
}

RegressionDataset generate_regression_data(RegressionModel model, std::size_t n,
                                           std::uint64_t seed) {
  if (n < 4) throw DomainError("need at least 4 locations for 4 basis functions");
  RegressionDataset data;
  data.model = model;
  data.seed = seed;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  data.alpha_true.resize(4);
  for (int j = 0; j < 4; ++j) data.alpha_true(j) = normal(rng);

  std::cauchy_distribution<double> cauchy(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  data.regressors.reserve(n);
  data.responses.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(n - 1);
    Eigen::VectorXd x = cubic_bspline_basis(t);
    const double eta = x.dot(data.alpha_true);
    double y = 0.0;
    switch (model) {
      case RegressionModel::probit: y = (eta + normal(rng)) >= 0.0 ? 1.0 : -1.0; break;
      case RegressionModel::cauchy: y = eta + cauchy(rng); break;
      case RegressionModel::logit:
        y = unif(rng) < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : -1.0;
        break;
      case RegressionModel::gaussian: y = eta + normal(rng); break;
    }
    data.regressors.push_back(std::move(x));
    data.responses.push_back(y);
  }
  return data;
}

std::vector<SiteModelND> regression_sites(const RegressionDataset& data, bool with_prior) {
  std::vector<SiteModelND> sites;
  sites.reserve(data.size() + 1);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double y = data.responses[i];
    SiteModel1D s;
    switch (data.model) {
      case RegressionModel::probit: s = probit_site(y > 0 ? 1 : -1); break;
      case RegressionModel::cauchy: s = cauchy_site(y); break;
      case RegressionModel::logit: s = affine_site(logit_site(), y, 0.0); break;
      // unit-variance Gaussian noise: phi(a) = (a - y)^2 / 2 up to a constant
      case RegressionModel::gaussian: s = gaussian_site(1.0, y); break;
    }
    sites.push_back(compose_linear(s, data.regressors[i]));
  }
  if (with_prior) {
    const Eigen::Index d = data.regressors.empty() ? 4 : data.regressors.front().size();
    sites.push_back(gaussian_site_nd(
        NaturalParamsND(Eigen::MatrixXd::Identity(d, d), Eigen::VectorXd::Zero(d))));
  }
  return sites;
}

ScalarLogitDataset generate_scalar_logit_data(std::size_t n, std::uint64_t seed) {
  ScalarLogitDataset data;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  data.theta_true = normal(rng);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = normal(rng);
    const double p = 1.0 / (1.0 + std::exp(-data.theta_true * t));
    data.covariates.push_back(t);
    data.labels.push_back(unif(rng) < p ? 1 : -1);
  }
  return data;
}

std::vector<SiteModel1D> scalar_logit_sites(const ScalarLogitDataset& data) {
  std::vector<SiteModel1D> sites;
  sites.reserve(data.covariates.size() + 1);
  for (std::size_t i = 0; i < data.covariates.size(); ++i) {
    sites.push_back(affine_site(logit_site(), data.labels[i] * data.covariates[i], 0.0));
  }
  sites.push_back(gaussian_site(1.0, 0.0));
  return sites;
}

std::vector<double> generate_mixture_data(std::size_t n, const Eigen::Vector2d& means,
                                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution pick(0.5);
  std::vector<double> ys(n);
  for (auto& y : ys) {
    const double m = pick(rng) ? means(0) : means(1);
    y = m + normal(rng);
  }
  return ys;
}

nlohmann::json to_json(const RegressionDataset& data) {
  nlohmann::json j;
  j["model"] = to_string(data.model);
  j["seed"] = data.seed;
  j["n"] = data.size();
  j["alpha_true"] = std::vector<double>(data.alpha_true.data(),
                                        data.alpha_true.data() + data.alpha_true.size());
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& x : data.regressors) rows.push_back(std::vector<double>(x.data(), x.data() + x.size()));
  j["regressors"] = std::move(rows);
  j["responses"] = data.responses;
  return j;
}

}  // namespace eplab
