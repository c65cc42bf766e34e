#pragma once

// Synthetic datasets for the regression and mixture experiments.

#include "eplab/sites.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace eplab {

enum class RegressionModel { probit, cauchy, logit, gaussian };

std::string to_string(RegressionModel m);
/// Throws DomainError for unknown names.
RegressionModel regression_model_from_string(const std::string& name);

struct RegressionDataset {
  RegressionModel model = RegressionModel::probit;
  std::uint64_t seed = 0;
  std::vector<Eigen::VectorXd> regressors;
  std::vector<double> responses;
  Eigen::VectorXd alpha_true;

  std::size_t size() const { return responses.size(); }
};

/// The 4 cubic B-spline basis functions (open uniform knots on [0, 1]) at t.
Eigen::VectorXd cubic_bspline_basis(double t);

/// Regressors are the cubic B-spline basis at n equispaced locations in
/// [0, 1]; alpha ~ N(0, I4); responses from the model's noise law. Throws
/// DomainError for n < 4.
RegressionDataset generate_regression_data(RegressionModel model, std::size_t n,
                                           std::uint64_t seed);

/// Likelihood sites for each observation, followed by the N(0, I) prior
/// site when with_prior is set.
std::vector<SiteModelND> regression_sites(const RegressionDataset& data, bool with_prior = true);

/// One-parameter logistic regression: t_i ~ N(0, 1), y_i ~ Bernoulli(sigma(theta t_i)).
struct ScalarLogitDataset {
  std::vector<double> covariates;
  std::vector<int> labels;
  double theta_true = 0.0;
};

ScalarLogitDataset generate_scalar_logit_data(std::size_t n, std::uint64_t seed);

/// Sites softplus(-y_i t_i x), followed by a N(0, 1) prior site.
std::vector<SiteModel1D> scalar_logit_sites(const ScalarLogitDataset& data);

/// n draws from 1/2 N(means[0], 1) + 1/2 N(means[1], 1).
std::vector<double> generate_mixture_data(std::size_t n, const Eigen::Vector2d& means,
                                          std::uint64_t seed);

nlohmann::json to_json(const RegressionDataset& data);

}  // namespace eplab
