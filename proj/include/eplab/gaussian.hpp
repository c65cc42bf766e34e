#pragma once

// Gaussian exponential-family arithmetic in natural parameters.
//
// A Gaussian is written N(x | r, beta) ∝ exp(-1/2 beta x^2 + r x): beta is the
// precision and r the linear shift. Site approximations are allowed to carry
// any sign; only a GaussianDensity has to be normalizable.

#include <Eigen/Dense>

#include <utility>

namespace eplab {

struct NaturalParams1D {
  double precision = 0.0;
  double shift = 0.0;

  NaturalParams1D& operator+=(const NaturalParams1D& o) {
    precision += o.precision;
    shift += o.shift;
    return *this;
  }
  NaturalParams1D& operator-=(const NaturalParams1D& o) {
    precision -= o.precision;
    shift -= o.shift;
    return *this;
  }
  friend NaturalParams1D operator+(NaturalParams1D a, const NaturalParams1D& b) { return a += b; }
  friend NaturalParams1D operator-(NaturalParams1D a, const NaturalParams1D& b) { return a -= b; }
  friend NaturalParams1D operator*(double s, const NaturalParams1D& a) {
    return {s * a.precision, s * a.shift};
  }
  friend bool operator==(const NaturalParams1D&, const NaturalParams1D&) = default;
};

class GaussianDensity1D {
 public:
  /// Throws NotADensityError unless precision > 0 and both fields are finite.
  explicit GaussianDensity1D(NaturalParams1D params);

  const NaturalParams1D& params() const { return params_; }
  double precision() const { return params_.precision; }
  double mean() const { return params_.shift / params_.precision; }
  double variance() const { return 1.0 / params_.precision; }
  double sd() const;

 private:
  NaturalParams1D params_;
};

std::pair<double, double> to_moments(const GaussianDensity1D& g);

/// Throws DomainError for variance <= 0.
GaussianDensity1D from_moments(double mean, double variance);

double kl_gaussian(const GaussianDensity1D& q1, const GaussianDensity1D& q2);

/// Pinsker: d_TV <= sqrt(KL / 2). Throws DomainError for negative input.
double tv_upper_bound(double kl);

NaturalParams1D cavity_subtract(const NaturalParams1D& total, const NaturalParams1D& part);

/// Multivariate natural parameters (Q, r). Q is symmetrized on construction.
struct NaturalParamsND {
  Eigen::MatrixXd precision;
  Eigen::VectorXd shift;

  NaturalParamsND() = default;
  NaturalParamsND(Eigen::MatrixXd q, Eigen::VectorXd r);
  static NaturalParamsND zero(Eigen::Index dim);
  static NaturalParamsND from_1d(const NaturalParams1D& p);

  Eigen::Index dim() const { return shift.size(); }
  NaturalParams1D as_1d() const;

  NaturalParamsND& operator+=(const NaturalParamsND& o);
  NaturalParamsND& operator-=(const NaturalParamsND& o);
  friend NaturalParamsND operator+(NaturalParamsND a, const NaturalParamsND& b) { return a += b; }
  friend NaturalParamsND operator-(NaturalParamsND a, const NaturalParamsND& b) { return a -= b; }
  friend NaturalParamsND operator*(double s, const NaturalParamsND& a);

  bool all_finite() const;
  /// Infinity norm over every entry of Q and r.
  double max_abs() const;
};

NaturalParamsND cavity_subtract(const NaturalParamsND& total, const NaturalParamsND& part);

/// ||a - b||_inf / ||b||_inf over all entries; the distance used for
/// convergence, cycle detection and deduplication.
double relative_distance(const NaturalParamsND& a, const NaturalParamsND& b);

class GaussianDensityND {
 public:
  /// Throws NotADensityError when Q is not positive definite.
  explicit GaussianDensityND(NaturalParamsND params);
  static GaussianDensityND from_moments(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov);

  const NaturalParamsND& params() const { return params_; }
  Eigen::Index dim() const { return params_.dim(); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return cov_; }
  double log_det_precision() const { return log_det_; }

 private:
  NaturalParamsND params_;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  double log_det_ = 0.0;
};

/// Throws DimensionMismatch when dimensions differ.
double kl_gaussian_nd(const GaussianDensityND& q1, const GaussianDensityND& q2);

/// Smallest eigenvalue of the (symmetric) precision matrix.
double min_precision_eigenvalue(const NaturalParamsND& p);

}  // namespace eplab
