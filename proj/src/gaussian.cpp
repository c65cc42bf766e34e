#include "eplab/gaussian.hpp"

#include "eplab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace eplab {

GaussianDensity1D::GaussianDensity1D(NaturalParams1D params) : params_(params) {
  if (!(params.precision > 0.0) || !std::isfinite(params.precision) ||
      !std::isfinite(params.shift)) {
    throw NotADensityError("precision must be positive and finite, got " +
                           std::to_string(params.precision));
  }
}

double GaussianDensity1D::sd() const { return 1.0 / std::sqrt(params_.precision); }

std::pair<double, double> to_moments(const GaussianDensity1D& g) {
  return {g.mean(), g.variance()};
}

GaussianDensity1D from_moments(double mean, double variance) {
  if (!(variance > 0.0)) {
    throw DomainError("variance must be positive, got " + std::to_string(variance));
  }
  const double precision = 1.0 / variance;
  return GaussianDensity1D({precision, mean * precision});
}

double kl_gaussian(const GaussianDensity1D& q1, const GaussianDensity1D& q2) {
  const double b1 = q1.precision();
  const double b2 = q2.precision();
  const double dm = q1.mean() - q2.mean();
  // (b2 - b1)/b1 - log(b2/b1) written as expm1/log1p-friendly pieces
  const double ratio_m1 = (b2 - b1) / b1;
  return 0.5 * (b2 * dm * dm + ratio_m1 - std::log1p(ratio_m1));
}

double tv_upper_bound(double kl) {
  if (kl < 0.0 || std::isnan(kl)) {
    throw DomainError("KL divergence must be nonnegative");
  }
  return std::sqrt(0.5 * kl);
}

NaturalParams1D cavity_subtract(const NaturalParams1D& total, const NaturalParams1D& part) {
  return total - part;
}

NaturalParamsND::NaturalParamsND(Eigen::MatrixXd q, Eigen::VectorXd r)
    : precision(std::move(q)), shift(std::move(r)) {
  if (precision.rows() != precision.cols() || precision.rows() != shift.size()) {
    throw DimensionMismatch("precision is " + std::to_string(precision.rows()) + "x" +
                            std::to_string(precision.cols()) + " but shift has " +
                            std::to_string(shift.size()) + " entries");
  }
  precision = 0.5 * (precision + precision.transpose()).eval();
}

NaturalParamsND NaturalParamsND::zero(Eigen::Index dim) {
  return {Eigen::MatrixXd::Zero(dim, dim), Eigen::VectorXd::Zero(dim)};
}

NaturalParamsND NaturalParamsND::from_1d(const NaturalParams1D& p) {
  return {Eigen::MatrixXd::Constant(1, 1, p.precision), Eigen::VectorXd::Constant(1, p.shift)};
}

NaturalParams1D NaturalParamsND::as_1d() const {
  if (dim() != 1) throw DimensionMismatch("as_1d on a " + std::to_string(dim()) + "-dim parameter");
  return {precision(0, 0), shift(0)};
}

NaturalParamsND& NaturalParamsND::operator+=(const NaturalParamsND& o) {
  if (o.dim() != dim()) throw DimensionMismatch("natural parameter dimensions differ");
  precision += o.precision;
  shift += o.shift;
  return *this;
}

NaturalParamsND& NaturalParamsND::operator-=(const NaturalParamsND& o) {
  if (o.dim() != dim()) throw DimensionMismatch("natural parameter dimensions differ");
  precision -= o.precision;
  shift -= o.shift;
  return *this;
}

NaturalParamsND operator*(double s, const NaturalParamsND& a) {
  NaturalParamsND out = a;
  out.precision *= s;
  out.shift *= s;
  return out;
}

bool NaturalParamsND::all_finite() const {
  return precision.allFinite() && shift.allFinite();
}

double NaturalParamsND::max_abs() const {
  double m = 0.0;
  if (precision.size() > 0) m = precision.cwiseAbs().maxCoeff();
  if (shift.size() > 0) m = std::max(m, shift.cwiseAbs().maxCoeff());
  return m;
}

NaturalParamsND cavity_subtract(const NaturalParamsND& total, const NaturalParamsND& part) {
  return total - part;
}

double relative_distance(const NaturalParamsND& a, const NaturalParamsND& b) {
  const double scale = b.max_abs();
  const double diff = (a - b).max_abs();
  if (scale == 0.0) return diff;
  return diff / scale;
}

GaussianDensityND::GaussianDensityND(NaturalParamsND params) : params_(std::move(params)) {
  if (!params_.all_finite()) throw NotADensityError("non-finite natural parameters");
  Eigen::LLT<Eigen::MatrixXd> llt(params_.precision);
  if (llt.info() != Eigen::Success) {
    throw NotADensityError("precision matrix is not positive definite");
  }
  mean_ = llt.solve(params_.shift);
  cov_ = llt.solve(Eigen::MatrixXd::Identity(dim(), dim()));
  cov_ = 0.5 * (cov_ + cov_.transpose()).eval();
  log_det_ = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

GaussianDensityND GaussianDensityND::from_moments(const Eigen::VectorXd& mean,
                                                  const Eigen::MatrixXd& cov) {
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
    throw DimensionMismatch("covariance and mean dimensions differ");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (cov + cov.transpose()));
  if (llt.info() != Eigen::Success) {
    throw DomainError("covariance matrix is not positive definite");
  }
  Eigen::MatrixXd q = llt.solve(Eigen::MatrixXd::Identity(mean.size(), mean.size()));
  Eigen::VectorXd r = q * mean;
  return GaussianDensityND(NaturalParamsND(std::move(q), std::move(r)));
}

double kl_gaussian_nd(const GaussianDensityND& q1, const GaussianDensityND& q2) {
  if (q1.dim() != q2.dim()) {
    throw DimensionMismatch("KL between Gaussians of dimension " + std::to_string(q1.dim()) +
                            " and " + std::to_string(q2.dim()));
  }
  const Eigen::VectorXd dm = q1.mean() - q2.mean();
  const Eigen::MatrixXd& p2 = q2.params().precision;
  const double quad = dm.dot(p2 * dm);
  const double trace = (p2 * q1.covariance()).trace();
  const double d = static_cast<double>(q1.dim());
  const double kl = 0.5 * (quad + trace - d - (q2.log_det_precision() - q1.log_det_precision()));
  // rounding can push an exact zero slightly negative
  return std::max(kl, 0.0);
}

double min_precision_eigenvalue(const NaturalParamsND& p) {
  if (p.dim() == 1) return p.precision(0, 0);
  if (p.dim() == 2) {
    const double a = p.precision(0, 0), b = p.precision(0, 1), c = p.precision(1, 1);
    const double half_tr = 0.5 * (a + c);
    const double disc = std::hypot(0.5 * (a - c), b);
    return half_tr - disc;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p.precision, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace eplab
