#pragma once

#include <span>

namespace eplab::special {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2 pi))
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

/// log(1 + e^x) without overflow; for x < -30 this is -x + log(1 + e^x)
/// evaluated as the branch for negative arguments.
double softplus(double x);

/// Logistic function 1 / (1 + e^-x).
double logistic(double x);

/// log of the standard normal density.
double log_normal_pdf(double z);

/// log Phi(z). Uses erfc for z >= -8 and the Laplace continued fraction for
/// the Mills ratio below that.
double log_normal_cdf(double z);

/// Inverse Mills ratio N(z) / Phi(z), stable for large negative z.
double inverse_mills_ratio(double z);

double log_sum_exp(std::span<const double> values);
double log_sum_exp(double a, double b);

}  // namespace eplab::special
