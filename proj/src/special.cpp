#include "eplab/special.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace eplab::special {

namespace {

constexpr double kLowerTailBranch = -8.0;

// Mills ratio R(x) = (1 - Phi(x)) / N(x) for x > 0 via the Laplace continued
// fraction 1/(x + 1/(x + 2/(x + 3/(x + ...)))), evaluated bottom-up.
double mills_ratio(double x) {
  constexpr int kTerms = 120;
  double tail = x;
  for (int k = kTerms; k >= 1; --k) tail = x + k / tail;
  return 1.0 / tail;
}

}  // namespace

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_normal_pdf(double z) { return -0.5 * z * z - kLogSqrt2Pi; }

double log_normal_cdf(double z) {
  if (z >= kLowerTailBranch) {
    if (z > 5.0) return std::log1p(-0.5 * std::erfc(z / std::sqrt(2.0)));
    return std::log(0.5 * std::erfc(-z / std::sqrt(2.0)));
  }
  // Phi(z) = N(z) R(-z)
  return log_normal_pdf(z) + std::log(mills_ratio(-z));
}

double inverse_mills_ratio(double z) {
  if (z >= kLowerTailBranch) return std::exp(log_normal_pdf(z) - log_normal_cdf(z));
  return 1.0 / mills_ratio(-z);
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

double log_sum_exp(double a, double b) {
  const double m = std::max(a, b);
  if (!std::isfinite(m)) return m;
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

}  // namespace eplab::special
