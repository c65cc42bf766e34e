#pragma once

// Brute-force references for the tests: plain trapezoid sums on fine grids,
// in long double, with no shared code path into the library's quadrature.

#include "eplab/sites.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

struct Moments1D {
  double log_z = 0.0;
  double mean = 0.0;
  double variance = 0.0;
};

// Moments of exp(logw(x)) on [lo, hi] by the trapezoid rule. For smooth,
// rapidly decaying integrands the rule converges geometrically in the step.
inline Moments1D trapezoid(const std::function<double(double)>& logw, double lo, double hi,
                           long n = 400001) {
  const long double h = (static_cast<long double>(hi) - lo) / (n - 1);
  std::vector<long double> lw(n);
  long double peak = -INFINITY;
  for (long k = 0; k < n; ++k) {
    lw[k] = logw(static_cast<double>(lo + k * h));
    peak = std::max(peak, lw[k]);
  }
  // two sweeps: mass and mean, then central second moment
  long double z = 0, m1 = 0;
  for (long k = 0; k < n; ++k) {
    const long double w = std::exp(lw[k] - peak) * ((k == 0 || k == n - 1) ? 0.5L : 1.0L);
    z += w;
    m1 += w * (lo + k * h);
  }
  const long double mean = m1 / z;
  long double m2 = 0;
  for (long k = 0; k < n; ++k) {
    const long double w = std::exp(lw[k] - peak) * ((k == 0 || k == n - 1) ? 0.5L : 1.0L);
    const long double d = lo + k * h - mean;
    m2 += w * d * d;
  }
  return {static_cast<double>(peak + std::log(z * h)), static_cast<double>(mean),
          static_cast<double>(m2 / z)};
}

// Hybrid cavity(beta, mu_c) x site, over +-width cavity sds; the cavity
// normalizer is included so that log_z is log E_cavity[exp(-phi)].
inline Moments1D hybrid_1d(const eplab::SiteModel1D& site, double beta, double mu_c,
                           double width = 40.0, long n = 400001) {
  const double sd = 1.0 / std::sqrt(beta);
  auto logw = [&](double x) {
    const double d = x - mu_c;
    return -site.phi(x) - 0.5 * beta * d * d;
  };
  Moments1D m = trapezoid(logw, mu_c - width * sd, mu_c + width * sd, n);
  m.log_z += 0.5 * std::log(beta / (2.0 * M_PI));
  return m;
}

struct Moments2D {
  double log_z = 0.0;
  Eigen::Vector2d mean;
  Eigen::Matrix2d cov;
};

// Tensor-grid trapezoid over a box.
inline Moments2D grid_2d(const std::function<double(const Eigen::Vector2d&)>& logw,
                         const Eigen::Vector2d& lo, const Eigen::Vector2d& hi, int n = 801) {
  const Eigen::Vector2d h = (hi - lo) / (n - 1);
  std::vector<double> lw(static_cast<std::size_t>(n) * n);
  double peak = -INFINITY;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Eigen::Vector2d x(lo(0) + i * h(0), lo(1) + j * h(1));
      lw[i * n + j] = logw(x);
      peak = std::max(peak, lw[i * n + j]);
    }
  }
  long double z = 0, s0 = 0, s1 = 0, s00 = 0, s01 = 0, s11 = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const long double edge = ((i == 0 || i == n - 1) ? 0.5L : 1.0L) * ((j == 0 || j == n - 1) ? 0.5L : 1.0L);
      const long double w = edge * std::exp(static_cast<long double>(lw[i * n + j]) - peak);
      const long double x0 = lo(0) + i * h(0), x1 = lo(1) + j * h(1);
      z += w;
      s0 += w * x0;
      s1 += w * x1;
      s00 += w * x0 * x0;
      s01 += w * x0 * x1;
      s11 += w * x1 * x1;
    }
  }
  Moments2D m;
  m.log_z = static_cast<double>(peak + std::log(z * h(0) * h(1)));
  const long double m0 = s0 / z, m1 = s1 / z;
  m.mean << static_cast<double>(m0), static_cast<double>(m1);
  m.cov << static_cast<double>(s00 / z - m0 * m0), static_cast<double>(s01 / z - m0 * m1),
      static_cast<double>(s01 / z - m0 * m1), static_cast<double>(s11 / z - m1 * m1);
  return m;
}

// Central difference of f at x with step h.
inline double central_difference(const std::function<double(double)>& f, double x, double h = 1e-5) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace oracle
