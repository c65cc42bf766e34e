#include "eplab/sites.hpp"

#include "eplab/errors.hpp"
#include "eplab/special.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <numbers>
#include <random>

namespace eplab {

namespace {

// sigma(x) * sigma(-x) without cancellation
double logistic_variance(double x) {
  return special::logistic(x) * special::logistic(-x);
}

// Derivatives 3 and 4 of softplus(x).
double softplus_d3(double x) {
  return logistic_variance(x) * (special::logistic(-x) - special::logistic(x));
}

double softplus_d4(double x) {
  const double s = special::logistic(x);
  return logistic_variance(x) * (1.0 - 6.0 * s + 6.0 * s * s);
}

// max |s(1-s)(1-2s)| over s in [0,1]
constexpr double kLogisticK3 = 0.096225044864937627;  // 1 / (6 sqrt 3)
constexpr double kLogisticK4 = 0.125;

}  // namespace

SiteModel1D gaussian_site(double gamma, double alpha) {
  SiteModel1D s;
  s.name = "gaussian(" + std::to_string(gamma) + "," + std::to_string(alpha) + ")";
  s.phi = [gamma, alpha](double x) { return 0.5 * gamma * x * x - alpha * x; };
  s.d1 = [gamma, alpha](double x) { return gamma * x - alpha; };
  s.d2 = [gamma](double) { return gamma; };
  s.d3 = [](double) { return 0.0; };
  s.d4 = [](double) { return 0.0; };
  s.meta = {0.0, 0.0, 0.0};
  s.closed_form = GaussianForm{gamma, alpha, 0.0};
  return s;
}

SiteModel1D logit_site() {
  SiteModel1D s;
  s.name = "logit";
  s.phi = [](double x) { return special::softplus(-x); };
  s.d1 = [](double x) { return -special::logistic(-x); };
  s.d2 = [](double x) { return logistic_variance(x); };
  s.d3 = [](double x) { return softplus_d3(x); };
  s.d4 = [](double x) { return softplus_d4(x); };
  s.meta = {0.25, kLogisticK3, kLogisticK4};
  return s;
}

SiteModel1D double_logistic_site(double scale) {
  if (!(scale > 0.0)) throw DomainError("double-logistic scale must be positive");
  const double c = scale;
  SiteModel1D s;
  s.name = "double_logistic(" + std::to_string(scale) + ")";
  s.phi = [c](double x) { return special::softplus(c * x) + special::softplus(-c * x); };
  s.d1 = [c](double x) { return c * std::tanh(0.5 * c * x); };
  s.d2 = [c](double x) { return 2.0 * c * c * logistic_variance(c * x); };
  s.d3 = [c](double x) { return 2.0 * c * c * c * softplus_d3(c * x); };
  s.d4 = [c](double x) { return 2.0 * c * c * c * c * softplus_d4(c * x); };
  s.meta = {0.5 * c * c, 2.0 * c * c * c * kLogisticK3, 2.0 * c * c * c * c * kLogisticK4};
  return s;
}

SiteModel1D probit_site(int y) {
  if (y != 1 && y != -1) throw DomainError("probit response must be +1 or -1");
  const double yy = y;
  SiteModel1D s;
  s.name = y > 0 ? "probit(+1)" : "probit(-1)";
  s.phi = [yy](double a) { return -special::log_normal_cdf(yy * a); };
  s.d1 = [yy](double a) { return -yy * special::inverse_mills_ratio(yy * a); };
  s.d2 = [yy](double a) {
    const double z = yy * a;
    const double lam = special::inverse_mills_ratio(z);
    return lam * (z + lam);
  };
  s.meta.curvature_range = 1.0;
  s.closed_form = ProbitForm{yy};
  return s;
}

SiteModel1D cauchy_site(double y) {
  SiteModel1D s;
  s.name = "cauchy(" + std::to_string(y) + ")";
  const double log_pi = std::log(std::numbers::pi);
  s.phi = [y, log_pi](double a) {
    const double u = y - a;
    return std::log1p(u * u) + log_pi;
  };
  s.d1 = [y](double a) {
    const double u = y - a;
    return -2.0 * u / (1.0 + u * u);
  };
  s.d2 = [y](double a) {
    const double u = y - a;
    const double w = 1.0 + u * u;
    return 2.0 * (1.0 - u * u) / (w * w);
  };
  s.d3 = [y](double a) {
    const double u = y - a;
    const double w = 1.0 + u * u;
    return -4.0 * u * (u * u - 3.0) / (w * w * w);
  };
  // phi'' ranges over [-1/4, 2]
  s.meta.curvature_range = 2.25;
  return s;
}

SiteModel1D affine_site(const SiteModel1D& site, double slope, double offset) {
  SiteModel1D s;
  s.name = site.name + "@(" + std::to_string(slope) + "x+" + std::to_string(offset) + ")";
  auto at = [slope, offset](double x) { return slope * x + offset; };
  s.phi = [f = site.phi, at](double x) { return f(at(x)); };
  s.d1 = [f = site.d1, at, slope](double x) { return slope * f(at(x)); };
  s.d2 = [f = site.d2, at, slope](double x) { return slope * slope * f(at(x)); };
  if (site.d3) {
    s.d3 = [f = site.d3, at, slope](double x) { return slope * slope * slope * f(at(x)); };
  }
  if (site.d4) {
    s.d4 = [f = site.d4, at, slope](double x) { return slope * slope * slope * slope * f(at(x)); };
  }
  const double a = std::abs(slope);
  if (site.meta.curvature_range) s.meta.curvature_range = *site.meta.curvature_range * a * a;
  if (site.meta.k3) s.meta.k3 = *site.meta.k3 * a * a * a;
  if (site.meta.k4) s.meta.k4 = *site.meta.k4 * a * a * a * a;
  if (const auto* g = std::get_if<GaussianForm>(&site.closed_form)) {
    // gamma/2 (a x + b)^2 - alpha (a x + b) + c
    s.closed_form = GaussianForm{g->gamma * slope * slope, g->alpha * slope - g->gamma * slope * offset,
                                 0.5 * g->gamma * offset * offset - g->alpha * offset + g->constant};
  } else if (const auto* p = std::get_if<ProbitForm>(&site.closed_form); p && offset == 0.0 &&
                                                                          std::abs(slope) == 1.0) {
    s.closed_form = ProbitForm{p->y * slope};
  }
  return s;
}

SiteModelND compose_linear(const SiteModel1D& site, const Eigen::VectorXd& regressor) {
  if (!regressor.allFinite()) throw DomainError("regressor has non-finite entries");
  SiteModelND s;
  s.name = "linear(" + site.name + ")";
  s.dim = regressor.size();
  s.phi = [f = site.phi, v = regressor](const Eigen::VectorXd& x) { return f(v.dot(x)); };
  s.grad = [f = site.d1, v = regressor](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return f(v.dot(x)) * v;
  };
  s.hess = [f = site.d2, v = regressor](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
    return f(v.dot(x)) * (v * v.transpose());
  };
  s.structure = RankOneForm{site, regressor};
  return s;
}

SiteModelND mixture_site_2d(double y) {
  SiteModelND s;
  s.name = "mixture2d(" + std::to_string(y) + ")";
  s.dim = 2;
  // component log-weights a_k = log(1/2) + log N(y; x_k, 1)
  auto log_terms = [y](const Eigen::VectorXd& x) {
    const double half = std::log(0.5);
    return std::array<double, 2>{half + special::log_normal_pdf(y - x(0)),
                                 half + special::log_normal_pdf(y - x(1))};
  };
  s.phi = [log_terms](const Eigen::VectorXd& x) {
    const auto a = log_terms(x);
    return -special::log_sum_exp(a[0], a[1]);
  };
  auto responsibilities = [log_terms](const Eigen::VectorXd& x) {
    const auto a = log_terms(x);
    const double lse = special::log_sum_exp(a[0], a[1]);
    return Eigen::Vector2d(std::exp(a[0] - lse), std::exp(a[1] - lse));
  };
  s.grad = [y, responsibilities](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    const Eigen::Vector2d rho = responsibilities(x);
    return Eigen::Vector2d(-rho(0) * (y - x(0)), -rho(1) * (y - x(1)));
  };
  s.hess = [y, responsibilities](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
    const Eigen::Vector2d rho = responsibilities(x);
    const Eigen::Vector2d u(y - x(0), y - x(1));
    Eigen::Matrix2d h;
    for (int j = 0; j < 2; ++j) {
      for (int k = 0; k < 2; ++k) {
        h(j, k) = rho(j) * rho(k) * u(j) * u(k);
      }
      h(j, j) += rho(j) * (1.0 - u(j) * u(j));
    }
    return h;
  };
  s.structure = MixtureForm{y};
  return s;
}

SiteModelND gaussian_site_nd(const NaturalParamsND& params) {
  SiteModelND s;
  s.name = "gaussian_nd";
  s.dim = params.dim();
  s.phi = [p = params](const Eigen::VectorXd& x) {
    return 0.5 * x.dot(p.precision * x) - p.shift.dot(x);
  };
  s.grad = [p = params](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return p.precision * x - p.shift;
  };
  s.hess = [p = params](const Eigen::VectorXd&) -> Eigen::MatrixXd { return p.precision; };
  s.structure = GaussianFormND{params};
  return s;
}

SiteModelND as_nd(const SiteModel1D& site) {
  return compose_linear(site, Eigen::VectorXd::Ones(1));
}

SiteAudit audit_derivatives(const SiteModel1D& site, const std::vector<double>& points,
                            double rel_tol) {
  SiteAudit audit;
  audit.site = site.name;
  constexpr double h1 = 1e-4;
  constexpr double h2 = 1e-3;
  for (double x : points) {
    const double d1 = site.d1(x);
    const double fd1 = (site.phi(x + h1) - site.phi(x - h1)) / (2.0 * h1);
    const double e1 = std::abs(d1 - fd1) / (1.0 + std::abs(d1));
    audit.max_d1_discrepancy = std::max(audit.max_d1_discrepancy, e1);
    if (!(e1 <= rel_tol)) audit.failures.push_back({site.name, "d1", {x}, e1, rel_tol});

    const double d2 = site.d2(x);
    const double fd2 = (site.phi(x + h2) - 2.0 * site.phi(x) + site.phi(x - h2)) / (h2 * h2);
    const double e2 = std::abs(d2 - fd2) / (1.0 + std::abs(d2));
    audit.max_d2_discrepancy = std::max(audit.max_d2_discrepancy, e2);
    if (!(e2 <= rel_tol)) audit.failures.push_back({site.name, "d2", {x}, e2, rel_tol});
  }
  return audit;
}

SiteAudit audit_derivatives(const SiteModelND& site, const std::vector<Eigen::VectorXd>& points,
                            double rel_tol) {
  SiteAudit audit;
  audit.site = site.name;
  constexpr double h1 = 1e-4;
  constexpr double h2 = 1e-3;
  const Eigen::Index d = site.dim;
  for (const auto& x : points) {
    const std::vector<double> where(x.data(), x.data() + x.size());
    const Eigen::VectorXd g = site.grad(x);
    const Eigen::MatrixXd h = site.hess(x);
    for (Eigen::Index j = 0; j < d; ++j) {
      const Eigen::VectorXd ej = Eigen::VectorXd::Unit(d, j);
      const double fd = (site.phi(x + h1 * ej) - site.phi(x - h1 * ej)) / (2.0 * h1);
      const double e = std::abs(g(j) - fd) / (1.0 + std::abs(g(j)));
      audit.max_d1_discrepancy = std::max(audit.max_d1_discrepancy, e);
      if (!(e <= rel_tol)) audit.failures.push_back({site.name, "grad", where, e, rel_tol});
      for (Eigen::Index k = 0; k < d; ++k) {
        const Eigen::VectorXd ek = Eigen::VectorXd::Unit(d, k);
        const double fd2 = (site.phi(x + h2 * ej + h2 * ek) - site.phi(x + h2 * ej - h2 * ek) -
                            site.phi(x - h2 * ej + h2 * ek) + site.phi(x - h2 * ej - h2 * ek)) /
                           (4.0 * h2 * h2);
        const double e2 = std::abs(h(j, k) - fd2) / (1.0 + std::abs(h(j, k)));
        audit.max_d2_discrepancy = std::max(audit.max_d2_discrepancy, e2);
        if (!(e2 <= rel_tol)) audit.failures.push_back({site.name, "hess", where, e2, rel_tol});
      }
    }
  }
  return audit;
}

std::vector<double> audit_points(std::size_t count, double lo, double hi, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> pts(count);
  for (auto& p : pts) p = u(rng);
  return pts;
}

std::vector<Eigen::VectorXd> audit_points_nd(std::size_t count, Eigen::Index dim, double lo,
                                             double hi, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Eigen::VectorXd> pts(count, Eigen::VectorXd(dim));
  for (auto& p : pts) {
    for (Eigen::Index j = 0; j < dim; ++j) p(j) = u(rng);
  }
  return pts;
}

double min_curvature(const SiteModel1D& site, double lo, double hi, std::size_t points) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < points; ++k) {
    const double x = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(points - 1);
    m = std::min(m, site.d2(x));
  }
  return m;
}

}  // namespace eplab
