#include "eplab/tilted.hpp"

#include "eplab/errors.hpp"
#include "eplab/quadrature.hpp"
#include "eplab/special.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <vector>

namespace eplab {

void QuadratureConfig::validate() const {
  if (nodes < 11 || nodes % 2 == 0) throw DomainError("quadrature nodes must be odd and >= 11");
  if (!(tail_width >= 5.0)) throw DomainError("tail_width must be >= 5 cavity sds");
  if (expansion_passes < 0) throw DomainError("expansion_passes must be >= 0");
}

namespace {

constexpr double kRecenterTol = 1e-3;

std::string node_message(const std::string& site, double x) {
  std::ostringstream os;
  os.precision(17);
  os << site << ": non-finite integrand at node x = " << x;
  return os.str();
}

// Hybrid log-density up to a constant: -phi(x) - beta/2 (x - mu_c)^2. With
// beta = 0 the cavity is flat and only the site remains.
struct HybridLogDensity {
  const SiteModel1D& site;
  double beta;
  double mu_c;

  double operator()(double x) const {
    const double p = site.phi(x);
    if (std::isnan(p) || p == -std::numeric_limits<double>::infinity()) {
      throw QuadratureError(node_message(site.name, x));
    }
    const double d = x - mu_c;
    return -p - 0.5 * beta * d * d;
  }
};

struct GhEstimate {
  double mean = 0.0;
  double variance = 0.0;
  double max_log = -std::numeric_limits<double>::infinity();
};

GhEstimate gauss_hermite_estimate(const HybridLogDensity& logw, double c, double s,
                                  const GaussHermiteRule& rule) {
  const std::size_t n = rule.nodes.size();
  std::vector<double> terms(n);
  std::vector<double> xs(n);
  GhEstimate est;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = rule.nodes[k];
    xs[k] = c + std::numbers::sqrt2 * s * t;
    const double lw = logw(xs[k]);
    est.max_log = std::max(est.max_log, lw);
    terms[k] = rule.log_weights[k] + t * t + lw;
  }
  const double lse = special::log_sum_exp(terms);
  double m1 = 0.0;
  double m2 = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double p = std::exp(terms[k] - lse);
    const double d = xs[k] - c;
    m1 += p * d;
    m2 += p * d * d;
  }
  est.mean = c + m1;
  est.variance = m2 - m1 * m1;
  return est;
}

HybridStatistics1D integrate_hybrid(const SiteModel1D& site, double beta, double mu_c, double c0,
                                    double s0, const QuadratureConfig& cfg, bool with_stats) {
  cfg.validate();
  const HybridLogDensity logw{site, beta, mu_c};
  const auto& rule = gauss_hermite_rule(cfg.nodes);

  double c = c0;
  double s = s0;
  double lref = logw(c);
  const int refinements = cfg.center_on == CenterOn::refined ? cfg.expansion_passes : 0;
  for (int pass = 0; pass <= refinements; ++pass) {
    const GhEstimate est = gauss_hermite_estimate(logw, c, s, rule);
    lref = std::max(lref, est.max_log);
    if (pass == refinements) break;
    if (!std::isfinite(est.mean) || !(est.variance > 0.0) || !std::isfinite(est.variance)) break;
    const double moved = std::abs(est.mean - c);
    c = est.mean;
    s = std::sqrt(est.variance);
    lref = std::max(lref, logw(c));
    if (moved < kRecenterTol * s0) break;
  }

  // Panels: +-8 sd around the refined hybrid and around the cavity, out to
  // tail_width sds of either.
  const double w = cfg.tail_width;
  std::vector<double> bp;
  double lo = c - w * s;
  double hi = c + w * s;
  for (int k = -4; k <= 4; ++k) bp.push_back(c + 2.0 * k * s);
  if (beta > 0.0) {
    const double sc = 1.0 / std::sqrt(beta);
    for (int k = -4; k <= 4; ++k) bp.push_back(mu_c + 2.0 * k * sc);
    lo = std::min(lo, mu_c - w * sc);
    hi = std::max(hi, mu_c + w * sc);
  }
  bp.push_back(lo);
  bp.push_back(hi);
  std::sort(bp.begin(), bp.end());
  const double min_gap = 1e-9 * (hi - lo);
  std::vector<double> breaks;
  for (double b : bp) {
    if (b < lo || b > hi) continue;
    if (breaks.empty() || b - breaks.back() > min_gap) breaks.push_back(b);
  }
  if (breaks.back() < hi) breaks.back() = hi;

  bool curvature_positive = true;
  // phi' is accumulated about its value at the center so that Var_h(phi')
  // keeps its digits when it is tiny.
  const double g0 = with_stats ? site.d1(c) : 0.0;
  const std::size_t components = with_stats ? 7 : 3;
  const VectorIntegrand integrand = [&](double x, std::span<double> out) {
    const double lw = logw(x);
    const double wt = std::exp(lw - lref);
    const double d = x - c;
    out[0] = wt;
    out[1] = wt * d;
    out[2] = wt * d * d;
    if (with_stats) {
      if (wt == 0.0) {
        std::fill(out.begin() + 3, out.end(), 0.0);
        return;
      }
      const double g = site.d1(x) - g0;
      const double h = site.d2(x);
      out[3] = wt * g;
      out[5] = wt * h;
      out[6] = wt * g * g;
      if (h + beta > 0.0) {
        out[4] = wt / (h + beta);
      } else {
        out[4] = 0.0;
        curvature_positive = false;
      }
    }
  };
  AdaptiveResult res;
  try {
    res = integrate_adaptive(integrand, components, breaks);
  } catch (const QuadratureError& e) {
    const std::string what = e.what();
    if (what.rfind(site.name, 0) == 0) throw;
    throw QuadratureError(site.name + ": " + what);
  }

  const double z = res.values[0];
  if (!(z > 0.0) || !std::isfinite(z)) {
    throw QuadratureError(site.name + ": hybrid normalizer vanished");
  }
  const double m1 = res.values[1] / z;
  const double var = res.values[2] / z - m1 * m1;
  if (!(var > 0.0) || !std::isfinite(var) || !std::isfinite(m1)) {
    throw DegenerateMomentsError(site.name + ": non-positive hybrid variance");
  }

  HybridStatistics1D out;
  out.moments.mean = c + m1;
  out.moments.variance = var;
  out.moments.log_z = lref + std::log(z);
  if (beta > 0.0) out.moments.log_z += 0.5 * std::log(beta / (2.0 * std::numbers::pi));
  if (with_stats) {
    const double dg = res.values[3] / z;
    out.mean_d1 = g0 + dg;
    out.mean_inverse_curvature = res.values[4] / z;
    out.mean_d2 = res.values[5] / z;
    out.var_d1 = std::max(0.0, res.values[6] / z - dg * dg);
  }
  out.curvature_positive = curvature_positive;
  out.evaluations = res.evaluations + (refinements + 1) * cfg.nodes;
  return out;
}

TiltedMomentsND lift_rank_one(const GaussianDensityND& cavity, const Eigen::VectorXd& v, double m,
                              double s, const TiltedMoments1D& along) {
  const Eigen::VectorXd sv = cavity.covariance() * v;
  TiltedMomentsND out;
  out.log_z = along.log_z;
  out.mean = cavity.mean() + sv * ((along.mean - m) / s);
  out.covariance = cavity.covariance() - sv * sv.transpose() * ((s - along.variance) / (s * s));
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  return out;
}

TiltedMomentsND constant_site(const GaussianDensityND& cavity, double phi0) {
  return {-phi0, cavity.mean(), cavity.covariance()};
}

bool is_flat(const NaturalParamsND& p) { return p.max_abs() == 0.0; }

TiltedMomentsND to_nd(const TiltedMoments1D& m) {
  return {m.log_z, Eigen::VectorXd::Constant(1, m.mean), Eigen::MatrixXd::Constant(1, 1, m.variance)};
}

}  // namespace

HybridStatistics1D hybrid_statistics(const SiteModel1D& site, const GaussianDensity1D& cavity,
                                     const QuadratureConfig& cfg) {
  return integrate_hybrid(site, cavity.precision(), cavity.mean(), cavity.mean(), cavity.sd(), cfg,
                          true);
}

TiltedMoments1D tilted_moments_quadrature(const SiteModel1D& site, const GaussianDensity1D& cavity,
                                          const QuadratureConfig& cfg) {
  return integrate_hybrid(site, cavity.precision(), cavity.mean(), cavity.mean(), cavity.sd(), cfg,
                          false)
      .moments;
}

TiltedMoments1D normalized_site_moments(const SiteModel1D& site, const QuadratureConfig& cfg) {
  // Newton with a capped step to find the mode of exp(-phi).
  double x = 0.0;
  bool found = false;
  for (int it = 0; it < 200; ++it) {
    const double g = site.d1(x);
    const double h = site.d2(x);
    if (!std::isfinite(g) || !std::isfinite(h)) break;
    if (h > 0.0 && std::abs(g) <= 1e-12 * (1.0 + std::abs(x) * h)) {
      found = true;
      break;
    }
    double step = h > 0.0 ? -g / h : (g > 0.0 ? -1.0 : 1.0);
    step = std::clamp(step, -10.0, 10.0);
    x += step;
  }
  if (!found) throw NotADensityError(site.name + ": no mode found for a flat cavity");
  const double s0 = 1.0 / std::sqrt(site.d2(x));
  // a vanishing gradient far out (logit) is not a mode: phi must climb on both sides
  const double f0 = site.phi(x);
  if (!(site.phi(x - 40.0 * s0) - f0 > 20.0) || !(site.phi(x + 40.0 * s0) - f0 > 20.0)) {
    throw NotADensityError(site.name + ": exp(-phi) has no finite mass");
  }
  return integrate_hybrid(site, 0.0, 0.0, x, s0, cfg, false).moments;
}

TiltedMomentsND tilted_moments_probit(int y, const Eigen::VectorXd& v,
                                      const GaussianDensityND& cavity) {
  if (y != 1 && y != -1) throw DomainError("probit label must be +1 or -1");
  if (v.size() != cavity.dim()) throw DimensionMismatch("probit direction does not match cavity");
  const double s = v.dot(cavity.covariance() * v);
  if (!(s > 0.0)) return constant_site(cavity, std::log(2.0));
  const double m = v.dot(cavity.mean());
  const double root = std::sqrt(1.0 + s);
  const double z = y * m / root;
  const double lam = special::inverse_mills_ratio(z);
  TiltedMoments1D along;
  along.log_z = special::log_normal_cdf(z);
  along.mean = m + y * s * lam / root;
  along.variance = s - s * s * lam * (z + lam) / (1.0 + s);
  if (!(along.variance > 0.0)) throw DegenerateMomentsError("probit hybrid variance underflowed");
  return lift_rank_one(cavity, v, m, s, along);
}

TiltedMomentsND tilted_moments_rank_one(const SiteModel1D& site, const Eigen::VectorXd& v,
                                        const GaussianDensityND& cavity,
                                        const QuadratureConfig& cfg) {
  if (v.size() != cavity.dim()) throw DimensionMismatch("site direction does not match cavity");
  const double s = v.dot(cavity.covariance() * v);
  if (!(s > 0.0)) return constant_site(cavity, site.phi(0.0));
  const double m = v.dot(cavity.mean());
  const GaussianDensity1D marginal({1.0 / s, m / s});
  return lift_rank_one(cavity, v, m, s, tilted_moments_quadrature(site, marginal, cfg));
}

TiltedMomentsND tilted_moments_mixture(double y, const GaussianDensityND& cavity) {
  if (cavity.dim() != 2) throw DimensionMismatch("mixture site needs a 2D cavity");
  const Eigen::VectorXd& mu = cavity.mean();
  const Eigen::MatrixXd& sigma = cavity.covariance();
  std::array<double, 2> logw{};
  std::array<Eigen::VectorXd, 2> means;
  std::array<Eigen::MatrixXd, 2> covs;
  for (int k = 0; k < 2; ++k) {
    const double v = 1.0 + sigma(k, k);
    const double u = y - mu(k);
    logw[k] = std::log(0.5) - 0.5 * u * u / v - 0.5 * std::log(v) - special::kLogSqrt2Pi;
    const Eigen::VectorXd col = sigma.col(k);
    means[k] = mu + col * (u / v);
    covs[k] = sigma - col * col.transpose() / v;
  }
  const double lse = special::log_sum_exp(logw[0], logw[1]);
  const double p0 = std::exp(logw[0] - lse);
  const double p1 = std::exp(logw[1] - lse);
  TiltedMomentsND out;
  out.log_z = lse;
  out.mean = p0 * means[0] + p1 * means[1];
  const Eigen::VectorXd d0 = means[0] - out.mean;
  const Eigen::VectorXd d1 = means[1] - out.mean;
  out.covariance = p0 * (covs[0] + d0 * d0.transpose()) + p1 * (covs[1] + d1 * d1.transpose());
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  return out;
}

TiltedMomentsND tilted_moments_gaussian(const NaturalParamsND& site, const NaturalParamsND& cavity,
                                        double site_constant) {
  if (site.dim() != cavity.dim()) throw DimensionMismatch("site and cavity dimensions differ");
  const GaussianDensityND hybrid(cavity + site);
  TiltedMomentsND out;
  out.mean = hybrid.mean();
  out.covariance = hybrid.covariance();
  out.log_z = 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt(cavity.precision);
  if (llt.info() == Eigen::Success && !is_flat(cavity)) {
    const GaussianDensityND cav(cavity);
    out.log_z = -site_constant + 0.5 * (cav.log_det_precision() - hybrid.log_det_precision()) +
                0.5 * (hybrid.params().shift.dot(hybrid.mean()) - cavity.shift.dot(cav.mean()));
  }
  return out;
}

TiltedMomentsND tilted_moments(const SiteModelND& site, const NaturalParamsND& cavity,
                               const QuadratureConfig& cfg) {
  if (site.dim != cavity.dim()) throw DimensionMismatch("site and cavity dimensions differ");

  if (const auto* g = std::get_if<GaussianFormND>(&site.structure)) {
    return tilted_moments_gaussian(g->params, cavity);
  }
  if (const auto* r = std::get_if<RankOneForm>(&site.structure)) {
    const Eigen::VectorXd& v = r->direction;
    const auto* gf = std::get_if<GaussianForm>(&r->site.closed_form);
    const bool proper = Eigen::LLT<Eigen::MatrixXd>(cavity.precision).info() == Eigen::Success &&
                        !is_flat(cavity);
    if (gf && (cfg.closed_forms || !proper)) {
      const NaturalParamsND sp(gf->gamma * v * v.transpose(), gf->alpha * v);
      return tilted_moments_gaussian(sp, cavity, gf->constant);
    }
    if (is_flat(cavity) && site.dim == 1) {
      return to_nd(normalized_site_moments(affine_site(r->site, v(0), 0.0), cfg));
    }
    const GaussianDensityND cav(cavity);
    if (const auto* pf = std::get_if<ProbitForm>(&r->site.closed_form); pf && cfg.closed_forms) {
      return tilted_moments_probit(pf->y > 0 ? 1 : -1, v, cav);
    }
    return tilted_moments_rank_one(r->site, v, cav, cfg);
  }
  if (const auto* mf = std::get_if<MixtureForm>(&site.structure)) {
    return tilted_moments_mixture(mf->y, GaussianDensityND(cavity));
  }
  throw DomainError(site.name + ": no tilted-moment method for this site structure");
}

NaturalParams1D site_update_from_moments(const TiltedMoments1D& m, const NaturalParams1D& cavity) {
  return from_moments(m.mean, m.variance).params() - cavity;
}

NaturalParamsND site_update_from_moments(const TiltedMomentsND& m, const NaturalParamsND& cavity) {
  return GaussianDensityND::from_moments(m.mean, m.covariance).params() - cavity;
}

NaturalParams1D site_update_stable(const HybridStatistics1D& stats,
                                   const GaussianDensity1D& cavity) {
  // Differentiating log Z twice in the cavity mean gives
  // beta^2 var_h - beta = -(E_h[phi''] - Var_h(phi')) =: -A, hence
  // beta_i = 1/var_h - beta = A / (1 - A/beta); then r_i follows from Stein.
  const double a = stats.mean_d2 - stats.var_d1;
  const double beta_i = a / (1.0 - a / cavity.precision());
  return {beta_i, beta_i * stats.moments.mean - stats.mean_d1};
}

double stein_residual(const SiteModel1D& site, const GaussianDensity1D& cavity,
                      const NaturalParams1D& update, const TiltedMoments1D& m,
                      const QuadratureConfig& cfg) {
  const HybridStatistics1D stats = hybrid_statistics(site, cavity, cfg);
  return std::abs(update.shift - (update.precision * m.mean - stats.mean_d1));
}

BrascampLiebResult brascamp_lieb_check(const SiteModel1D& site, const GaussianDensity1D& cavity,
                                       const QuadratureConfig& cfg) {
  const HybridStatistics1D stats = hybrid_statistics(site, cavity, cfg);
  BrascampLiebResult out;
  out.var = stats.moments.variance;
  out.bound = stats.mean_inverse_curvature;
  out.applicable = stats.curvature_positive;
  out.holds = out.applicable && out.var <= out.bound + 1e-10;
  return out;
}

}  // namespace eplab
