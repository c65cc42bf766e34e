#include "eplab/asymptotics.hpp"

#include "eplab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

namespace eplab {

bool RateScan::valid() const { return std::isfinite(fitted_slope) && std::isfinite(slope_ci); }

bool RateScan::slope_within(double target, double tol) const {
  return valid() && std::abs(fitted_slope - target) <= tol;
}

nlohmann::json RateScan::to_json() const {
  nlohmann::json j;
  j["xs"] = xs;
  j["errors"] = errors;
  j["fitted_slope"] = valid() ? nlohmann::json(fitted_slope) : nlohmann::json(nullptr);
  j["slope_ci"] = valid() ? nlohmann::json(slope_ci) : nlohmann::json(nullptr);
  return j;
}

RateScan fit_rate(std::vector<double> xs, std::vector<double> errors) {
  if (xs.size() != errors.size() || xs.size() < 2) throw DomainError("rate fit needs >= 2 paired points");
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0)) throw DomainError("rate fit abscissae must be positive");
    if (i > 0 && !(xs[i] > xs[i - 1])) throw DomainError("rate fit abscissae must increase");
    if (!(errors[i] >= 0.0)) throw DomainError("rate fit errors must be non-negative");
  }
  RateScan scan;
  scan.xs = std::move(xs);
  scan.errors = std::move(errors);
  const bool positive = std::all_of(scan.errors.begin(), scan.errors.end(), [](double e) { return e > 0.0; });
  if (!positive) {
    scan.fitted_slope = scan.slope_ci = std::numeric_limits<double>::quiet_NaN();
    return scan;
  }
  const auto n = static_cast<double>(scan.xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < scan.xs.size(); ++i) {
    mx += std::log(scan.xs[i]);
    my += std::log(scan.errors[i]);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < scan.xs.size(); ++i) {
    const double dx = std::log(scan.xs[i]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(scan.errors[i]) - my);
  }
  scan.fitted_slope = sxy / sxx;
  if (scan.xs.size() > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < scan.xs.size(); ++i) {
      const double pred = my + scan.fitted_slope * (std::log(scan.xs[i]) - mx);
      const double r = std::log(scan.errors[i]) - pred;
      rss += r * r;
    }
    scan.slope_ci = 2.0 * std::sqrt(rss / (n - 2.0) / sxx);
  } else {
    scan.slope_ci = 0.0;
  }
  return scan;
}

std::vector<double> logspace(double lo_exp, double hi_exp, int count) {
  if (count < 2) return {std::pow(10.0, lo_exp)};
  std::vector<double> out(count);
  for (int i = 0; i < count; ++i) {
    out[i] = std::pow(10.0, lo_exp + (hi_exp - lo_exp) * i / (count - 1));
  }
  return out;
}

Thm1Result thm1_scan(const SiteModel1D& site, double mu0, double delta_r,
                     const std::vector<double>& betas, const QuadratureConfig& cfg) {
  Thm1Result out;
  const double g0 = site.d1(mu0);
  const double h0 = site.d2(mu0);
  std::vector<double> r_err, b_err, m_err;
  for (double beta : betas) {
    const GaussianDensity1D cavity({beta, beta * mu0 - delta_r});
    const HybridStatistics1D stats = hybrid_statistics(site, cavity, cfg);
    const NaturalParams1D upd = site_update_stable(stats, cavity);
    Thm1Row row;
    row.beta = beta;
    row.mu_h = stats.moments.mean;
    row.var_h = stats.moments.variance;
    row.r_i = upd.shift;
    row.beta_i = upd.precision;
    row.r_error = std::abs(upd.shift - (-g0 + upd.precision * mu0));
    row.beta_error = std::abs(upd.precision - h0);
    row.mu_error = std::abs(stats.moments.mean - mu0);
    out.rows.push_back(row);
    r_err.push_back(row.r_error);
    b_err.push_back(row.beta_error);
    m_err.push_back(row.mu_error);
  }
  out.r_scan = fit_rate(betas, r_err);
  out.beta_scan = fit_rate(betas, b_err);
  out.mu_scan = fit_rate(betas, m_err);
  return out;
}

namespace {

double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

Thm2Result thm2_discrepancy(const std::vector<SiteModelND>& sites, const EPState& state,
                            const SiteMomentsFn& moments) {
  const GaussianDensityND global(state.global);
  const Eigen::VectorXd mu0 = global.mean();
  const ObjectiveND obj = objective_from_sites(sites);
  const Eigen::MatrixXd h = obj.hess(mu0);
  Thm2Result out;
  out.newton_target = NaturalParamsND(h, h * mu0 - obj.grad(mu0));
  RunConfig cfg;
  out.ep_result = parallel_pass(state, moments, cfg).global;
  out.aep_result = aep_pass(as_aep(state), moments, cfg).global;
  out.ep_gap_precision = max_abs_diff(out.ep_result.precision, out.newton_target.precision);
  out.ep_gap_shift = max_abs_diff(out.ep_result.shift, out.newton_target.shift);
  out.aep_gap_precision = max_abs_diff(out.aep_result.precision, out.newton_target.precision);
  out.aep_gap_shift = max_abs_diff(out.aep_result.shift, out.newton_target.shift);
  return out;
}

std::vector<SiteModel1D> random_logit_sites(std::size_t n, std::uint64_t seed) {
  if (n < 2) throw DomainError("need at least two logit sites");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  std::vector<SiteModel1D> sites;
  sites.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    // alternate the first two signs so that the sum has a minimum
    const double y = i < 2 ? (i == 0 ? 1.0 : -1.0) : (coin(rng) ? 1.0 : -1.0);
    const double c = normal(rng);
    sites.push_back(affine_site(logit_site(), y, -y * c));
  }
  return sites;
}

Thm2Scan thm2_scan(std::size_t n_sites, const std::vector<double>& precisions, std::uint64_t seed,
                   const QuadratureConfig& cfg) {
  const std::vector<SiteModel1D> logit = random_logit_sites(n_sites, seed);
  const ModeResult mode = find_mode(objective_from_sites(logit), Eigen::VectorXd::Zero(1));
  if (!mode.converged) throw Error("logit-sum mode search failed");
  // offset keeps mu0 away from any symmetry point of the sites
  const double centre = mode.x_star(0) + 0.5;

  Thm2Scan scan;
  std::vector<double> ep_q, ep_r, aep_q, aep_r;
  for (double s : precisions) {
    std::vector<SiteModelND> sites;
    std::vector<NaturalParamsND> params;
    for (const auto& l : logit) {
      sites.push_back(as_nd(l));
      params.push_back(NaturalParamsND::from_1d({0.2, 0.1}));
    }
    sites.push_back(as_nd(gaussian_site(s, s * centre)));
    params.push_back(NaturalParamsND::from_1d({s, s * centre}));
    const EPState state = init_given(params);
    const SiteMomentsFn moments = make_moments_fn(sites, cfg);
    Thm2ScanRow row{s, thm2_discrepancy(sites, state, moments)};
    ep_q.push_back(row.result.ep_gap_precision);
    ep_r.push_back(row.result.ep_gap_shift);
    aep_q.push_back(row.result.aep_gap_precision);
    aep_r.push_back(row.result.aep_gap_shift);
    scan.rows.push_back(std::move(row));
  }
  scan.ep_precision = fit_rate(precisions, ep_q);
  scan.ep_shift = fit_rate(precisions, ep_r);
  scan.aep_precision = fit_rate(precisions, aep_q);
  scan.aep_shift = fit_rate(precisions, aep_r);
  return scan;
}

std::pair<double, double> thm3_deltas(const std::vector<SiteModel1D>& sites, double x_star) {
  double k = 0.0;
  double curvature = 0.0;
  double slopes = 0.0;
  for (const auto& s : sites) {
    const double k3 = s.meta.k3.value_or(0.0);
    const double k4 = s.meta.k4.value_or(0.0);
    k = std::max({k, k3, k4});
    curvature += s.d2(x_star);
    slopes += std::abs(s.d1(x_star));
  }
  const auto n = static_cast<double>(sites.size());
  return {n * k / curvature, k * slopes / curvature};
}

Thm3Result thm3_probe(const std::vector<SiteModel1D>& sites, const StableRegionSpec& spec,
                      StableAlgorithm algorithm, const QuadratureConfig& cfg) {
  if (!(spec.delta_r > 0.0) || !(spec.delta_beta > 0.0)) {
    throw DomainError("stable-region half-widths must be positive");
  }
  const std::size_t n = sites.size();
  const double nn = static_cast<double>(n);
  const double psi2 = spec.center.precision;
  const double x_star = spec.center.shift / psi2;

  std::vector<SiteModelND> nd;
  for (const auto& s : sites) nd.push_back(as_nd(s));
  const SiteMomentsFn moments = make_moments_fn(nd, cfg);
  RunConfig run_cfg;

  std::vector<double> g(n), h(n);
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = sites[i].d1(x_star);
    h[i] = sites[i].d2(x_star);
  }
  auto global_inside = [&](const NaturalParams1D& p) {
    return std::abs(p.shift - p.precision * x_star) <= nn * spec.delta_r &&
           std::abs(p.precision - psi2) <= nn * spec.delta_beta;
  };
  auto site_inside = [&](std::size_t i, const NaturalParams1D& p) {
    return std::abs(p.shift + g[i] - p.precision * x_star) <= spec.delta_r &&
           std::abs(p.precision - h[i]) <= spec.delta_beta;
  };

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Thm3Result out;
  std::tie(out.delta, out.delta_aep) = thm3_deltas(sites, x_star);
  int retained = 0;
  for (int k = 0; k < spec.samples; ++k) {
    NaturalParams1D start;
    NaturalParams1D landed;
    std::string reason;
    try {
      if (algorithm == StableAlgorithm::aep) {
        start.precision = psi2 + nn * spec.delta_beta * u(rng);
        start.shift = start.precision * x_star + nn * spec.delta_r * u(rng);
        const AEPState next = aep_pass({NaturalParamsND::from_1d(start), n}, moments, run_cfg);
        landed = next.global.as_1d();
        if (!global_inside(landed)) reason = "left the box";
      } else {
        std::vector<NaturalParamsND> params(n);
        for (std::size_t i = 0; i < n; ++i) {
          const double b = h[i] + spec.delta_beta * u(rng);
          const double r = b * x_star - g[i] + spec.delta_r * u(rng);
          params[i] = NaturalParamsND::from_1d({b, r});
        }
        const EPState state = init_given(params);
        start = state.global.as_1d();
        PassLog log;
        const EPState next = parallel_pass(state, moments, run_cfg, &log);
        landed = next.global.as_1d();
        if (!log.skips.empty()) reason = "site skipped";
        for (std::size_t i = 0; i < n && reason.empty(); ++i) {
          if (!site_inside(i, next.site_params[i].as_1d())) reason = "site left the box";
        }
      }
    } catch (const std::exception& e) {
      reason = e.what();
    }
    if (reason.empty()) {
      ++retained;
    } else {
      out.escapes.push_back({start, landed, reason});
    }
  }
  out.fraction_retained = static_cast<double>(retained) / spec.samples;
  return out;
}

Thm4Result thm4_rate(RegressionModel model, const std::vector<std::size_t>& ns,
                     const std::vector<std::uint64_t>& seeds, const RunConfig& run_cfg,
                     const QuadratureConfig& cfg) {
  Thm4Result out;
  for (std::size_t n : ns) {
    double kl_sum = 0.0;
    double tv_sum = 0.0;
    int used = 0;
    for (std::uint64_t seed : seeds) {
      std::vector<SiteModelND> sites;
      if (model == RegressionModel::logit) {
        for (const auto& s : scalar_logit_sites(generate_scalar_logit_data(n, seed))) {
          sites.push_back(as_nd(s));
        }
      } else {
        sites = regression_sites(generate_regression_data(model, n, seed));
      }
      const Eigen::Index d = sites.front().dim;
      const std::size_t prior = sites.size() - 1;
      const EPState init = init_flat_sites_with_prior(
          sites.size(), prior,
          NaturalParamsND(Eigen::MatrixXd::Identity(d, d), Eigen::VectorXd::Zero(d)));
      const EPRun ep = run(init, make_moments_fn(sites, cfg), run_cfg, parallel_pass);

      Thm4Row row;
      row.n = n;
      row.seed = seed;
      row.passes = ep.report.passes_used;
      row.converged = ep.report.status == RunStatus::converged;
      if (row.converged) {
        const GaussianDensityND q_ep(ep.state.global);
        const GaussianDensityND q_cga = cga(objective_from_sites(sites), q_ep.mean());
        row.kl = kl_gaussian_nd(q_ep, q_cga);
        row.tv = tv_upper_bound(row.kl);
        kl_sum += row.kl;
        tv_sum += row.tv;
        ++used;
      } else {
        ++out.excluded;
      }
      out.rows.push_back(row);
    }
    if (used > 0) {
      out.ns.push_back(static_cast<double>(n));
      out.mean_kl.push_back(kl_sum / used);
      out.mean_tv.push_back(tv_sum / used);
    }
  }
  if (out.ns.size() >= 2) {
    out.kl_scan = fit_rate(out.ns, out.mean_kl);
    out.tv_scan = fit_rate(out.ns, out.mean_tv);
  } else {
    out.kl_scan.fitted_slope = out.kl_scan.slope_ci = std::numeric_limits<double>::quiet_NaN();
    out.tv_scan = out.kl_scan;
  }
  return out;
}

}  // namespace eplab
