#include "eplab/ep.hpp"

#include "eplab/errors.hpp"

#include <cmath>
#include <memory>
#include <optional>
#include <algorithm>

namespace eplab {

SiteMomentsFn make_moments_fn(std::vector<SiteModelND> sites, QuadratureConfig cfg) {
  cfg.validate();
  auto shared = std::make_shared<const std::vector<SiteModelND>>(std::move(sites));
  return [shared, cfg](std::size_t i, const NaturalParamsND& cavity) {
    return tilted_moments(shared->at(i), cavity, cfg);
  };
}

void RunConfig::validate() const {
  if (!(damping > 0.0 && damping <= 1.0)) throw DomainError("damping must lie in (0, 1]");
  if (max_passes < 1) throw DomainError("max_passes must be positive");
  if (cycle_window < 2) throw DomainError("cycle_window must be at least 2");
  if (!(tol > 0.0) || !(cycle_tol > 0.0)) throw DomainError("tolerances must be positive");
}

std::string RunReport::status_string() const {
  switch (status) {
    case RunStatus::converged: return "converged";
    case RunStatus::cycle: return "cycle(" + std::to_string(period) + ")";
    case RunStatus::diverged: return "diverged";
    case RunStatus::max_passes: return "max_passes";
  }
  return "unknown";
}

nlohmann::json to_json(const NaturalParamsND& p) {
  nlohmann::json q = nlohmann::json::array();
  for (Eigen::Index i = 0; i < p.precision.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < p.precision.cols(); ++j) row.push_back(p.precision(i, j));
    q.push_back(std::move(row));
  }
  return {{"precision", q},
          {"shift", std::vector<double>(p.shift.data(), p.shift.data() + p.shift.size())}};
}

nlohmann::json RunReport::to_json() const {
  nlohmann::json j;
  j["status"] = status_string();
  j["passes_used"] = passes_used;
  if (status == RunStatus::cycle) j["period"] = period;
  if (!message.empty()) j["message"] = message;
  nlohmann::json traj = nlohmann::json::array();
  for (const auto& g : trajectory) traj.push_back(eplab::to_json(g));
  j["trajectory"] = std::move(traj);
  nlohmann::json sk = nlohmann::json::array();
  for (const auto& s : skips) sk.push_back({{"pass", s.pass}, {"site", s.site}, {"reason", s.reason}});
  j["skips"] = std::move(sk);
  return j;
}

bool cavity_usable(const NaturalParamsND& cavity, double floor) {
  if (!cavity.all_finite()) return false;
  if (cavity.max_abs() == 0.0) return true;
  return min_precision_eigenvalue(cavity) > floor;
}

NaturalParamsND sum_sites(const std::vector<NaturalParamsND>& sites) {
  if (sites.empty()) throw DomainError("no sites");
  NaturalParamsND total = NaturalParamsND::zero(sites.front().dim());
  for (const auto& s : sites) total += s;
  return total;
}

namespace {

bool is_flat(const NaturalParamsND& p) { return p.max_abs() == 0.0; }

// Hybrid natural parameters for site i, or nothing when a flat cavity turns
// out not to give a density.
std::optional<NaturalParamsND> hybrid_params(std::size_t i, const NaturalParamsND& cavity,
                                             const SiteMomentsFn& moments, bool skip_improper) {
  try {
    const TiltedMomentsND m = moments(i, cavity);
    return GaussianDensityND::from_moments(m.mean, m.covariance).params();
  } catch (const NotADensityError& e) {
    if (skip_improper && is_flat(cavity)) return std::nullopt;
    throw SiteUpdateError(i, e.what());
  } catch (const SiteUpdateError&) {
    throw;
  } catch (const std::exception& e) {
    throw SiteUpdateError(i, e.what());
  }
}

void record_skip(PassLog* log, std::size_t i, const std::string& reason) {
  if (log) log->skips.push_back({log->pass, i, reason});
}

NaturalParamsND damp(const NaturalParamsND& old_value, const NaturalParamsND& new_value, double g) {
  if (g == 1.0) return new_value;
  return (1.0 - g) * old_value + g * new_value;
}

NaturalParamsND shared_cavity(const AEPState& state, double floor) {
  if (state.n == 0) throw DomainError("aEP state has no sites");
  const double frac = static_cast<double>(state.n - 1) / static_cast<double>(state.n);
  NaturalParamsND cavity = frac * state.global;
  if (!cavity_usable(cavity, floor)) {
    throw InvalidCavityError("shared aEP cavity is not a density");
  }
  return cavity;
}

// Sum of the hybrids' natural parameters over all sites, fixed order.
NaturalParamsND hybrid_sum(const AEPState& state, const NaturalParamsND& cavity,
                           const SiteMomentsFn& moments) {
  NaturalParamsND total = NaturalParamsND::zero(state.global.dim());
  for (std::size_t i = 0; i < state.n; ++i) {
    auto h = hybrid_params(i, cavity, moments, false);
    total += *h;
  }
  return total;
}

}  // namespace

EPState sequential_pass(const EPState& state, const SiteMomentsFn& moments, const RunConfig& cfg,
                        PassLog* log) {
  EPState next = state;
  for (std::size_t i = 0; i < next.site_params.size(); ++i) {
    const NaturalParamsND cavity = next.global - next.site_params[i];
    if (!cavity_usable(cavity, cfg.cavity_floor)) {
      record_skip(log, i, "cavity precision below floor");
      continue;
    }
    const auto h = hybrid_params(i, cavity, moments, true);
    if (!h) {
      record_skip(log, i, "flat cavity gives no density");
      continue;
    }
    const NaturalParamsND updated = damp(next.site_params[i], *h - cavity, cfg.damping);
    next.global += updated - next.site_params[i];
    next.site_params[i] = updated;
  }
  next.global = sum_sites(next.site_params);
  return next;
}

EPState parallel_pass(const EPState& state, const SiteMomentsFn& moments, const RunConfig& cfg,
                      PassLog* log) {
  EPState next = state;
  for (std::size_t i = 0; i < state.site_params.size(); ++i) {
    const NaturalParamsND cavity = state.global - state.site_params[i];
    if (!cavity_usable(cavity, cfg.cavity_floor)) {
      record_skip(log, i, "cavity precision below floor");
      continue;
    }
    const auto h = hybrid_params(i, cavity, moments, true);
    if (!h) {
      record_skip(log, i, "flat cavity gives no density");
      continue;
    }
    next.site_params[i] = damp(state.site_params[i], *h - cavity, cfg.damping);
  }
  next.global = sum_sites(next.site_params);
  return next;
}

AEPState aep_pass(const AEPState& state, const SiteMomentsFn& moments, const RunConfig& cfg) {
  const NaturalParamsND cavity = shared_cavity(state, cfg.cavity_floor);
  const NaturalParamsND updated =
      hybrid_sum(state, cavity, moments) - static_cast<double>(state.n - 1) * state.global;
  return {damp(state.global, updated, cfg.damping), state.n};
}

AEPState aep_averaged_pass(const AEPState& state, const SiteMomentsFn& moments,
                           const RunConfig& cfg) {
  const NaturalParamsND cavity = shared_cavity(state, cfg.cavity_floor);
  const NaturalParamsND updated =
      (1.0 / static_cast<double>(state.n)) * hybrid_sum(state, cavity, moments);
  return {damp(state.global, updated, cfg.damping), state.n};
}

namespace {

// Shared loop; step advances the state, records into the log and returns
// the new global.
template <class State, class Step>
RunReport drive(State& state, const RunConfig& cfg, const NaturalParamsND& initial_global, Step step) {
  cfg.validate();
  RunReport report;
  report.trajectory.push_back(initial_global);
  for (int pass = 1; pass <= cfg.max_passes; ++pass) {
    PassLog log;
    log.pass = pass;
    NaturalParamsND g;
    try {
      g = step(state, log);
    } catch (const std::exception& e) {
      report.skips.insert(report.skips.end(), log.skips.begin(), log.skips.end());
      report.status = RunStatus::diverged;
      report.message = e.what();
      return report;
    }
    report.skips.insert(report.skips.end(), log.skips.begin(), log.skips.end());
    report.trajectory.push_back(g);
    report.passes_used = pass;

    if (!g.all_finite() || !(min_precision_eigenvalue(g) > 0.0)) {
      report.status = RunStatus::diverged;
      report.message = "global approximation is not a density";
      return report;
    }
    const std::size_t t = report.trajectory.size() - 1;
    if (relative_distance(g, report.trajectory[t - 1]) < cfg.tol) {
      report.status = RunStatus::converged;
      return report;
    }
    // smallest lag p with a revisit, provided no shorter lag is close
    const std::size_t window = std::min<std::size_t>(cfg.cycle_window, t);
    double closest_shorter = relative_distance(g, report.trajectory[t - 1]);
    for (std::size_t p = 2; p <= window; ++p) {
      const double d = relative_distance(g, report.trajectory[t - p]);
      if (d < cfg.cycle_tol && closest_shorter > 10.0 * cfg.cycle_tol) {
        report.status = RunStatus::cycle;
        report.period = static_cast<int>(p);
        return report;
      }
      closest_shorter = std::min(closest_shorter, d);
    }
  }
  report.status = RunStatus::max_passes;
  return report;
}

}  // namespace

EPRun run(const EPState& initial, const SiteMomentsFn& moments, const RunConfig& cfg,
          const EPPassFn& pass) {
  EPRun out{initial, {}};
  out.report = drive(out.state, cfg, initial.global, [&](EPState& s, PassLog& log) {
    s = pass(s, moments, cfg, &log);
    return s.global;
  });
  return out;
}

AEPRun run(const AEPState& initial, const SiteMomentsFn& moments, const RunConfig& cfg,
           const AEPPassFn& pass) {
  AEPRun out{initial, {}};
  out.report = drive(out.state, cfg, initial.global, [&](AEPState& s, PassLog&) {
    s = pass(s, moments, cfg);
    return s.global;
  });
  return out;
}

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::sequential: return "sequential";
    case Algorithm::parallel: return "parallel";
    case Algorithm::aep: return "aep";
    case Algorithm::aep_averaged: return "aep_averaged";
  }
  return "unknown";
}

EPState init_flat_sites_with_prior(std::size_t n, std::size_t prior_index,
                                   const NaturalParamsND& prior) {
  if (prior_index >= n) throw DomainError("prior index out of range");
  EPState s;
  s.site_params.assign(n, NaturalParamsND::zero(prior.dim()));
  s.site_params[prior_index] = prior;
  s.global = sum_sites(s.site_params);
  return s;
}

EPState init_unit_global(std::size_t n, Eigen::Index dim) {
  if (n == 0) throw DomainError("no sites");
  const NaturalParamsND unit(Eigen::MatrixXd::Identity(dim, dim), Eigen::VectorXd::Zero(dim));
  EPState s;
  s.site_params.assign(n, (1.0 / static_cast<double>(n)) * unit);
  s.global = sum_sites(s.site_params);
  return s;
}

EPState init_given(std::vector<NaturalParamsND> sites) {
  EPState s;
  s.site_params = std::move(sites);
  s.global = sum_sites(s.site_params);
  return s;
}

AEPState as_aep(const EPState& s) { return {s.global, s.site_params.size()}; }

}  // namespace eplab
