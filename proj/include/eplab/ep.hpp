#pragma once

// Sequential EP, parallel EP and averaged EP (aEP) in natural parameters.

#include "eplab/gaussian.hpp"
#include "eplab/sites.hpp"
#include "eplab/tilted.hpp"

#include <json.hpp>

#include <functional>
#include <string>
#include <vector>

namespace eplab {

/// (site index, cavity) -> hybrid moments. The cavity is passed in natural
/// parameters so that an exactly flat cavity can reach sites whose hybrid is
/// still normalizable.
using SiteMomentsFn = std::function<TiltedMomentsND(std::size_t, const NaturalParamsND&)>;

/// Dispatches each site through tilted_moments().
SiteMomentsFn make_moments_fn(std::vector<SiteModelND> sites, QuadratureConfig cfg = {});

struct EPState {
  std::vector<NaturalParamsND> site_params;
  NaturalParamsND global;
};

struct AEPState {
  NaturalParamsND global;
  std::size_t n = 0;
};

struct RunConfig {
  double damping = 1.0;
  int max_passes = 200;
  double tol = 1e-9;
  double cavity_floor = 1e-8;
  int cycle_window = 40;
  double cycle_tol = 1e-7;

  /// Throws DomainError for damping outside (0, 1] or non-positive counts.
  void validate() const;
};

struct SkipRecord {
  int pass = 0;
  std::size_t site = 0;
  std::string reason;
};

/// Skips are appended here; pass is the 1-based pass number.
struct PassLog {
  int pass = 0;
  std::vector<SkipRecord> skips;
};

enum class RunStatus { converged, cycle, diverged, max_passes };

struct RunReport {
  std::vector<NaturalParamsND> trajectory;  // passes_used + 1 entries
  RunStatus status = RunStatus::max_passes;
  int period = 0;  // set for cycle
  int passes_used = 0;
  std::vector<SkipRecord> skips;
  std::string message;  // reason for divergence

  /// "converged", "cycle(2)", "diverged" or "max_passes".
  std::string status_string() const;
  nlohmann::json to_json() const;
};

/// A cavity is usable when its precision exceeds the floor (smallest
/// eigenvalue in ND) or it is exactly flat.
bool cavity_usable(const NaturalParamsND& cavity, double floor);

EPState sequential_pass(const EPState& state, const SiteMomentsFn& moments, const RunConfig& cfg,
                        PassLog* log = nullptr);
EPState parallel_pass(const EPState& state, const SiteMomentsFn& moments, const RunConfig& cfg,
                      PassLog* log = nullptr);
/// Throws InvalidCavityError when the shared cavity is unusable.
AEPState aep_pass(const AEPState& state, const SiteMomentsFn& moments, const RunConfig& cfg);
AEPState aep_averaged_pass(const AEPState& state, const SiteMomentsFn& moments,
                           const RunConfig& cfg);

struct EPRun {
  EPState state;
  RunReport report;
};

struct AEPRun {
  AEPState state;
  RunReport report;
};

using EPPassFn = std::function<EPState(const EPState&, const SiteMomentsFn&, const RunConfig&, PassLog*)>;
using AEPPassFn = std::function<AEPState(const AEPState&, const SiteMomentsFn&, const RunConfig&)>;

/// Iterates until convergence, a detected cycle, divergence or max_passes.
/// Exceptions from a pass end the run with status diverged.
EPRun run(const EPState& initial, const SiteMomentsFn& moments, const RunConfig& cfg,
          const EPPassFn& pass);
AEPRun run(const AEPState& initial, const SiteMomentsFn& moments, const RunConfig& cfg,
           const AEPPassFn& pass);

enum class Algorithm { sequential, parallel, aep, aep_averaged };
std::string to_string(Algorithm a);

/// Likelihood sites flat, the prior site at its exact parameters.
EPState init_flat_sites_with_prior(std::size_t n, std::size_t prior_index,
                                   const NaturalParamsND& prior);
/// Global N(0, I); every site gets global / n.
EPState init_unit_global(std::size_t n, Eigen::Index dim);
EPState init_given(std::vector<NaturalParamsND> sites);
AEPState as_aep(const EPState& s);

/// Sum of the site parameters, in index order.
NaturalParamsND sum_sites(const std::vector<NaturalParamsND>& sites);

nlohmann::json to_json(const NaturalParamsND& p);

}  // namespace eplab
