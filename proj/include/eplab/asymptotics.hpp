#pragma once

// Empirical checks of the limit theorems: hybrid limits under growing cavity
// precision, EP versus Newton, stable regions, and large-data exactness.

#include "eplab/data.hpp"
#include "eplab/ep.hpp"
#include "eplab/gaussian.hpp"
#include "eplab/newton.hpp"
#include "eplab/sites.hpp"
#include "eplab/tilted.hpp"

#include <json.hpp>

#include <cstdint>
#include <vector>

namespace eplab {

/// OLS fit of log(error) on log(x). The slope is NaN when any error is 0.
struct RateScan {
  std::vector<double> xs;
  std::vector<double> errors;
  double fitted_slope = 0.0;
  double slope_ci = 0.0;  // two standard errors

  bool valid() const;
  bool slope_within(double target, double tol) const;
  nlohmann::json to_json() const;
};

/// Throws DomainError unless xs is strictly increasing and positive, errors
/// are non-negative and the sizes agree (at least 2 points).
RateScan fit_rate(std::vector<double> xs, std::vector<double> errors);

std::vector<double> logspace(double lo_exp, double hi_exp, int count);

struct Thm1Row {
  double beta = 0.0;
  double mu_h = 0.0;
  double var_h = 0.0;
  double r_i = 0.0;
  double beta_i = 0.0;
  double r_error = 0.0;
  double beta_error = 0.0;
  double mu_error = 0.0;
};

struct Thm1Result {
  std::vector<Thm1Row> rows;
  RateScan r_scan;
  RateScan beta_scan;
  RateScan mu_scan;
};

/// Site update against the cavity (beta, beta mu0 - delta_r) for each beta,
/// using site_update_stable. Errors are |r_i - (-phi'(mu0) + beta_i mu0)|,
/// |beta_i - phi''(mu0)| and |mu_h - mu0|.
Thm1Result thm1_scan(const SiteModel1D& site, double mu0, double delta_r,
                     const std::vector<double>& betas, const QuadratureConfig& cfg = {});

struct Thm2Result {
  NaturalParamsND newton_target;
  NaturalParamsND ep_result;
  NaturalParamsND aep_result;
  double ep_gap_precision = 0.0;  // max |entry difference| in Q
  double ep_gap_shift = 0.0;      // max |entry difference| in r
  double aep_gap_precision = 0.0;
  double aep_gap_shift = 0.0;
};

/// One undamped parallel pass and one aEP pass from state, compared with the
/// Newton-as-inference update (psi''(mu0), psi''(mu0) mu0 - psi'(mu0)) at the
/// global mean mu0.
Thm2Result thm2_discrepancy(const std::vector<SiteModelND>& sites, const EPState& state,
                            const SiteMomentsFn& moments);

struct Thm2ScanRow {
  double s = 0.0;
  Thm2Result result;
};

struct Thm2Scan {
  std::vector<Thm2ScanRow> rows;
  RateScan ep_precision, ep_shift, aep_precision, aep_shift;
};

/// n_sites offset logit sites plus one Gaussian site of precision s centred
/// near the logit mode, for each s. The EP state gives every logit site
/// (0.2, 0.1) and the Gaussian site its exact parameters.
Thm2Scan thm2_scan(std::size_t n_sites, const std::vector<double>& precisions, std::uint64_t seed,
                   const QuadratureConfig& cfg = {});

/// Logit sites softplus(-y_i (x - c_i)) with random signs y_i and offsets
/// c_i ~ N(0, 1); both signs are always present so a mode exists.
std::vector<SiteModel1D> random_logit_sites(std::size_t n, std::uint64_t seed);

struct StableRegionSpec {
  NaturalParams1D center;  // CGA at x*
  double delta_r = 0.0;
  double delta_beta = 0.0;
  int samples = 500;
  std::uint64_t seed = 0;
};

struct Thm3Escape {
  NaturalParams1D start;
  NaturalParams1D landed;
  std::string reason;
};

struct Thm3Result {
  double fraction_retained = 0.0;
  std::vector<Thm3Escape> escapes;
  double delta = 0.0;      // n max(K3, K4) / psi''(x*)
  double delta_aep = 0.0;  // max(K3, K4) sum |phi_i'(x*)| / psi''(x*)
};

enum class StableAlgorithm { aep, ep };

/// aEP: global starts uniform in |r - beta x*| <= n delta_r,
/// |beta - psi''(x*)| <= n delta_beta. EP: each site uniform in
/// |r_i + phi_i'(x*) - beta_i x*| <= delta_r, |beta_i - phi_i''(x*)| <= delta_beta.
/// One undamped pass each; retained when the result lies in the same box.
Thm3Result thm3_probe(const std::vector<SiteModel1D>& sites, const StableRegionSpec& spec,
                      StableAlgorithm algorithm, const QuadratureConfig& cfg = {});

/// delta and delta_aEP at the mode x*, using site metadata K3, K4.
std::pair<double, double> thm3_deltas(const std::vector<SiteModel1D>& sites, double x_star);

struct Thm4Row {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  double kl = 0.0;
  double tv = 0.0;
  bool converged = false;
  int passes = 0;
};

struct Thm4Result {
  std::vector<Thm4Row> rows;
  std::vector<double> ns;
  std::vector<double> mean_kl;
  std::vector<double> mean_tv;
  RateScan kl_scan;
  RateScan tv_scan;
  int excluded = 0;
};

/// Per (n, seed): parallel EP (flat sites plus prior) to convergence, CGA
/// from the EP mean, KL(q_EP, q_CGA) and its Pinsker TV bound. Means per n
/// over converged runs; non-converged runs are excluded and counted.
/// logit uses the one-parameter dataset; the others the spline regression.
Thm4Result thm4_rate(RegressionModel model, const std::vector<std::size_t>& ns,
                     const std::vector<std::uint64_t>& seeds, const RunConfig& run_cfg,
                     const QuadratureConfig& cfg = {});

}  // namespace eplab
