#pragma once

// Moments of hybrid distributions h(x) ∝ q_cavity(x) exp(-phi(x)).

#include "eplab/gaussian.hpp"
#include "eplab/sites.hpp"

#include <Eigen/Dense>

namespace eplab {

struct TiltedMoments1D {
  double log_z = 0.0;
  double mean = 0.0;
  double variance = 1.0;
};

/// Multivariate hybrid moments. TiltedMoments2D is the d = 2 case.
struct TiltedMomentsND {
  double log_z = 0.0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};
using TiltedMoments2D = TiltedMomentsND;

enum class CenterOn { cavity_mean, refined };

struct QuadratureConfig {
  int nodes = 61;
  int expansion_passes = 3;
  CenterOn center_on = CenterOn::refined;
  double tail_width = 10.0;
  /// Use the probit/mixture/Gaussian closed forms when dispatching on site
  /// structure; quadrature otherwise.
  bool closed_forms = true;

  /// Throws DomainError unless nodes >= 11 is odd and tail_width >= 5.
  void validate() const;
};

/// Moments plus the extra expectations used by the Stein and Brascamp-Lieb
/// checks, all from one set of quadrature nodes.
struct HybridStatistics1D {
  TiltedMoments1D moments;
  double mean_d1 = 0.0;                 // E_h[phi']
  double mean_inverse_curvature = 0.0;  // E_h[1 / (phi'' + beta)]
  double mean_d2 = 0.0;                 // E_h[phi'']
  double var_d1 = 0.0;                  // Var_h(phi')
  bool curvature_positive = true;       // phi'' + beta > 0 at every node
  int evaluations = 0;
};

/// Gauss-Hermite passes locate and scale the hybrid (recentering on the
/// computed mean/sd until the center moves < 1e-3 cavity sd); the final
/// moments come from adaptive Gauss-Kronrod over the union of the cavity and
/// hybrid supports, accumulated about the refined center.
/// Throws QuadratureError on a non-finite integrand, DegenerateMomentsError
/// if the variance comes out non-positive.
TiltedMoments1D tilted_moments_quadrature(const SiteModel1D& site, const GaussianDensity1D& cavity,
                                          const QuadratureConfig& cfg = {});
HybridStatistics1D hybrid_statistics(const SiteModel1D& site, const GaussianDensity1D& cavity,
                                     const QuadratureConfig& cfg = {});

/// Moments of exp(-phi) / Z for a normalizable site (the flat-cavity case).
/// log_z is log of the integral of exp(-phi). Throws NotADensityError when
/// no interior mode is found.
TiltedMoments1D normalized_site_moments(const SiteModel1D& site, const QuadratureConfig& cfg = {});

/// Probit site Phi(y v^T x) against an ND cavity, in closed form.
TiltedMomentsND tilted_moments_probit(int y, const Eigen::VectorXd& v,
                                      const GaussianDensityND& cavity);

/// phi(v^T x): 1D quadrature on the cavity marginal along v, lifted back to
/// d dimensions by the rank-one update.
TiltedMomentsND tilted_moments_rank_one(const SiteModel1D& site, const Eigen::VectorXd& v,
                                        const GaussianDensityND& cavity,
                                        const QuadratureConfig& cfg = {});

/// 1/2 (N(y; x1, 1) + N(y; x2, 1)) against a 2D cavity, in closed form.
TiltedMomentsND tilted_moments_mixture(double y, const GaussianDensityND& cavity);

/// Gaussian site times a Gaussian cavity. The cavity may be improper as long
/// as the product is a density; log_z is then reported as 0 (undefined).
TiltedMomentsND tilted_moments_gaussian(const NaturalParamsND& site, const NaturalParamsND& cavity,
                                        double site_constant = 0.0);

/// Dispatch on site structure. Cavities that are not densities are only
/// accepted when the hybrid is still one (Gaussian sites, or a flat cavity
/// with a normalizable 1D site); otherwise NotADensityError.
TiltedMomentsND tilted_moments(const SiteModelND& site, const NaturalParamsND& cavity,
                               const QuadratureConfig& cfg = {});

/// from_moments(m).params - cavity; the result may have any sign.
NaturalParams1D site_update_from_moments(const TiltedMoments1D& m, const NaturalParams1D& cavity);
NaturalParamsND site_update_from_moments(const TiltedMomentsND& m, const NaturalParamsND& cavity);

/// Site update from E_h[phi''], Var_h(phi') and E_h[phi'] instead of
/// 1/var_h - beta. Equal to site_update_from_moments in exact arithmetic but
/// keeps full relative accuracy in beta_i when beta >> beta_i.
NaturalParams1D site_update_stable(const HybridStatistics1D& stats,
                                   const GaussianDensity1D& cavity);

/// |r_i - (beta_i mu_h - E_h[phi'])|
double stein_residual(const SiteModel1D& site, const GaussianDensity1D& cavity,
                      const NaturalParams1D& update, const TiltedMoments1D& m,
                      const QuadratureConfig& cfg = {});

struct BrascampLiebResult {
  double var = 0.0;
  double bound = 0.0;
  /// False when phi'' + beta <= 0 somewhere on the quadrature support.
  bool applicable = true;
  bool holds = false;
};

BrascampLiebResult brascamp_lieb_check(const SiteModel1D& site, const GaussianDensity1D& cavity,
                                       const QuadratureConfig& cfg = {});

}  // namespace eplab
