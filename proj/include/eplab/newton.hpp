#pragma once

// Newton's method as an optimizer and as an inference iteration; the
// canonical Gaussian approximation (CGA) at a mode.

#include "eplab/gaussian.hpp"
#include "eplab/sites.hpp"

#include <Eigen/Dense>

#include <vector>

namespace eplab {

/// psi = sum of the site potentials.
struct ObjectiveND {
  Eigen::Index dim = 0;
  VectorFn psi;
  GradientFn grad;
  HessianFn hess;
};

ObjectiveND objective_from_sites(std::vector<SiteModelND> sites);
ObjectiveND objective_from_sites(const std::vector<SiteModel1D>& sites);

struct ModeResult {
  Eigen::VectorXd x_star;
  Eigen::MatrixXd hess_at_mode;
  bool converged = false;
  int iterations = 0;
  /// psi at every accepted iterate, starting with x0.
  std::vector<double> psi_trace;
};

/// x - H^{-1} g. Throws SingularHessianError when H is singular.
Eigen::VectorXd newton_step(const ObjectiveND& obj, const Eigen::VectorXd& x);

/// Gaussian with precision psi''(mu) and mean mu - psi''(mu)^{-1} psi'(mu).
/// Throws SingularHessianError unless psi''(mu) is positive definite.
GaussianDensityND newton_inference_step(const ObjectiveND& obj, const GaussianDensityND& g);

/// Newton with step halving until psi decreases (down to a 1e-8 fraction);
/// steepest descent when the Hessian is not positive definite. Converged when
/// the gradient norm is <= grad_tol.
ModeResult find_mode(const ObjectiveND& obj, const Eigen::VectorXd& x0, double grad_tol = 1e-10,
                     int max_iter = 200);

/// N(x*, psi''(x*)^{-1}). Throws Error when the mode search fails and
/// SaddlePointError when the Hessian at the stationary point is indefinite.
GaussianDensityND cga(const ObjectiveND& obj, const Eigen::VectorXd& x0, double grad_tol = 1e-10,
                      int max_iter = 200);

}  // namespace eplab
