#include "eplab/newton.hpp"

#include "eplab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace eplab {

ObjectiveND objective_from_sites(std::vector<SiteModelND> sites) {
  if (sites.empty()) throw DomainError("objective needs at least one site");
  auto shared = std::make_shared<const std::vector<SiteModelND>>(std::move(sites));
  ObjectiveND obj;
  obj.dim = shared->front().dim;
  for (const auto& s : *shared) {
    if (s.dim != obj.dim) throw DimensionMismatch("sites of different dimension");
  }
  obj.psi = [shared](const Eigen::VectorXd& x) {
    double total = 0.0;
    for (const auto& s : *shared) total += s.phi(x);
    return total;
  };
  obj.grad = [shared, d = obj.dim](const Eigen::VectorXd& x) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
    for (const auto& s : *shared) g += s.grad(x);
    return g;
  };
  obj.hess = [shared, d = obj.dim](const Eigen::VectorXd& x) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
    for (const auto& s : *shared) h += s.hess(x);
    return h;
  };
  return obj;
}

ObjectiveND objective_from_sites(const std::vector<SiteModel1D>& sites) {
  std::vector<SiteModelND> nd;
  nd.reserve(sites.size());
  for (const auto& s : sites) nd.push_back(as_nd(s));
  return objective_from_sites(std::move(nd));
}

Eigen::VectorXd newton_step(const ObjectiveND& obj, const Eigen::VectorXd& x) {
  const Eigen::MatrixXd h = obj.hess(x);
  if (!h.allFinite()) throw SingularHessianError("Hessian is not finite");
  Eigen::FullPivLU<Eigen::MatrixXd> lu(h);
  if (!lu.isInvertible()) throw SingularHessianError("Hessian is singular");
  return x - lu.solve(obj.grad(x));
}

GaussianDensityND newton_inference_step(const ObjectiveND& obj, const GaussianDensityND& g) {
  const Eigen::VectorXd& mu = g.mean();
  const Eigen::MatrixXd h = obj.hess(mu);
  Eigen::LLT<Eigen::MatrixXd> llt(h);
  if (!h.allFinite() || llt.info() != Eigen::Success) {
    throw SingularHessianError("Hessian at the current mean is not positive definite");
  }
  // precision psi''(mu), shift psi''(mu) mu - psi'(mu)
  return GaussianDensityND(NaturalParamsND(h, h * mu - obj.grad(mu)));
}

ModeResult find_mode(const ObjectiveND& obj, const Eigen::VectorXd& x0, double grad_tol,
                     int max_iter) {
  constexpr double kMinFraction = 1e-8;
  ModeResult res;
  Eigen::VectorXd x = x0;
  double f = obj.psi(x);
  res.psi_trace.push_back(f);
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd g = obj.grad(x);
    if (g.norm() <= grad_tol) {
      res.converged = true;
      break;
    }
    const Eigen::MatrixXd h = obj.hess(x);
    Eigen::LLT<Eigen::MatrixXd> llt(h);
    const bool newton_ok = h.allFinite() && llt.info() == Eigen::Success;

    // Near the mode psi is flat to rounding; a tie then counts as progress
    // when the gradient shrinks.
    const double tie = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f));
    auto line_search = [&](const Eigen::VectorXd& dir) {
      for (double t = 1.0; t >= kMinFraction; t *= 0.5) {
        const Eigen::VectorXd xn = x + t * dir;
        const double fn = obj.psi(xn);
        if (fn < f || (fn <= f + tie && obj.grad(xn).norm() < g.norm())) {
          x = xn;
          f = fn;
          return true;
        }
      }
      return false;
    };
    bool moved = newton_ok && line_search(-llt.solve(g));
    if (!moved) moved = line_search(-g);
    res.iterations = it + 1;
    if (!moved) break;
    res.psi_trace.push_back(f);
  }
  if (!res.converged) res.converged = obj.grad(x).norm() <= grad_tol;
  res.x_star = x;
  res.hess_at_mode = obj.hess(x);
  return res;
}

GaussianDensityND cga(const ObjectiveND& obj, const Eigen::VectorXd& x0, double grad_tol,
                      int max_iter) {
  const ModeResult m = find_mode(obj, x0, grad_tol, max_iter);
  if (!m.converged) throw Error("mode search did not converge");
  Eigen::LLT<Eigen::MatrixXd> llt(m.hess_at_mode);
  if (llt.info() != Eigen::Success) {
    throw SaddlePointError("Hessian at the stationary point is not positive definite");
  }
  return GaussianDensityND(NaturalParamsND(m.hess_at_mode, m.hess_at_mode * m.x_star));
}

}  // namespace eplab
