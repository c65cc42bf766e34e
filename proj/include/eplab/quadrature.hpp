#pragma once

// Numerical integration primitives: Gauss-Hermite rules and an adaptive
// Gauss-Kronrod integrator for vector-valued integrands.

#include <functional>
#include <span>
#include <vector>

namespace eplab {

/// Nodes and weights for the weight function e^{-t^2} on the real line.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::vector<double> log_weights;
};

/// Golub-Welsch; rules are cached per size. Throws DomainError for n < 1.
const GaussHermiteRule& gauss_hermite_rule(int n);

/// Writes the integrand's components at x into out (out.size() == components).
using VectorIntegrand = std::function<void(double x, std::span<double> out)>;

struct AdaptiveOptions {
  /// Per component: error <= rel_tol * integral of |f_j|.
  double rel_tol = 1e-12;
  int max_intervals = 4000;
};

struct AdaptiveResult {
  std::vector<double> values;
  std::vector<double> abs_values;  // integrals of |f_j|
  std::vector<double> errors;
  int intervals = 0;
  int evaluations = 0;
  bool converged = false;
};

/// Integrates over [breakpoints.front(), breakpoints.back()] starting from the
/// panels the breakpoints define, bisecting the worst panel (G7/K15 pairs)
/// until every component meets its tolerance. Breakpoints must be sorted.
AdaptiveResult integrate_adaptive(const VectorIntegrand& f, std::size_t components,
                                  std::span<const double> breakpoints,
                                  const AdaptiveOptions& opt = {});

}  // namespace eplab
