#pragma once

// Site (factor) models l_i(x) = exp(-phi_i(x)) with analytic derivatives.

#include "eplab/gaussian.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace eplab {

using ScalarFn = std::function<double(double)>;

/// Regularity constants: range of phi'' (B) and bounds on |phi'''| (K3),
/// |phi''''| (K4). Advisory only.
struct SiteMetadata {
  std::optional<double> curvature_range;
  std::optional<double> k3;
  std::optional<double> k4;
};

/// phi(x) = gamma/2 x^2 - alpha x + constant
struct GaussianForm {
  double gamma = 0.0;
  double alpha = 0.0;
  double constant = 0.0;
};

/// phi(a) = -log Phi(y a)
struct ProbitForm {
  double y = 1.0;
};

using ClosedForm1D = std::variant<std::monostate, GaussianForm, ProbitForm>;

struct SiteModel1D {
  std::string name;
  ScalarFn phi;
  ScalarFn d1;
  ScalarFn d2;
  ScalarFn d3;  // empty when not provided
  ScalarFn d4;
  SiteMetadata meta;
  ClosedForm1D closed_form;
};

SiteModel1D gaussian_site(double gamma, double alpha);
SiteModel1D logit_site();
SiteModel1D double_logistic_site(double scale);
/// Throws DomainError unless y is +1 or -1.
SiteModel1D probit_site(int y);
SiteModel1D cauchy_site(double y);

/// x -> phi(slope * x + offset), derivatives by the chain rule.
SiteModel1D affine_site(const SiteModel1D& site, double slope, double offset);

using VectorFn = std::function<double(const Eigen::VectorXd&)>;
using GradientFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using HessianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

/// phi(x) = phi_1d(v^T x)
struct RankOneForm {
  SiteModel1D site;
  Eigen::VectorXd direction;
};

/// phi(x) = -log[ 1/2 N(y; x1, 1) + 1/2 N(y; x2, 1) ]
struct MixtureForm {
  double y = 0.0;
};

/// phi(x) = 1/2 x^T Q x - r^T x
struct GaussianFormND {
  NaturalParamsND params;
};

using StructureND = std::variant<std::monostate, RankOneForm, MixtureForm, GaussianFormND>;

struct SiteModelND {
  std::string name;
  Eigen::Index dim = 0;
  VectorFn phi;
  GradientFn grad;
  HessianFn hess;
  StructureND structure;
};

SiteModelND compose_linear(const SiteModel1D& site, const Eigen::VectorXd& regressor);
SiteModelND mixture_site_2d(double y);
SiteModelND gaussian_site_nd(const NaturalParamsND& params);
/// Lift a 1D site to a one-dimensional SiteModelND.
SiteModelND as_nd(const SiteModel1D& site);

struct AuditFailure {
  std::string site;
  std::string derivative;
  std::vector<double> point;
  double discrepancy = 0.0;
  double tolerance = 0.0;
};

struct SiteAudit {
  std::string site;
  double max_d1_discrepancy = 0.0;
  double max_d2_discrepancy = 0.0;
  std::vector<AuditFailure> failures;
  bool passed() const { return failures.empty(); }
};

/// Finite-difference audit: |phi' - FD(phi)| <= rel_tol (1 + |phi'|), likewise
/// for phi'' against differences of phi.
SiteAudit audit_derivatives(const SiteModel1D& site, const std::vector<double>& points,
                            double rel_tol = 1e-5);
SiteAudit audit_derivatives(const SiteModelND& site, const std::vector<Eigen::VectorXd>& points,
                            double rel_tol = 1e-5);

/// Seeded uniform points in [lo, hi].
std::vector<double> audit_points(std::size_t count, double lo, double hi, unsigned seed);
std::vector<Eigen::VectorXd> audit_points_nd(std::size_t count, Eigen::Index dim, double lo,
                                             double hi, unsigned seed);

/// Smallest phi'' over a uniform grid.
double min_curvature(const SiteModel1D& site, double lo, double hi, std::size_t points);

}  // namespace eplab
