#include "eplab/quadrature.hpp"

#include "eplab/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>

namespace eplab {

namespace {

GaussHermiteRule build_gauss_hermite(int n) {
  // Eigenvalues of the Jacobi matrix give the nodes. Weights come from the
  // Christoffel function 1 / sum_k p_k(x)^2 over orthonormal Hermite
  // polynomials, which keeps the tiny tail weights accurate in relative terms
  // (eigenvector components only carry absolute accuracy).
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(0.5 * k);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi, Eigen::EigenvaluesOnly);
  GaussHermiteRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  rule.log_weights.resize(n);
  const double p0 = std::pow(std::numbers::pi, -0.25);
  for (int i = 0; i < n; ++i) {
    // symmetrize exactly around zero
    const double x = 0.5 * (eig.eigenvalues()(i) - eig.eigenvalues()(n - 1 - i));
    double prev = 0.0;
    double cur = p0;
    double sum = cur * cur;
    for (int k = 0; k + 1 < n; ++k) {
      const double next = std::sqrt(2.0 / (k + 1)) * x * cur - std::sqrt(double(k) / (k + 1)) * prev;
      prev = cur;
      cur = next;
      sum += cur * cur;
    }
    rule.nodes[i] = x;
    rule.weights[i] = 1.0 / sum;
    rule.log_weights[i] = -std::log(sum);
  }
  return rule;
}

constexpr std::array<double, 8> kXgk{
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> kWgk{
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
// Gauss weights for kXgk[1], kXgk[3], kXgk[5], kXgk[7]
constexpr std::array<double, 4> kWg{
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
  double a = 0.0;
  double b = 0.0;
  std::vector<double> value;
  std::vector<double> abs_value;
  std::vector<double> error;
};

// One 15-point Kronrod evaluation with QUADPACK's error heuristic.
Panel kronrod_panel(const VectorIntegrand& f, std::size_t m, double a, double b,
                    std::vector<double>& buf, int& evaluations) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  std::array<std::vector<double>, 15> vals;
  std::array<double, 15> xs{};
  xs[0] = center;
  for (int j = 0; j < 7; ++j) {
    xs[1 + 2 * j] = center - half * kXgk[j];
    xs[2 + 2 * j] = center + half * kXgk[j];
  }
  for (int k = 0; k < 15; ++k) {
    buf.assign(m, 0.0);
    f(xs[k], std::span<double>(buf));
    for (double v : buf) {
      if (!std::isfinite(v)) {
        throw QuadratureError("non-finite integrand at x = " + std::to_string(xs[k]));
      }
    }
    vals[k] = buf;
  }
  evaluations += 15;

  Panel p;
  p.a = a;
  p.b = b;
  p.value.assign(m, 0.0);
  p.abs_value.assign(m, 0.0);
  p.error.assign(m, 0.0);
  constexpr double eps = std::numeric_limits<double>::epsilon();
  for (std::size_t c = 0; c < m; ++c) {
    auto at = [&](int k) { return vals[k][c]; };
    double resk = kWgk[7] * at(0);
    double resg = kWg[3] * at(0);
    double resabs = kWgk[7] * std::abs(at(0));
    for (int j = 0; j < 7; ++j) {
      const double s = at(1 + 2 * j) + at(2 + 2 * j);
      resk += kWgk[j] * s;
      resabs += kWgk[j] * (std::abs(at(1 + 2 * j)) + std::abs(at(2 + 2 * j)));
      if (j % 2 == 1) resg += kWg[j / 2] * s;
    }
    const double mean = 0.5 * resk;
    double resasc = kWgk[7] * std::abs(at(0) - mean);
    for (int j = 0; j < 7; ++j) {
      resasc += kWgk[j] * (std::abs(at(1 + 2 * j) - mean) + std::abs(at(2 + 2 * j) - mean));
    }
    double err = std::abs((resk - resg) * half);
    resasc *= std::abs(half);
    resabs *= std::abs(half);
    if (resasc != 0.0 && err != 0.0) err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
    err = std::max(err, 50.0 * eps * resabs);
    p.value[c] = resk * half;
    p.abs_value[c] = resabs;
    p.error[c] = err;
  }
  return p;
}

}  // namespace

const GaussHermiteRule& gauss_hermite_rule(int n) {
  if (n < 1) throw DomainError("Gauss-Hermite rule needs at least one node");
  static std::mutex mu;
  static std::map<int, GaussHermiteRule> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, build_gauss_hermite(n)).first;
  return it->second;
}

AdaptiveResult integrate_adaptive(const VectorIntegrand& f, std::size_t components,
                                  std::span<const double> breakpoints,
                                  const AdaptiveOptions& opt) {
  if (breakpoints.size() < 2) throw DomainError("need at least two breakpoints");
  AdaptiveResult res;
  std::vector<double> buf;
  std::vector<Panel> panels;
  for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
    if (!(breakpoints[i + 1] > breakpoints[i])) continue;
    panels.push_back(kronrod_panel(f, components, breakpoints[i], breakpoints[i + 1], buf,
                                   res.evaluations));
  }
  if (panels.empty()) throw DomainError("breakpoints span an empty interval");

  const auto m = components;
  std::vector<double> total(m), total_abs(m), total_err(m);
  auto tally = [&] {
    std::fill(total.begin(), total.end(), 0.0);
    std::fill(total_abs.begin(), total_abs.end(), 0.0);
    std::fill(total_err.begin(), total_err.end(), 0.0);
    for (const auto& p : panels) {
      for (std::size_t c = 0; c < m; ++c) {
        total[c] += p.value[c];
        total_abs[c] += p.abs_value[c];
        total_err[c] += p.error[c];
      }
    }
  };
  auto done = [&] {
    for (std::size_t c = 0; c < m; ++c) {
      if (total_err[c] > opt.rel_tol * total_abs[c]) return false;
    }
    return true;
  };
  auto badness = [&](const Panel& p) {
    double worst = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      const double scale = opt.rel_tol * total_abs[c];
      if (scale > 0.0) worst = std::max(worst, p.error[c] / scale);
    }
    return worst;
  };

  tally();
  while (!done() && static_cast<int>(panels.size()) < opt.max_intervals) {
    std::size_t worst = 0;
    double worst_bad = -1.0;
    for (std::size_t i = 0; i < panels.size(); ++i) {
      const double b = badness(panels[i]);
      if (b > worst_bad) {
        worst_bad = b;
        worst = i;
      }
    }
    const double a = panels[worst].a;
    const double b = panels[worst].b;
    const double mid = 0.5 * (a + b);
    if (!(mid > a && mid < b)) break;  // panel cannot be split further
    panels[worst] = kronrod_panel(f, m, a, mid, buf, res.evaluations);
    panels.push_back(kronrod_panel(f, m, mid, b, buf, res.evaluations));
    tally();
  }
  res.converged = done();
  res.values = total;
  res.abs_values = total_abs;
  res.errors = total_err;
  res.intervals = static_cast<int>(panels.size());
  return res;
}

}  // namespace eplab
