#include "eplab/ep.hpp"
#include "eplab/errors.hpp"
#include "eplab/newton.hpp"
#include "eplab/sites.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace eplab;

namespace {

std::vector<SiteModelND> gaussian_sites_2d() {
  std::vector<SiteModelND> s;
  Eigen::Matrix2d q;
  q << 1.0, 0.2, 0.2, 0.5;
  s.push_back(gaussian_site_nd(NaturalParamsND(q, Eigen::Vector2d(0.3, -0.1))));
  s.push_back(gaussian_site_nd(NaturalParamsND(Eigen::Matrix2d::Identity() * 2.0, Eigen::Vector2d(1.0, 0.0))));
  q << 0.0, 0.0, 0.0, 3.0;
  s.push_back(gaussian_site_nd(NaturalParamsND(q, Eigen::Vector2d(0.0, 0.6))));
  return s;
}

NaturalParamsND exact_sum(const std::vector<SiteModelND>& sites) {
  NaturalParamsND t = NaturalParamsND::zero(sites.front().dim);
  for (const auto& s : sites) t += std::get<GaussianFormND>(s.structure).params;
  return t;
}

std::vector<SiteModelND> basin_sites() {
  std::vector<SiteModelND> s;
  for (int i = 0; i < 5; ++i) s.push_back(as_nd(double_logistic_site(5.0)));
  s.push_back(as_nd(gaussian_site(1.0, 0.0)));
  return s;
}

EPState state_from_global_1d(std::size_t n, double precision, double mean) {
  std::vector<NaturalParamsND> p(n, NaturalParamsND::from_1d({precision / n, precision * mean / n}));
  return init_given(p);
}

}  // namespace

TEST(EP, ConjugateAllAlgorithmsExactInOnePass) {
  const auto sites = gaussian_sites_2d();
  const auto moments = make_moments_fn(sites);
  const NaturalParamsND exact = exact_sum(sites);
  const EPState init = init_unit_global(sites.size(), 2);
  RunConfig cfg;
  const EPState seq = sequential_pass(init, moments, cfg);
  const EPState par = parallel_pass(init, moments, cfg);
  const AEPState a = aep_pass(as_aep(init), moments, cfg);
  EXPECT_LT(relative_distance(seq.global, exact), 1e-12);
  EXPECT_LT(relative_distance(par.global, exact), 1e-12);
  EXPECT_LT(relative_distance(a.global, exact), 1e-12);
  for (std::size_t i = 0; i < sites.size(); ++i) {
    EXPECT_LT((seq.site_params[i] - std::get<GaussianFormND>(sites[i].structure).params).max_abs(), 1e-12);
    EXPECT_LT((par.site_params[i] - seq.site_params[i]).max_abs(), 1e-12);
  }
  // averaged rule: fixed point shared, reached geometrically
  const AEPState fixed = aep_averaged_pass({exact, sites.size()}, moments, cfg);
  EXPECT_LT(relative_distance(fixed.global, exact), 1e-12);
  const AEPRun r = run(as_aep(init), moments, cfg, aep_averaged_pass);
  EXPECT_EQ(r.report.status, RunStatus::converged);
  EXPECT_LT(relative_distance(r.state.global, exact), 1e-8);
}

TEST(EP, ConjugateRunConvergesWithinTwoPasses) {
  const auto sites = gaussian_sites_2d();
  const auto moments = make_moments_fn(sites);
  const EPState init = init_unit_global(sites.size(), 2);
  RunConfig cfg;
  EXPECT_LE(run(init, moments, cfg, sequential_pass).report.passes_used, 2);
  EXPECT_LE(run(init, moments, cfg, parallel_pass).report.passes_used, 2);
  EXPECT_LE(run(as_aep(init), moments, cfg, aep_pass).report.passes_used, 2);
}

TEST(EP, SingleSiteIsKlProjection) {
  // one normalizable site from a flat start: q becomes its moment match
  const std::vector<SiteModelND> sites{as_nd(gaussian_site(2.0, 1.0))};
  const auto moments = make_moments_fn(sites);
  const EPState init = init_given({NaturalParamsND::zero(1)});
  const EPState next = sequential_pass(init, moments, RunConfig{});
  const GaussianDensityND q(next.global);
  EXPECT_NEAR(q.mean()(0), 0.5, 1e-12);
  EXPECT_NEAR(q.covariance()(0, 0), 0.5, 1e-12);

  // and for a non-Gaussian site through normalized_site_moments
  const std::vector<SiteModelND> dl{as_nd(double_logistic_site(2.0))};
  const EPState k = sequential_pass(init, make_moments_fn(dl), RunConfig{});
  const auto m = normalized_site_moments(double_logistic_site(2.0));
  EXPECT_NEAR(GaussianDensityND(k.global).covariance()(0, 0), m.variance, 1e-12);

  // aEP with n = 1 sees the same flat cavity
  const AEPState a = aep_pass(as_aep(init), make_moments_fn(dl), RunConfig{});
  EXPECT_LT((a.global - k.global).max_abs(), 1e-14);
  const AEPState b = aep_averaged_pass(as_aep(init), make_moments_fn(dl), RunConfig{});
  EXPECT_LT((a.global - b.global).max_abs(), 1e-14);
}

TEST(EP, SkipLeavesSiteUnchanged) {
  const std::vector<SiteModelND> sites{as_nd(logit_site()), as_nd(logit_site()), as_nd(gaussian_site(1.0, 0.0))};
  // site 0 holds all the precision: its cavity is negative
  EPState s = init_given({NaturalParamsND::from_1d({3.0, 0.0}), NaturalParamsND::from_1d({-1.5, 0.0}),
                          NaturalParamsND::from_1d({1.0, 0.0})});
  PassLog log;
  log.pass = 1;
  const EPState next = parallel_pass(s, make_moments_fn(sites), RunConfig{}, &log);
  ASSERT_EQ(log.skips.size(), 1u);
  EXPECT_EQ(log.skips[0].site, 0u);
  EXPECT_EQ(next.site_params[0].as_1d(), s.site_params[0].as_1d());
}

TEST(EP, GlobalIsResummed) {
  const std::vector<SiteModelND> sites{as_nd(logit_site()), as_nd(affine_site(logit_site(), -1.0, 0.5)),
                                       as_nd(gaussian_site(1.0, 0.0))};
  const EPRun r = run(init_unit_global(3, 1), make_moments_fn(sites), RunConfig{}, sequential_pass);
  ASSERT_EQ(r.report.status, RunStatus::converged);
  const NaturalParamsND sum = sum_sites(r.state.site_params);
  EXPECT_LE(relative_distance(r.state.global, sum), 1e-10);
  EXPECT_GT(r.state.global.as_1d().precision, 0.0);
}

TEST(EP, Deterministic) {
  const auto sites = basin_sites();
  const auto moments = make_moments_fn(sites);
  const EPState s = state_from_global_1d(sites.size(), 3.0, 0.4);
  const EPState a = parallel_pass(s, moments, RunConfig{});
  const EPState b = parallel_pass(s, moments, RunConfig{});
  EXPECT_EQ(a.global.as_1d(), b.global.as_1d());
}

TEST(EP, AepInvalidCavityThrows) {
  const auto sites = basin_sites();
  const AEPState s{NaturalParamsND::from_1d({-1.0, 0.0}), sites.size()};
  EXPECT_THROW(aep_pass(s, make_moments_fn(sites), RunConfig{}), InvalidCavityError);
  const AEPRun r = run(s, make_moments_fn(sites), RunConfig{}, aep_pass);
  EXPECT_EQ(r.report.status, RunStatus::diverged);
}

TEST(EP, AepFixedPointIsStationary) {
  const auto sites = basin_sites();
  const auto moments = make_moments_fn(sites);
  RunConfig damped;
  damped.damping = 0.5;
  damped.max_passes = 500;
  damped.tol = 1e-13;
  const AEPRun r = run(AEPState{NaturalParamsND::from_1d({1.0, 0.0}), sites.size()}, moments, damped, aep_pass);
  ASSERT_EQ(r.report.status, RunStatus::converged);
  const AEPState again = aep_pass(r.state, moments, RunConfig{});
  EXPECT_LT(relative_distance(again.global, r.state.global), 1e-8);
  const AEPState avg = aep_averaged_pass(r.state, moments, RunConfig{});
  EXPECT_LT(relative_distance(avg.global, r.state.global), 1e-8);
}

TEST(EP, DoubleLogisticParallelCyclesFarAndConvergesNear) {
  const auto sites = basin_sites();
  const auto moments = make_moments_fn(sites);
  RunConfig cfg;
  const EPRun near = run(init_unit_global(sites.size(), 1), moments, cfg, parallel_pass);
  EXPECT_EQ(near.report.status, RunStatus::converged);
  const double var = GaussianDensityND(near.state.global).covariance()(0, 0);
  EXPECT_NEAR(GaussianDensityND(near.state.global).mean()(0), 0.0, 1e-8);

  // the target is symmetric and log-concave near 0: the CGA there has
  // variance 1 / (5 * 12.5 + 1); EP lies within a factor 2
  const GaussianDensityND c = cga(objective_from_sites(sites), Eigen::VectorXd::Constant(1, 0.1));
  EXPECT_NEAR(c.covariance()(0, 0), 1.0 / 63.5, 1e-12);
  EXPECT_GT(var, 0.5 * c.covariance()(0, 0));
  EXPECT_LT(var, 2.0 * c.covariance()(0, 0));

  const EPRun far = run(state_from_global_1d(sites.size(), 100.0, 3.0), moments, cfg, parallel_pass);
  EXPECT_EQ(far.report.status_string(), "cycle(2)");
}

TEST(EP, Initializers) {
  const EPState f = init_flat_sites_with_prior(4, 3, NaturalParamsND::from_1d({1.0, 0.0}));
  EXPECT_EQ(f.global.as_1d(), (NaturalParams1D{1.0, 0.0}));
  EXPECT_EQ(f.site_params[0].as_1d(), (NaturalParams1D{0.0, 0.0}));
  const EPState u = init_unit_global(4, 1);
  for (const auto& s : u.site_params) EXPECT_EQ(s.as_1d(), (NaturalParams1D{0.25, 0.0}));
  const EPState g = init_given({NaturalParamsND::from_1d({1.0, 2.0}), NaturalParamsND::from_1d({0.5, -1.0})});
  EXPECT_EQ(g.site_params[1].as_1d(), (NaturalParams1D{0.5, -1.0}));
  EXPECT_EQ(g.global.as_1d(), (NaturalParams1D{1.5, 1.0}));
  // aEP cavity algebra for n = 5
  const NaturalParamsND c = (4.0 / 5.0) * NaturalParamsND::from_1d({10.0, 5.0});
  EXPECT_NEAR(c.as_1d().precision, 8.0, 1e-15);
  EXPECT_NEAR(c.as_1d().shift, 4.0, 1e-15);
}

TEST(EP, RunConfigValidation) {
  RunConfig c;
  c.damping = 0.0;
  EXPECT_THROW(c.validate(), DomainError);
  c.damping = 1.5;
  EXPECT_THROW(c.validate(), DomainError);
  c.damping = 1.0;
  c.max_passes = 0;
  EXPECT_THROW(c.validate(), DomainError);
}

TEST(EP, ReportJson) {
  const auto sites = gaussian_sites_2d();
  const EPRun r = run(init_unit_global(3, 2), make_moments_fn(sites), RunConfig{}, parallel_pass);
  const auto j = r.report.to_json();
  EXPECT_EQ(j["status"], "converged");
  EXPECT_EQ(j["trajectory"].size(), static_cast<std::size_t>(r.report.passes_used) + 1);
}
