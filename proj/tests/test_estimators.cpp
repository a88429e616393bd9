#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "sst/errors.hpp"
#include "sst/estimators.hpp"

using namespace sst;

namespace {
const double kInf = std::numeric_limits<double>::infinity();
}

TEST_CASE("empirical survival with censoring") {
  const auto c = survival({1.0, 2.0, 3.0, kInf}, {0.0, 1.5, 2.0, 10.0});
  REQUIRE(c.survival.size() == 4);
  CHECK(c.survival[0] == 1.0);
  CHECK(c.survival[1] == 0.75);
  CHECK(c.survival[2] == 0.5);
  CHECK(c.survival[3] == 0.25);
  CHECK(c.n == 4);
  CHECK(c.ci_half_width[0] == 0.0);
  // z_{0.975} sqrt(0.25 / 4).
  CHECK(c.ci_half_width[2] == doctest::Approx(1.959963984540054 * 0.25).epsilon(1e-12));
}

TEST_CASE("survival rows and csv layout") {
  const auto c = survival({1.0, 2.0}, {0.5, 1.5});
  const auto rows = survival_rows(c);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].estimate == 1.0);
  CHECK(rows[1].ci_low >= 0.0);
  CHECK(rows[1].ci_high <= 1.0);
  CHECK(rows[1].n_effective == 2.0);
  std::ostringstream out;
  write_csv(out, rows);
  const std::string s = out.str();
  CHECK(s.rfind("t,estimate,ci_low,ci_high,n_effective\n", 0) == 0);
  CHECK(s.find("\n0.5,1,1,1,2\n") != std::string::npos);
}

TEST_CASE("real formatting round trips") {
  CHECK(format_real(0.1) == "0.10000000000000001");
  CHECK(std::stod(format_real(0.1)) == 0.1);
  CHECK(format_real(kInf) == "inf");
  CHECK(format_real(-kInf) == "-inf");
  CHECK(format_real(std::nan("")) == "nan");
  CHECK(format_real(3.0) == "3");
  for (double v : {1.0 / 3.0, 2.5e-300, -7.123456789012345e12})
    CHECK(std::stod(format_real(v)) == v);
}

TEST_CASE("kolmogorov distribution") {
  CHECK(kolmogorov_q(0.0) == 1.0);
  CHECK(kolmogorov_q(1.0) == doctest::Approx(0.26999967167735456).epsilon(1e-10));
  CHECK(kolmogorov_q(1.3580986393225505) == doctest::Approx(0.05).epsilon(1e-8));
  CHECK(kolmogorov_q(3.0) < 1e-7);
}

TEST_CASE("two-sample KS") {
  const std::vector<double> a{0.1, 0.4, 0.7, 0.2, 0.9};
  const auto same = ks_two_sample(a, a);
  CHECK(same.statistic == 0.0);
  CHECK(same.pass);
  const auto apart = ks_two_sample({1.0, 2.0, 3.0}, {4.0, 5.0});
  CHECK(apart.statistic == 1.0);
  const auto half = ks_two_sample({1.0, 2.0, 3.0, 4.0}, {2.5, 3.5, 4.5, 5.5});
  CHECK(half.statistic == 0.5);
  std::vector<double> x, y;
  Stream s = substream(3, 0), t = substream(3, 1);
  for (int i = 0; i < 5000; ++i) {
    x.push_back(s.normal());
    y.push_back(t.normal());
  }
  CHECK(ks_two_sample(x, y).pass);
  for (auto& v : y) v += 0.2;
  CHECK_FALSE(ks_two_sample(x, y).pass);
  CHECK_THROWS_AS(ks_two_sample({}, {1.0}), ConfigError);
}

TEST_CASE("pathwise dominance counting") {
  CoupledPath good;
  good.t = {0.1, 0.2, 0.3};
  good.u = {0.5, 1.0, 2.0};
  good.y = {0.6, 1.0, 1.5};
  good.checked = {1, 1, 0};
  CoupledPath bad = good;
  bad.valid = false;
  const auto r = dominance_report({good, bad});
  CHECK(r.checked == 2);
  CHECK(r.violations == 0);
  CHECK(r.invalid_paths == 1);
  good.checked[2] = 1;
  const auto r2 = dominance_report({good});
  CHECK(r2.violations == 1);
  CHECK(r2.fraction == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("survival curve dominance") {
  const std::vector<double> grid{0.5, 1.0, 2.0};
  const auto a = survival({0.3, 0.8, 1.2, 1.9, 2.5, 3.0}, grid);
  const auto same = survival_dominance(a, a);
  CHECK(same.holds);
  CHECK(same.max_excess_se == 0.0);
  const auto gone = survival({0.1, 0.1, 0.1, 0.1, 0.1, 0.1}, grid);
  CHECK(survival_dominance(gone, a).holds);
  std::vector<double> late(400, 5.0), early(400, 0.2);
  const auto l = survival(late, grid), e = survival(early, grid);
  CHECK_FALSE(survival_dominance(l, e).holds);
  CHECK_THROWS_AS(survival_dominance(a, survival({1.0}, {0.5})), ConfigError);
}

TEST_CASE("separation at time zero from a half-line start is one") {
  const auto ou = CoefficientModel::ornstein_uhlenbeck();
  const auto est = separation_halfline(ou, 0.0, 20000, 5);
  CHECK(est.s_hat == 1.0);
  CHECK(est.n == 20000);
}

TEST_CASE("separation of stationary samples is small") {
  const StationaryMeasure mu(CoefficientModel::ornstein_uhlenbeck());
  Stream s = substream(8, 0);
  std::vector<double> x(100000);
  for (auto& v : x) v = s.normal();
  const auto est = separation_from_samples(mu, 1.0, x, 9);
  CHECK(est.s_hat < 0.15);
  CHECK(est.ci_low <= est.ci_high);
  CHECK(est.ci >= 0.0);
}

TEST_CASE("separation decreases in time") {
  const auto ou = CoefficientModel::ornstein_uhlenbeck();
  SeparationOptions opt;
  opt.bootstrap = 20;
  const double s1 = separation_halfline(ou, 0.5, 20000, 10, opt).s_hat;
  const double s2 = separation_halfline(ou, 2.0, 20000, 10, opt).s_hat;
  CHECK(s1 > s2);
  CHECK(s1 < 1.0);
}

TEST_CASE("separation and survival comparison") {
  SeparationEstimate sep;
  sep.t = 1.0;
  sep.s_hat = 0.4;
  sep.ci = 0.03;
  SurvivalCurve surv;
  surv.t_grid = {0.0, 1.0};
  surv.survival = {1.0, 0.5};
  surv.ci_half_width = {0.0, 0.04};
  const auto r = check_separation_bound(sep, surv);
  CHECK(r.survival == 0.5);
  CHECK(r.joint_ci == doctest::Approx(0.05));
  CHECK_FALSE(r.violation);
  CHECK_FALSE(r.agreement);
  sep.s_hat = 0.6;
  CHECK(check_separation_bound(sep, surv).violation);
  sep.t = 0.7;
  CHECK_THROWS_AS(check_separation_bound(sep, surv), ConfigError);
}
