#include <doctest.h>

#include <cmath>
#include <numbers>

#include "sst/errors.hpp"
#include "sst/numerics.hpp"
#include "sst/ou_suite.hpp"

using namespace sst;

namespace {
// Half the L1 distance between N(0, 1 - e^{-2t}) and N(0, 1) by a fine trapezoid rule.
double tv_by_trapezoid(double t) {
  const double s = std::sqrt(-std::expm1(-2.0 * t));
  const double h = 2e-4, lim = 30.0;
  double sum = 0.0;
  for (double x = -lim; x <= lim; x += h) sum += std::abs(normal_pdf(x / s) / s - normal_pdf(x));
  return 0.5 * sum * h;
}

constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;
}  // namespace

TEST_CASE("density ratio crosses one at x_t") {
  for (double t : {0.1, 0.5, 2.0}) {
    CHECK(std::abs(ou::f_t_minus_one(t, ou::x_t(t))) < 1e-12);
    CHECK(ou::f_t(t, 0.0) > 1.0);
    CHECK(ou::f_t(t, 2.0 * ou::x_t(t)) < 1.0);
    CHECK(ou::f_t_minus_one(t, 0.3) == doctest::Approx(ou::f_t(t, 0.3) - 1.0).epsilon(1e-10));
  }
  CHECK_THROWS_AS(ou::x_t(0.0), ConfigError);
}

TEST_CASE("total variation of the Gaussian relaxation") {
  for (double t : {0.5, 1.0, 5.0}) {
    const double s = std::sqrt(-std::expm1(-2.0 * t)), xt = ou::x_t(t);
    const double closed = 2.0 * (normal_cdf(xt / s) - normal_cdf(xt));
    CHECK(ou::ou_tv_exact(t) == doctest::Approx(closed).epsilon(1e-9));
    CHECK(ou::ou_tv_exact(t) == doctest::Approx(tv_by_trapezoid(t)).epsilon(1e-6));
  }
}

TEST_CASE("total variation decays at rate two with constant gamma(1)") {
  CHECK(std::exp(10.0) * ou::ou_tv_exact(5.0) ==
        doctest::Approx(std::exp(-0.5) * kInvSqrt2Pi).epsilon(0.01));
  const double slope = (std::log(ou::ou_tv_exact(7.0)) - std::log(ou::ou_tv_exact(4.0))) / 3.0;
  CHECK(slope == doctest::Approx(-2.0).epsilon(0.01));
}

TEST_CASE("truncated Gaussian total variation") {
  const auto r = ou::gamma_trunc_tv(2.0);
  CHECK(r.exact == doctest::Approx(2.0 * normal_cdf(-2.0)).epsilon(1e-12));
  CHECK(r.exact == doctest::Approx(0.045500263896358).epsilon(1e-9));
  CHECK(r.bound == doctest::Approx(0.053990966513188).epsilon(1e-9));
  for (double M : {0.5, 1.0, 3.0, 6.0}) CHECK(ou::gamma_trunc_tv(M).exact <= ou::gamma_trunc_tv(M).bound);
}

TEST_CASE("stable drift correction") {
  for (double y : {1e-6, 1e-4, 1e-3, 0.01, 0.5, 2.0, 8.0}) {
    const double direct = 2.0 * normal_pdf(y) / (normal_cdf(y) - 0.5);
    CHECK(ou::g_stable(y) == doctest::Approx(direct).epsilon(1e-8));
    CHECK(ou::V_prime(y) == doctest::Approx(y + ou::g_stable(y)).epsilon(1e-12));
  }
  CHECK(ou::gauss_mass(1.0) == doctest::Approx(0.341344746068542948585).epsilon(1e-14));
  CHECK(ou::gauss_mass(1e-5) == doctest::Approx(1e-5 * kInvSqrt2Pi).epsilon(1e-9));
}

TEST_CASE("crossing point of the two densities") {
  // 30-digit reference.
  CHECK(ou::crossing_point_a() == doctest::Approx(1.39998527687820422673504023765).epsilon(1e-9));
}

TEST_CASE("eigenfunctions of the conditioned generator") {
  for (int n = 1; n <= 3; ++n) CHECK(ou::hdagger_eigen_residual(n) < 1e-5);
  for (int n = 1; n <= 3; ++n) CHECK(ou::htilde_eigen_residual(n) < 1e-5);
}

TEST_CASE("nu pairings") {
  for (int n = 1; n <= 3; ++n)
    for (int m = 1; m < n; ++m) CHECK(std::abs(ou::nu_pairing(n, m)) < 1e-10);
  // (2n - 1)! / (2 sqrt(2 pi)).
  const double fact[] = {1.0, 6.0, 120.0};
  for (int n = 1; n <= 3; ++n)
    CHECK(ou::nu_norm(n) == doctest::Approx(fact[n - 1] * kInvSqrt2Pi / 2.0).epsilon(1e-8));
}

TEST_CASE("bottom of the Dirichlet spectrum") {
  CHECK(ou::lambda0(1.0) == doctest::Approx(3.0).epsilon(1e-5));
  double prev = INFINITY;
  for (double M : {1.0, 2.0, 4.0, 8.0}) {
    const double l = ou::lambda0(M);
    CHECK(l < prev);
    CHECK(l >= 1.0 - 1e-6);
    prev = l;
  }
  CHECK(ou::lambda0(8.0) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(ou::rayleigh_fM(8.0) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(ou::rayleigh_fM(2.0) >= ou::lambda0(2.0) - 1e-6);
}

TEST_CASE("exit rate of the conditioned process") {
  double prev = INFINITY;
  for (double M : {1.0, 2.0, 4.0, 8.0}) {
    const double r = ou::ystar_exit_rate(M);
    CHECK(r < prev);
    CHECK(r > 2.0 - 1e-4);
    prev = r;
  }
  CHECK(ou::ystar_exit_rate(8.0) == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(ou::ystar_exit_rate(2.0) == doctest::Approx(3.2456).epsilon(1e-3));
}

TEST_CASE("half-line spectrum of the linear process") {
  CHECK(ou::half_line_eigenvalue(0) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(ou::half_line_eigenvalue(1) == doctest::Approx(3.0).epsilon(1e-3));
}

TEST_CASE("linear tail bound") {
  for (auto [M, t] : {std::pair{1.0, 1.0}, std::pair{2.0, 0.5}, std::pair{0.5, 3.0}}) {
    const double var = std::expm1(2.0 * t);
    CHECK(ou::linear_tail_bound(M, t) == doctest::Approx(2.0 * M * kInvSqrt2Pi / std::sqrt(var)).epsilon(1e-12));
    CHECK(ou::linear_tail_bound(M, t) >= 2.0 * normal_cdf(M / std::sqrt(var)) - 1.0);
  }
  CHECK(ou::linear_tail_bound(1.0, 1.0) == doctest::Approx(0.315662).epsilon(1e-5));
}

TEST_CASE("conditioned process reaches the level") {
  int hit = 0;
  for (int i = 0; i < 200; ++i) {
    Stream s = substream(61, i);
    const auto r = ou::simulate_ystar(0.0, 1.0, 10.0, 1e-3, s);
    if (std::isfinite(r.hit_time)) {
      ++hit;
      CHECK(r.hit_time > 0.0);
    }
    CHECK(r.y_end >= 0.0);
  }
  CHECK(hit == 200);
}

TEST_CASE("exit survival decays at the spectral rate for a small level") {
  std::vector<double> grid;
  for (int k = 0; k <= 30; ++k) grid.push_back(0.02 * k);
  ou::TauStarOptions opt;
  opt.fit_lo = 0.2;
  opt.fit_hi = 0.5;
  const auto rep = ou::tau_M_star_experiment(1.0, grid, 20000, ou::YStart::UniformHalfToThreeHalves, 7, opt);
  REQUIRE(rep.fit.points >= 5);
  CHECK(-rep.fit.slope == doctest::Approx(ou::ystar_exit_rate(1.0)).epsilon(0.1));
  CHECK(rep.bound_holds);
}

TEST_CASE("quasi-stationarity ratio at time zero") {
  ou::EtaOptions opt;
  opt.starts = 4;
  opt.paths_per_start = 10;
  const auto r = ou::eta_quasi_stationarity(0.0, ou::bump_1_2, 1.0, 2.0, 1, opt);
  CHECK(r.ratio == 1.0);
}
