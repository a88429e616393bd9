#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "sst/sde_engine.hpp"

using namespace sst;

namespace {
struct Moments {
  double mean = 0.0, var = 0.0;
};

Moments moments(const std::vector<double>& v) {
  double s = 0.0, s2 = 0.0;
  for (double x : v) {
    s += x;
    s2 += x * x;
  }
  const double n = static_cast<double>(v.size());
  return {s / n, s2 / n - (s / n) * (s / n)};
}

double chi2_3_cdf(double x) {
  return std::erf(std::sqrt(x / 2.0)) - std::sqrt(2.0 * x / std::numbers::pi) * std::exp(-x / 2.0);
}

CoefficientModel half_diffusion() {
  CoefficientModel::Fields f;
  f.a = [](double) { return 0.5; };
  f.a_prime = [](double) { return 0.0; };
  f.b = [](double) { return 0.0; };
  f.b_prime = [](double) { return 0.0; };
  return CoefficientModel::custom("half", f, true, true);
}
}  // namespace

TEST_CASE("step plan clamps to its bounds") {
  const StepPlan p{1e-3, 1e-6, 1.0};
  CHECK(p.dt() == 1e-3);
  CHECK(p.dt(10.0) == doctest::Approx(1e-4));
  CHECK(p.dt(1e9) == 1e-6);
  CHECK(p.dt(0.1) == 1e-3);
}

TEST_CASE("shared noise pairs") {
  Stream s = substream(7, 0);
  for (int i = 0; i < 50; ++i) {
    const auto p = shared_noise_pair(s, 1.0);
    CHECK(p.a == p.b);
    const auto q = shared_noise_pair(s, -1.0);
    CHECK(q.a == -q.b);
  }
  for (double rho : {0.0, 0.5, -0.7}) {
    const int n = 200000;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto p = shared_noise_pair(s, rho);
      sab += p.a * p.b;
      saa += p.a * p.a;
      sbb += p.b * p.b;
    }
    CHECK(std::abs(sab / std::sqrt(saa * sbb) - rho) < 0.01);
  }
}

TEST_CASE("exact OU transition moments") {
  const auto ou = CoefficientModel::ornstein_uhlenbeck();
  const StepPlan plan{1e-2, 1e-7, 1.0};
  const int n = 40000;
  std::vector<double> end(n);
  for (int i = 0; i < n; ++i) {
    Stream s = substream(11, i);
    const auto p = simulate_X(ou, 2.0, plan, s, {0.5, 1.0});
    REQUIRE(p.states.size() == 2);
    end[i] = p.states.back();
  }
  const auto m = moments(end);
  const double var = 1.0 - std::exp(-2.0);
  CHECK(std::abs(m.mean - 2.0 * std::exp(-1.0)) < 4.0 * std::sqrt(var / n));
  CHECK(std::abs(m.var - var) < 4.0 * var * std::sqrt(2.0 / n));
}

TEST_CASE("euler scheme for a constant diffusion has variance t") {
  const auto model = half_diffusion();
  const StepPlan plan{1e-2, 1e-7, 2.0};
  const int n = 20000;
  std::vector<double> end(n);
  for (int i = 0; i < n; ++i) {
    Stream s = substream(12, i);
    const auto p = simulate_X(model, 0.0, plan, s, {2.0});
    end[i] = p.states.back();
    CHECK(p.stop_reason == StopReason::TimeOut);
  }
  const auto m = moments(end);
  CHECK(std::abs(m.mean) < 4.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(m.var - 2.0) < 4.0 * 2.0 * std::sqrt(2.0 / n));
}

TEST_CASE("full path recording keeps every step") {
  const auto ou = CoefficientModel::ornstein_uhlenbeck();
  Stream s = substream(13, 0);
  const auto p = simulate_X(ou, 0.0, StepPlan{0.1, 1e-7, 1.0}, s);
  CHECK(p.times.size() == 11);
  CHECK(p.times.front() == 0.0);
  CHECK(p.times.back() == doctest::Approx(1.0));
  CHECK(std::is_sorted(p.times.begin(), p.times.end()));
}

TEST_CASE("squared Bessel(3) step from zero is dt times chi-square(3)") {
  Stream s = substream(14, 0);
  const double dt = 0.37;
  const int n = 50000;
  std::vector<double> q(n);
  for (auto& v : q) v = besq3_exact_step(0.0, dt, s) / dt;
  const auto m = moments(q);
  CHECK(std::abs(m.mean - 3.0) < 4.0 * std::sqrt(6.0 / n));
  std::sort(q.begin(), q.end());
  double d = 0.0;
  for (int i = 0; i < n; ++i) {
    const double F = chi2_3_cdf(q[i]);
    d = std::max({d, std::abs(F - double(i) / n), std::abs(F - double(i + 1) / n)});
  }
  // 1% critical value of the one-sample KS statistic.
  CHECK(d < 1.628 / std::sqrt(n));
}

TEST_CASE("squared Bessel(3) semigroup moments") {
  // E[Q_t] = q + 3t and Var[Q_t] = 4qt + 6t^2.
  const double q0 = 1.5, t = 0.8;
  const int n = 50000;
  std::vector<double> q(n);
  for (int i = 0; i < n; ++i) {
    Stream s = substream(15, i);
    double v = q0;
    for (int k = 0; k < 4; ++k) v = besq3_exact_step(v, t / 4, s);
    q[i] = v;
  }
  const auto m = moments(q);
  const double var = 4 * q0 * t + 6 * t * t;
  CHECK(std::abs(m.mean - (q0 + 3 * t)) < 4.0 * std::sqrt(var / n));
  CHECK(std::abs(m.var - var) < 0.05 * var);
}

TEST_CASE("Bessel(3) from zero hits one after mean time one third") {
  const double dt = 1e-4;
  const int n = 4000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    Stream s = substream(16, i);
    double q = 0.0, t = 0.0;
    while (q < 1.0) {
      q = besq3_exact_step(q, dt, s);
      t += dt;
    }
    sum += t;
  }
  // Var[T] = 2/45 for the hitting time of level 1.
  const double se = std::sqrt(2.0 / 45.0 / n);
  CHECK(std::abs(sum / n - 1.0 / 3.0) < 4.0 * se + 0.01);
}

TEST_CASE("linear comparison process variance") {
  const std::vector<double> grid{0.0, 0.5, 1.0};
  const int n = 20000;
  std::vector<double> end;
  for (int i = 0; i < n; ++i) {
    Stream s = substream(17, i);
    const auto p = simulate_linear_Y(grid, s, INFINITY, 0.05);
    REQUIRE(p.stop_reason == StopReason::TimeOut);
    REQUIRE(p.times.size() == 3);
    end.push_back(p.states.back());
  }
  const auto m = moments(end);
  const double var = std::expm1(2.0);
  CHECK(std::abs(m.mean) < 4.0 * std::sqrt(var / n));
  CHECK(std::abs(m.var - var) < 4.0 * var * std::sqrt(2.0 / n));
}

TEST_CASE("linear comparison process stops at the level") {
  Stream s = substream(18, 0);
  int hits = 0;
  for (int i = 0; i < 200; ++i) {
    const auto p = simulate_linear_Y({0.0, 5.0}, s, 1.0);
    if (p.stop_reason == StopReason::Hit) {
      ++hits;
      CHECK(std::abs(p.states.back()) == 1.0);
      CHECK(p.stop_time > 0.0);
      CHECK(p.stop_time <= 5.0);
    }
  }
  CHECK(hits == 200);
}

TEST_CASE("tail profile of the Gaussian") {
  const StationaryMeasure mu(CoefficientModel::ornstein_uhlenbeck());
  const TailProfile tail(mu);
  for (double x : {-1.0, -3.0, -8.0, -20.0}) {
    const double L = -mu.log_cdf(x);
    const double direct = mu.density(x) / mu.cdf(x);
    CHECK(tail.ratio_lower(L) == doctest::Approx(direct).epsilon(1e-5));
    CHECK(tail.ratio_upper(L) == doctest::Approx(direct).epsilon(1e-5));
  }
  CHECK(tail.profile(0.5) == doctest::Approx(mu.density(0.0)).epsilon(1e-5));
  CHECK(tail.profile(0.0) == 0.0);
  CHECK(tail.escape_upper(2e6).divergent);
  CHECK(tail.escape_lower(TailProfile::cap()).divergent);
}

TEST_CASE("quartic tail escapes in finite time") {
  const StationaryMeasure mu(CoefficientModel::power_potential(4.0));
  const TailProfile tail(mu);
  const Extended at_cap = tail.escape_upper(TailProfile::cap());
  REQUIRE(at_cap.finite());
  CHECK(at_cap.value > 0.0);
  // mu ~ exp(-x^4) gives r ~ 4 L^{3/4}, so the tail integral is close to 1/(8 sqrt(L)).
  CHECK(at_cap.value == doctest::Approx(1.0 / (8.0 * std::sqrt(TailProfile::cap()))).epsilon(0.05));
  const Extended later = tail.escape_upper(4.0 * TailProfile::cap());
  CHECK(later.value < at_cap.value);
  CHECK(later.value == doctest::Approx(at_cap.value / 2.0).epsilon(0.05));
}

TEST_CASE("reflected comparison process") {
  const StationaryMeasure ou(CoefficientModel::ornstein_uhlenbeck());
  const TailProfile t_ou(ou);
  const StepPlan plan{1e-3, 1e-7, 2.0};
  for (int i = 0; i < 20; ++i) {
    Stream s = substream(19, i);
    const auto p = simulate_reflected_U(t_ou, 0.0, plan, [&s] { return s.normal(); }, {0.5, 1.0, 2.0});
    CHECK(p.stop_reason == StopReason::TimeOut);
    REQUIRE(p.states.size() == 3);
    for (double u : p.states) CHECK(u >= 0.0);
  }
  const StationaryMeasure quartic(CoefficientModel::power_potential(4.0));
  const TailProfile t_q(quartic);
  int exploded = 0;
  for (int i = 0; i < 20; ++i) {
    Stream s = substream(20, i);
    const auto p = simulate_reflected_U(t_q, 0.0, StepPlan{1e-3, 1e-7, 20.0},
                                        [&s] { return s.normal(); });
    if (p.stop_reason == StopReason::Explosion) {
      ++exploded;
      CHECK(p.side == 1);
      CHECK(std::isinf(p.states.back()));
    }
  }
  CHECK(exploded == 20);
}
