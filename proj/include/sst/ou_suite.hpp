#pragma once

#include <cstdint>
#include <vector>

#include "sst/estimators.hpp"
#include "sst/numerics.hpp"

/// Closed forms and checks for the Ornstein-Uhlenbeck generator d^2 - x d,
/// its symmetric dual Y* (dY = sqrt(2) dB + (Y + g(Y)) dt on (0, inf)) and the
/// linear comparison process dY = Y dt + sqrt(2) dB.
namespace sst::ou {

/// gamma([0, y]) for the standard normal law.
double gauss_mass(double y);

/// Density of N(0, 1 - e^{-2t}) with respect to gamma.
double f_t(double t, double x);
/// f_t(x) - 1 without cancellation.
double f_t_minus_one(double t, double x);
/// Positive root of f_t = 1: sqrt(-(e^{2t} - 1) ln(1 - e^{-2t})).
double x_t(double t);

/// Total variation between the law at time t from 0 and gamma, by quadrature.
double ou_tv_exact(double t);

struct TruncTv {
  double exact = 0.0;  // 2 gamma((M, inf))
  double bound = 0.0;  // sqrt(2/pi) exp(-M^2/2) / M
};
TruncTv gamma_trunc_tv(double M);

/// g(y) = 2 gamma(y) / gamma([0, y]), series near 0.
double g_stable(double y);
/// V(y) = y^2/2 + 2 ln gamma([0, y]) and its derivative y + g(y).
double V(double y);
double V_prime(double y);
/// eta(y) = y gamma([0, y]); nu(y) = gamma([0, y])^2 e^{y^2/2}.
double eta_density(double y);
double nu_density(double y);

/// Unique a > 0 with a g(a) = 1.
double crossing_point_a();

enum class YStart { DiagonalAtZero, UniformHalfToThreeHalves };

struct YStarHit {
  double hit_time = 0.0;  // +infinity when the level is not reached by t_end
  double y_end = 0.0;
};

/// Y* from y0 until it reaches `level` or t_end. Bessel(3) splitting with a
/// bridge correction for crossings inside a step.
YStarHit simulate_ystar(double y0, double level, double t_end, double dt, Stream& noise);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  int points = 0;
};

/// Weighted least squares of ln S(t) over [t_lo, t_hi], skipping points with
/// fewer than `min_alive` survivors.
SlopeFit fit_log_survival(const SurvivalCurve& c, double t_lo, double t_hi, double min_alive = 50);

/// 1 / (0.5 gamma([0, 0.5])): the uniform-[0.5, 1.5] density over eta.
double admissible_C();

struct TauStarReport {
  double M = 0.0;
  SurvivalCurve survival;
  std::vector<double> bound;  // C M^2 e^{-2t}
  double C = 0.0;
  double max_excess_se = 0.0;  // largest (S - bound) / SE
  bool bound_holds = true;     // S <= bound + 2 SE everywhere
  SlopeFit fit;
};

struct TauStarOptions {
  double dt = 1e-3;
  double fit_lo = -1.0;  // negative: half the last grid time
  double fit_hi = -1.0;  // negative: the last grid time
  int workers = 1;
};

TauStarReport tau_M_star_experiment(double M, const std::vector<double>& t_grid, std::size_t n,
                                    YStart start, std::uint64_t seed,
                                    const TauStarOptions& opt = {});

struct CompositeBound {
  double t = 0.0;
  double M = 0.0;  // sqrt(2t)
  double survival = 0.0;
  double survival_se = 0.0;
  double trunc_tv = 0.0;
  double bound = 0.0;
  double tv_exact = 0.0;
  bool dominates = false;
};

/// P_0[tau*_M > t] + ||gamma_[-M,M] - gamma||_tv at M = sqrt(2t) against the exact TV.
CompositeBound composite_tv_bound(double t, std::size_t n, std::uint64_t seed,
                                  const TauStarOptions& opt = {});

/// -H_{2n-1}(y) e^{-y^2/2} / (sqrt(2 pi) gamma([0, y])).
double hdagger(int n, double y);
/// max |L_h f + 2n f| / max |f| with central differences of step delta.
double hdagger_eigen_residual(int n, double lo = 0.05, double hi = 6.0, double delta = 1e-3);
/// nu[H_{2n} H_{2m}] by quadrature.
double nu_pairing(int n, int m);
double nu_norm(int n);

struct EtaReport {
  double t = 0.0;
  double ratio = 1.0;
  double se = 0.0;
};

struct EtaOptions {
  int starts = 64;
  std::size_t paths_per_start = 10000;
  double y_max = 10.0;
  double dt = 1e-3;
  int workers = 1;
};

/// Smooth bump supported on [1, 2].
double bump_1_2(double y);

/// eta[P_t f] / (e^{-2t} eta[f]) for f supported in [f_lo, f_hi].
EtaReport eta_quasi_stationarity(double t, const ScalarField& f, double f_lo, double f_hi,
                                 std::uint64_t seed, const EtaOptions& opt = {});

/// Bottom of the Dirichlet spectrum of -e^{-y^2/2} d e^{y^2/2} d on [-M, M].
double lambda0(double M, int cells = 1000);
/// Rayleigh quotient of f_M = e^{-y^2/2} - e^{-M^2/2} for the same form.
double rayleigh_fM(double M);
/// Exponential rate of P[tau*_M > t]: bottom of the spectrum of Y* killed at M.
double ystar_exit_rate(double M, int cells = 4000);

/// H~_n(y) = n e^{-y^2/2} H_{n-1}(y).
double htilde(int n, double y);
/// max |(d^2 + y d)_h H~_n + n H~_n| / max |H~_n|.
double htilde_eigen_residual(int n, double lo = -5.0, double hi = 5.0, double delta = 1e-3);
/// sqrt(2 / ((1 - e^{-2t}) pi)) e^{-t} M.
double linear_tail_bound(double M, double t);
/// k-th eigenvalue of |Y| on [0, M]: reflecting at 0, Dirichlet at M.
double half_line_eigenvalue(int k, double M = 8.0, int cells = 800);

struct LinearSurvival {
  double M = 0.0;
  SurvivalCurve survival;
  std::vector<double> bound;
  double max_excess_se = 0.0;
  bool bound_holds = true;
};

struct LinearComparisonReport {
  std::vector<LinearSurvival> curves;
  std::vector<double> htilde_residuals;  // n = 1, 2, 3
  std::vector<double> half_line_spectrum;  // two lowest
};

/// tau_M for the linear process from 0, sampled by exact transitions.
SurvivalCurve linear_survival(double M, const std::vector<double>& t_grid, std::size_t n,
                              std::uint64_t seed, int workers = 1, double dt = 1e-3);

LinearComparisonReport linear_comparison_suite(const std::vector<double>& M_set,
                                               const std::vector<double>& t_grid, std::size_t n,
                                               std::uint64_t seed, int workers = 1);

}  // namespace sst::ou
