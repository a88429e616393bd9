#include "sst/ou_suite.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/tools/roots.hpp>
#include <gsl/gsl_integration.h>

#include "sst/errors.hpp"
#include "sst/sde_engine.hpp"

namespace sst::ou {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kInvSqrt2Pi = 0.3989422804014327;
constexpr double kSeriesCut = 1e-3;

// int_0^y e^{-s^2/2} ds / y for small y.
double mass_series(double y) {
  const double y2 = y * y;
  return 1.0 - y2 / 6.0 + y2 * y2 / 40.0 - y2 * y2 * y2 / 336.0;
}

// Ratio S / n alive expressed in standard errors above `bound`.
double excess_in_se(double s, double bound, std::size_t n) {
  const double se = std::sqrt(s * (1.0 - s) / std::max<std::size_t>(n, 1));
  const double excess = s - bound;
  if (se > 0.0) return excess / se;
  return excess > 0.0 ? kInf : 0.0;
}
}  // namespace

double gauss_mass(double y) {
  if (std::abs(y) < kSeriesCut) return kInvSqrt2Pi * y * mass_series(y);
  return 0.5 * std::erf(y / kSqrt2);
}

double f_t(double t, double x) { return 1.0 + f_t_minus_one(t, x); }

double f_t_minus_one(double t, double x) {
  const double e = std::exp(-2.0 * t);
  const double var = -std::expm1(-2.0 * t);
  return std::expm1(-0.5 * std::log1p(-e) - e * x * x / (2.0 * var));
}

double x_t(double t) {
  if (!(t > 0.0)) throw ConfigError("x_t needs t > 0");
  return std::sqrt(-std::expm1(2.0 * t) * std::log1p(-std::exp(-2.0 * t)));
}

double ou_tv_exact(double t) {
  if (!(t > 0.0)) throw ConfigError("ou_tv_exact needs t > 0");
  const double xt = x_t(t);
  const auto integrand = [t](double x) { return f_t_minus_one(t, x) * normal_pdf(x); };
  return 2.0 * integrate_finite(integrand, 0.0, xt, 1e-13);
}

TruncTv gamma_trunc_tv(double M) {
  if (!(M > 0.0)) throw ConfigError("gamma_trunc_tv needs M > 0");
  TruncTv r;
  r.exact = 2.0 * normal_upper(M);
  r.bound = kSqrt2 / (std::sqrt(M_PI) * M) * std::exp(-0.5 * M * M);
  if (r.exact > r.bound) throw InvariantViolation("truncated Gaussian TV exceeds its bound");
  return r;
}

double g_stable(double y) {
  if (!(y > 0.0)) throw ConfigError("g needs y > 0");
  if (y < kSeriesCut) return 2.0 * std::exp(-0.5 * y * y) / (y * mass_series(y));
  return 2.0 * normal_pdf(y) / gauss_mass(y);
}

double V(double y) { return 0.5 * y * y + 2.0 * std::log(gauss_mass(y)); }

double V_prime(double y) { return y + g_stable(y); }

double eta_density(double y) { return y * gauss_mass(y); }

double nu_density(double y) {
  const double m = gauss_mass(y);
  return m * m * std::exp(0.5 * y * y);
}

double crossing_point_a() {
  const auto f = [](double y) { return y * g_stable(y) - 1.0; };
  boost::math::tools::eps_tolerance<double> tol(50);
  std::uintmax_t iters = 200;
  const auto [lo, hi] = boost::math::tools::toms748_solve(f, 1e-6, 10.0, tol, iters);
  return 0.5 * (lo + hi);
}

YStarHit simulate_ystar(double y0, double level, double t_end, double dt, Stream& noise) {
  YStarHit out{kInf, y0};
  double t = 0.0, y = y0;
  if (y >= level) return {0.0, y};
  while (t < t_end) {
    const double step = std::min(dt, t_end - t);
    const double r = y / kSqrt2;
    const double rest = y < 1e-4 ? y / 3.0 : V_prime(y) - 2.0 / y;
    const double next = kSqrt2 * std::sqrt(besq3_exact_step(r * r, step, noise)) + rest * step;
    if (next >= level) {
      out.hit_time = t + step * (level - y) / (next - y);
      out.y_end = level;
      return out;
    }
    if (std::isfinite(level)) {
      const double gap = (level - y) * (level - next);
      if (gap < 40.0 * step && noise.uniform() < std::exp(-gap / step)) {
        out.hit_time = t + 0.5 * step;
        out.y_end = level;
        return out;
      }
    }
    t += step;
    y = next;
  }
  out.y_end = y;
  return out;
}

SlopeFit fit_log_survival(const SurvivalCurve& c, double t_lo, double t_hi, double min_alive) {
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  SlopeFit fit;
  const double n = static_cast<double>(c.n);
  for (std::size_t k = 0; k < c.t_grid.size(); ++k) {
    const double t = c.t_grid[k], s = c.survival[k];
    if (t < t_lo || t > t_hi || s * n < min_alive || s >= 1.0) continue;
    const double w = n * s / (1.0 - s);
    const double ly = std::log(s);
    sw += w;
    sx += w * t;
    sy += w * ly;
    sxx += w * t * t;
    sxy += w * t * ly;
    ++fit.points;
  }
  if (fit.points < 2) throw NumericalError("ConvergenceFailure", "too few points for a slope fit");
  const double det = sw * sxx - sx * sx;
  fit.slope = (sw * sxy - sx * sy) / det;
  fit.intercept = (sy - fit.slope * sx) / sw;
  return fit;
}

double admissible_C() { return 1.0 / (0.5 * gauss_mass(0.5)); }

TauStarReport tau_M_star_experiment(double M, const std::vector<double>& t_grid, std::size_t n,
                                    YStart start, std::uint64_t seed,
                                    const TauStarOptions& opt) {
  if (!(M > 0.0) || t_grid.empty() || n == 0) throw ConfigError("tau*_M needs M > 0 and a grid");
  const double t_end = t_grid.back();
  std::vector<double> hits(n);
  parallel_for(n, opt.workers, [&](std::size_t i) {
    Stream s = substream(seed, i);
    const double y0 = start == YStart::DiagonalAtZero ? 0.0 : 0.5 + s.uniform();
    hits[i] = simulate_ystar(y0, M, t_end, opt.dt, s).hit_time;
  });
  TauStarReport r;
  r.M = M;
  r.survival = survival(hits, t_grid);
  if (start == YStart::UniformHalfToThreeHalves) {
    r.C = admissible_C();
    r.max_excess_se = -kInf;
    for (std::size_t k = 0; k < t_grid.size(); ++k) {
      const double b = r.C * M * M * std::exp(-2.0 * t_grid[k]);
      r.bound.push_back(b);
      r.max_excess_se = std::max(r.max_excess_se, excess_in_se(r.survival.survival[k], b, n));
    }
    r.bound_holds = r.max_excess_se <= 2.0;
  }
  const double lo = opt.fit_lo >= 0.0 ? opt.fit_lo : 0.5 * t_end;
  const double hi = opt.fit_hi >= 0.0 ? opt.fit_hi : t_end;
  try {
    r.fit = fit_log_survival(r.survival, lo, hi);
  } catch (const NumericalError&) {
    r.fit = SlopeFit{std::nan(""), std::nan(""), 0};
  }
  return r;
}

CompositeBound composite_tv_bound(double t, std::size_t n, std::uint64_t seed,
                                  const TauStarOptions& opt) {
  CompositeBound c;
  c.t = t;
  c.M = std::sqrt(2.0 * t);
  TauStarOptions o = opt;
  o.fit_lo = o.fit_hi = t;
  const auto rep = tau_M_star_experiment(c.M, {t}, n, YStart::DiagonalAtZero, seed, o);
  c.survival = rep.survival.survival[0];
  c.survival_se = std::sqrt(c.survival * (1.0 - c.survival) / n);
  c.trunc_tv = gamma_trunc_tv(c.M).exact;
  c.bound = c.survival + c.trunc_tv;
  c.tv_exact = ou_tv_exact(t);
  c.dominates = c.bound >= c.tv_exact;
  return c;
}

double hdagger(int n, double y) {
  if (n < 1 || !(y > 0.0)) throw ConfigError("hdagger needs n >= 1 and y > 0");
  return -hermite(2 * n - 1, y) * normal_pdf(y) / gauss_mass(y);
}

double hdagger_eigen_residual(int n, double lo, double hi, double delta) {
  double worst = 0.0, scale = 0.0;
  const int cells = static_cast<int>(std::round((hi - lo) / delta));
  for (int k = 0; k <= cells; ++k) {
    const double y = lo + k * delta;
    const double f = hdagger(n, y), fp = hdagger(n, y + delta), fm = hdagger(n, y - delta);
    const double lf = (fp - 2.0 * f + fm) / (delta * delta) + V_prime(y) * (fp - fm) / (2.0 * delta);
    worst = std::max(worst, std::abs(lf + 2.0 * n * f));
    scale = std::max(scale, std::abs(f));
  }
  return worst / scale;
}

double nu_pairing(int n, int m) {
  const auto integrand = [n, m](double y) {
    return y > 0.0 ? hdagger(n, y) * hdagger(m, y) * nu_density(y) : 0.0;
  };
  return integrate_finite(integrand, 0.0, 1.0, 1e-13) + integrate_finite(integrand, 1.0, 30.0, 1e-13);
}

double nu_norm(int n) { return nu_pairing(n, n); }

double bump_1_2(double y) {
  const double u = 2.0 * y - 3.0;
  if (std::abs(u) >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - u * u));
}

EtaReport eta_quasi_stationarity(double t, const ScalarField& f, double f_lo, double f_hi,
                                 std::uint64_t seed, const EtaOptions& opt) {
  if (t < 0.0 || !(f_hi > f_lo) || f_lo < 0.0) throw ConfigError("eta check needs t >= 0 and a support");
  EtaReport r;
  r.t = t;
  const double eta_f =
      integrate_finite([&](double y) { return eta_density(y) * f(y); }, f_lo, f_hi, 1e-12);
  if (t == 0.0) return r;
  gsl_integration_glfixed_table* table = gsl_integration_glfixed_table_alloc(opt.starts);
  std::vector<double> nodes(opt.starts), weights(opt.starts);
  for (int k = 0; k < opt.starts; ++k)
    gsl_integration_glfixed_point(0.0, opt.y_max, k, &nodes[k], &weights[k], table);
  gsl_integration_glfixed_table_free(table);

  const std::size_t per = opt.paths_per_start;
  std::vector<double> values(opt.starts * per);
  parallel_for(values.size(), opt.workers, [&](std::size_t i) {
    Stream s = substream(seed, i);
    const double y0 = nodes[i / per];
    values[i] = f(simulate_ystar(y0, kInf, t, opt.dt, s).y_end);
  });
  double total = 0.0, var = 0.0;
  for (int k = 0; k < opt.starts; ++k) {
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t i = 0; i < per; ++i) {
      const double v = values[k * per + i];
      sum += v;
      sum2 += v * v;
    }
    const double mean = sum / per;
    const double w = weights[k] * eta_density(nodes[k]);
    total += w * mean;
    var += w * w * std::max(sum2 / per - mean * mean, 0.0) / per;
  }
  const double target = std::exp(-2.0 * t) * eta_f;
  r.ratio = total / target;
  r.se = std::sqrt(var) / target;
  return r;
}

double lambda0(double M, int cells) {
  SturmLiouvilleProblem p;
  p.lo = -M;
  p.hi = M;
  p.weight = [](double y) { return std::exp(0.5 * y * y); };
  return sturm_liouville_eigenvalue(p, cells, 0);
}

double rayleigh_fM(double M) {
  const double edge = std::exp(-0.5 * M * M);
  const auto num = [](double y) { return y * y * std::exp(-0.5 * y * y); };
  const auto den = [edge](double y) {
    const double f = std::exp(-0.5 * y * y) - edge;
    return f * f * std::exp(0.5 * y * y);
  };
  return integrate_finite(num, -M, M, 1e-13) / integrate_finite(den, -M, M, 1e-13);
}

double ystar_exit_rate(double M, int cells) {
  SturmLiouvilleProblem p;
  p.lo = 0.0;
  p.hi = M;
  p.left = Boundary::Reflecting;
  p.weight = [](double y) { return nu_density(std::max(y, 1e-6)); };
  return tridiagonal_eigenvalue(discretize(p, cells), 0);
}

double htilde(int n, double y) { return n * std::exp(-0.5 * y * y) * hermite(n - 1, y); }

double htilde_eigen_residual(int n, double lo, double hi, double delta) {
  double worst = 0.0, scale = 0.0;
  const int cells = static_cast<int>(std::round((hi - lo) / delta));
  for (int k = 0; k <= cells; ++k) {
    const double y = lo + k * delta;
    const double f = htilde(n, y), fp = htilde(n, y + delta), fm = htilde(n, y - delta);
    const double lf = (fp - 2.0 * f + fm) / (delta * delta) + y * (fp - fm) / (2.0 * delta);
    worst = std::max(worst, std::abs(lf + n * f));
    scale = std::max(scale, std::abs(f));
  }
  return worst / scale;
}

double linear_tail_bound(double M, double t) {
  return std::sqrt(2.0 / (-std::expm1(-2.0 * t) * M_PI)) * std::exp(-t) * M;
}

double half_line_eigenvalue(int k, double M, int cells) {
  SturmLiouvilleProblem p;
  p.lo = 0.0;
  p.hi = M;
  p.left = Boundary::Reflecting;
  p.weight = [](double y) { return std::exp(0.5 * y * y); };
  return sturm_liouville_eigenvalue(p, cells, k);
}

SurvivalCurve linear_survival(double M, const std::vector<double>& t_grid, std::size_t n,
                              std::uint64_t seed, int workers, double dt) {
  std::vector<double> hits(n);
  parallel_for(n, workers, [&](std::size_t i) {
    Stream s = substream(seed, i);
    const StoppedPath p = simulate_linear_Y(t_grid, s, M, dt);
    hits[i] = p.stop_reason == StopReason::Hit ? p.stop_time : kInf;
  });
  return survival(hits, t_grid);
}

LinearComparisonReport linear_comparison_suite(const std::vector<double>& M_set,
                                               const std::vector<double>& t_grid, std::size_t n,
                                               std::uint64_t seed, int workers) {
  LinearComparisonReport rep;
  for (std::size_t m = 0; m < M_set.size(); ++m) {
    LinearSurvival ls;
    ls.M = M_set[m];
    ls.survival = linear_survival(ls.M, t_grid, n, derive_seed(seed, m), workers);
    ls.max_excess_se = -kInf;
    for (std::size_t k = 0; k < t_grid.size(); ++k) {
      const double b = t_grid[k] > 0.0 ? linear_tail_bound(ls.M, t_grid[k]) : kInf;
      ls.bound.push_back(b);
      ls.max_excess_se = std::max(ls.max_excess_se, excess_in_se(ls.survival.survival[k], b, n));
    }
    ls.bound_holds = ls.max_excess_se <= 2.0;
    rep.curves.push_back(std::move(ls));
  }
  for (int k = 1; k <= 3; ++k) rep.htilde_residuals.push_back(htilde_eigen_residual(k));
  rep.half_line_spectrum = {half_line_eigenvalue(0), half_line_eigenvalue(1)};
  return rep;
}

}  // namespace sst::ou
