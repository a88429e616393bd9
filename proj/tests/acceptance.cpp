#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "sst/dual_process.hpp"
#include "sst/estimators.hpp"
#include "sst/lattice_oracle.hpp"
#include "sst/ou_suite.hpp"
#include "sst/run_config.hpp"
#include "sst/runner.hpp"

using namespace sst;
namespace fs = std::filesystem;

namespace {

int workers() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s %2d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
  std::fflush(stdout);
}

// P[T <= t] for the first time a Bessel(3) process from r0 in [0, 1) reaches 1.
double bes3_hit_cdf(double r0, double t) {
  double sum = 0.0;
  for (int k = 1; k < 100000; ++k) {
    const double kp = k * std::numbers::pi;
    const double decay = std::exp(-0.5 * kp * kp * t);
    const double s = r0 > 0.0 ? std::sin(kp * r0) / r0 : kp;
    sum += (k % 2 ? 1.0 : -1.0) * 2.0 * s / kp * decay;
    if (decay < 1e-18) break;
  }
  return std::clamp(1.0 - sum, 0.0, 1.0);
}

// Inverse-CDF draws from the tabulated hitting law.
std::vector<double> bes3_hit_samples(double r0, std::size_t n, std::uint64_t seed) {
  std::vector<double> t, F;
  double prev = 0.0;
  for (double x = 1e-3; x < 8.0; x += 1e-3) {
    prev = std::max(prev, bes3_hit_cdf(r0, x));
    t.push_back(x);
    F.push_back(prev);
  }
  Stream s = substream(seed, 0);
  std::vector<double> out(n);
  for (auto& v : out) {
    const double u = s.uniform();
    const auto k = static_cast<std::size_t>(std::lower_bound(F.begin(), F.end(), u) - F.begin());
    if (k >= F.size()) {
      v = t.back();
    } else if (k == 0) {
      v = t[0] * u / std::max(F[0], 1e-300);
    } else {
      v = t[k - 1] + (u - F[k - 1]) / std::max(F[k] - F[k - 1], 1e-300) * (t[k] - t[k - 1]);
    }
  }
  return out;
}

std::vector<double> tau_stars(const std::vector<DualPath>& paths) {
  std::vector<double> v;
  v.reserve(paths.size());
  for (const auto& p : paths) v.push_back(p.absorbed ? p.tau_star : INFINITY);
  return v;
}

std::vector<double> grid(double step, double hi, double lo = 0.0) {
  std::vector<double> g;
  for (int k = 0; lo + k * step <= hi + 1e-12; ++k) g.push_back(lo + k * step);
  return g;
}

Outcome criterion_concordance() {
  struct Case {
    const char* name;
    CoefficientModel model;
    bool expect;
  };
  const std::vector<Case> cases{{"ou", CoefficientModel::ornstein_uhlenbeck(), false},
                                {"alpha=1.5", CoefficientModel::power_potential(1.5), false},
                                {"alpha=2.5", CoefficientModel::power_potential(2.5), true},
                                {"alpha=4", CoefficientModel::power_potential(4.0), true}};
  Outcome o;
  for (const auto& c : cases) {
    const auto rep = criterion_I(c.model);
    const StationaryMeasure mu(c.model);
    const auto left = edge_coefficients(mu, Side::Left), right = edge_coefficients(mu, Side::Right);
    const bool feller = feller_explosion_test(left.a_hat, left.b_hat) &&
                        feller_explosion_test(right.a_hat, right.b_hat);
    const bool ok = rep.sst_exists == c.expect && feller == c.expect;
    o.pass = o.pass && ok;
    o.detail += fmt("%s I<inf=%d feller=%d expect=%d; ", c.name, rep.sst_exists, feller, c.expect);
  }
  return o;
}

Outcome bessel_law(const DualModel& quartic) {
  DualConfig cfg;
  const auto paths = run_dual_batch(quartic, DualStart::diagonal(0.0), cfg, 100000, 2001, workers());
  double s1 = 0.0, s2 = 0.0;
  std::size_t n = 0;
  for (const auto& p : paths) {
    if (!p.absorbed) continue;
    s1 += p.varsigma;
    s2 += p.varsigma * p.varsigma;
    ++n;
  }
  const double mean = s1 / n, se = std::sqrt((s2 / n - mean * mean) / n);
  const bool mean_ok = n == paths.size() && std::abs(mean - 1.0 / 3.0) <= 3.0 * se;
  std::vector<double> sim;
  for (std::size_t i = 0; i < 10000; ++i) sim.push_back(paths[i].varsigma);
  const auto ks = ks_two_sample(sim, bes3_hit_samples(0.0, 10000, 2002), 0.01);
  return {mean_ok && ks.pass, fmt("mean %.5f (target 1/3, SE %.5f, %zu absorbed); KS D=%.4f crit=%.4f",
                                  mean, se, n, ks.statistic, ks.critical)};
}

Outcome finiteness(const DualModel& quartic) {
  DualConfig cfg;
  cfg.plan.t_max = 200.0;
  const auto a = run_dual_batch(quartic, DualStart::diagonal(0.0), cfg, 10000, 3001, workers());
  std::size_t absorbed = 0;
  for (const auto& p : a) absorbed += p.absorbed && p.tau_star <= 200.0;
  const DualModel ou(CoefficientModel::ornstein_uhlenbeck());
  DualConfig ocfg;
  ocfg.plan.t_max = 50.0;
  const auto b = run_dual_batch(ou, DualStart::half_line_left(0.0), ocfg, 10000, 3002, workers());
  std::size_t ou_absorbed = 0;
  for (const auto& p : b) ou_absorbed += p.absorbed;
  const double frac = static_cast<double>(absorbed) / a.size();
  return {frac >= 0.999 && ou_absorbed == 0,
          fmt("alpha=4 absorbed fraction %.4f; OU half-line absorptions %zu", frac, ou_absorbed)};
}

Outcome lattice_separation() {
  const GridChain g = discretize_L(CoefficientModel::power_potential(4.0), 200, -3.0, 3.0);
  const auto c = exact_separation_vs_absorption(g, 99, grid(0.05, 3.0));
  return {c.max_gap < 1e-8, fmt("max gap %.3e over %zu times", c.max_gap, c.t.size())};
}

Outcome intertwining_rates() {
  ResidualOptions opt;
  opt.skip_boundary_rows = true;
  opt.norm = ResidualNorm::TestFunctions;
  opt.tests = smooth_probes();
  std::vector<double> gen, semi;
  for (int n : {100, 200, 400}) {
    const GridChain g = discretize_L(CoefficientModel::ornstein_uhlenbeck(), n, -6.0, 6.0);
    const IntervalDual d = discretize_Lstar(g, DualScheme::Mirror);
    gen.push_back(intertwining_residual(g, d, opt));
    semi.push_back(semigroup_residual(g, d, 1.0, {}, opt));
  }
  bool ok = true;
  std::string detail;
  for (std::size_t k = 1; k < gen.size(); ++k) {
    const double rg = gen[k - 1] / gen[k], rs = semi[k - 1] / semi[k];
    ok = ok && rg >= 1.7 && rg <= 2.3 && rs >= 1.7 && rs <= 2.3;
    detail += fmt("generator ratio %.3f, t=1 ratio %.3f; ", rg, rs);
  }
  return {ok, detail};
}

Outcome coupling() {
  const GridChain g = discretize_L(CoefficientModel::ornstein_uhlenbeck(), 8, -2.5, 2.5);
  const IntervalDual d = discretize_Lstar(g, DualScheme::Sharp);
  double worst = 0.0;
  bool zero = false;
  for (int s0 : {d.index(3, 3), d.index(2, 4), d.index(0, 1)}) {
    Eigen::VectorXd start = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d.states.size()));
    start[s0] = 1.0;
    const auto r = df_coupling_check(g, d, 0.1, 4, start);
    zero = zero || r.zero_denominator;
    worst = std::max({worst, r.x_marginal, r.dual_marginal, r.conditional});
  }
  return {!zero && worst <= 1e-10, fmt("8 sites, 4 steps, worst deviation %.3e", worst)};
}

Outcome ou_tv_rate() {
  std::vector<double> x, y;
  for (double t = 4.0; t <= 7.0 + 1e-12; t += 0.25) {
    x.push_back(t);
    y.push_back(std::log(ou::ou_tv_exact(t)));
  }
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxy += (x[k] - mx) * (y[k] - my);
    sxx += (x[k] - mx) * (x[k] - mx);
  }
  const double slope = sxy / sxx;
  const double scaled = std::exp(10.0) * ou::ou_tv_exact(5.0);
  const double gamma1 = 0.2419707;
  return {std::abs(slope + 2.0) <= 0.05 && std::abs(scaled / gamma1 - 1.0) <= 0.01,
          fmt("slope %.4f; e^{2t} TV(5) = %.7f vs %.7f", slope, scaled, gamma1)};
}

Outcome ou_bound_chain() {
  ou::TauStarOptions opt;
  opt.workers = workers();
  opt.fit_lo = 1.0;
  opt.fit_hi = 5.0;
  bool ok = true;
  std::string detail;
  for (double M : {1.0, 2.0}) {
    const auto rep = ou::tau_M_star_experiment(M, grid(0.05, 5.0), 100000,
                                               ou::YStart::UniformHalfToThreeHalves, 8000 + M, opt);
    ok = ok && rep.bound_holds;
    detail += fmt("M=%g below C M^2 e^{-2t} (C=%.4f, max excess %.2f SE): %d; ", M, rep.C,
                  rep.max_excess_se, rep.bound_holds);
    if (M == 2.0) {
      const bool in = rep.fit.slope >= -2.3 && rep.fit.slope <= -1.8;
      ok = ok && in;
      detail += fmt("M=2 slope %.3f over %d points (band [-2.3, -1.8], spectral rate %.4f); ",
                    rep.fit.slope, rep.fit.points, ou::ystar_exit_rate(2.0));
    }
  }
  for (double t : {2.0, 3.0, 4.0}) {
    const auto b = ou::composite_tv_bound(t, 100000, 8100 + static_cast<int>(t), opt);
    ok = ok && b.dominates;
    detail += fmt("t=%g bound %.3e >= TV %.3e: %d; ", t, b.bound, b.tv_exact, b.dominates);
  }
  return {ok, detail};
}

Outcome spectral_suite() {
  bool ok = true;
  std::string detail = "hdagger residuals";
  for (int n = 1; n <= 3; ++n) {
    const double r = ou::hdagger_eigen_residual(n);
    ok = ok && r < 1e-3;
    detail += fmt(" %.1e", r);
  }
  detail += "; nu norms / (2n-1)!";
  const double fact[] = {1.0, 6.0, 120.0};
  for (int n = 1; n <= 3; ++n) {
    const double ratio = ou::nu_norm(n) / fact[n - 1];
    ok = ok && std::abs(ratio - 1.0) <= 1e-3;
    detail += fmt(" %.6f", ratio);
  }
  ou::EtaOptions eo;
  eo.workers = workers();
  const auto eta = ou::eta_quasi_stationarity(0.5, ou::bump_1_2, 1.0, 2.0, 9001, eo);
  ok = ok && std::abs(eta.ratio - 1.0) <= 0.02;
  detail += fmt("; eta ratio %.4f (SE %.4f)", eta.ratio, eta.se);
  bool lam = true;
  for (double M : {0.5, 1.0, 2.0, 4.0, 8.0}) lam = lam && ou::lambda0(M) >= 1.0 - 1e-9;
  const double ray = ou::rayleigh_fM(8.0);
  ok = ok && lam && std::abs(ray - 1.0) <= 0.02;
  detail += fmt("; lambda0 >= 1: %d; rayleigh_fM(8) %.5f", lam, ray);
  const double e0 = ou::half_line_eigenvalue(0), e1 = ou::half_line_eigenvalue(1);
  ok = ok && std::abs(e0 - 1.0) <= 0.02 && std::abs(e1 / 3.0 - 1.0) <= 0.02;
  detail += fmt("; half-line spectrum %.4f %.4f", e0, e1);
  return {ok, detail};
}

Outcome dominance(const DualModel& quartic) {
  std::string detail = "violation fractions";
  std::vector<double> fractions;
  for (double dt : {4e-3, 2e-3, 1e-3, 5e-4}) {
    DualConfig cfg;
    cfg.plan.dt_base = dt;
    cfg.t_grid = grid(0.05, 1.0, 0.05);
    std::vector<CoupledPath> paths;
    for (int i = 0; i < 400; ++i) {
      Stream s = substream(10001, i);
      paths.push_back(coupled_comparison_run(quartic, -0.5, 0.5, cfg, s));
    }
    fractions.push_back(dominance_report(paths).fraction);
    detail += fmt(" %.2e", fractions.back());
  }
  bool ok = fractions.back() < 1e-3 && fractions.back() <= fractions.front();

  const auto t_grid = grid(0.05, 2.0);
  for (double M : {1.0, 2.0}) {
    ou::TauStarOptions opt;
    opt.workers = workers();
    const auto star = ou::tau_M_star_experiment(M, t_grid, 20000, ou::YStart::DiagonalAtZero, 10100 + M, opt);
    const auto lin = ou::linear_survival(M, t_grid, 20000, 10200 + M, workers(), 1e-3);
    const auto dom = survival_dominance(star.survival, lin);
    ok = ok && dom.holds;
    detail += fmt("; M=%g conditioned below linear (max excess %.2f SE): %d", M, dom.max_excess_se, dom.holds);
  }

  std::vector<SurvivalCurve> curves;
  for (double alpha : {0.0, 0.3, 0.6}) {
    DualConfig cfg;
    cfg.alpha = alpha;
    const auto paths = run_dual_batch(quartic, DualStart::segment(-0.3, 0.3), cfg, 10000, 10300, workers());
    curves.push_back(survival(tau_stars(paths), grid(0.05, 1.5, 0.05)));
  }
  for (std::size_t k = 1; k < curves.size(); ++k) {
    const auto dom = survival_dominance(curves[k - 1], curves[k]);
    ok = ok && dom.holds;
    detail += fmt("; alpha ordering %zu (max excess %.2f SE): %d", k, dom.max_excess_se, dom.holds);
  }
  return {ok, detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("sst_acceptance_" + std::to_string(::getpid()));
  const std::vector<std::string> configs{
      "experiment = dual-sim\nmodel.kind = power\nmodel.alpha = 4\nsim.n_paths = 400\nsim.t_max = 3\n",
      "experiment = sst-survival\nmodel.kind = power\nmodel.alpha = 3\nsim.n_paths = 400\nsim.t_max = 3\n",
      "experiment = separation\nmodel.kind = ou\nsim.n_paths = 2000\nsim.t_max = 2\nsim.t_points = 5\n",
      "experiment = ou-bounds\nsim.n_paths = 2000\nsim.t_max = 2\nsim.t_points = 21\n"};
  bool ok = true;
  int compared = 0;
  std::string detail;
  for (std::size_t k = 0; k < configs.size(); ++k) {
    const RunConfig c = parse_config_text(configs[k]);
    RunOptions a, b;
    a.out_dir = (root / fmt("%zu_w1", k)).string();
    b.out_dir = (root / fmt("%zu_w4", k)).string();
    b.workers = 4;
    const RunResult ra = run(c, a), rb = run(c, b);
    bool same = ra.files == rb.files;
    for (const auto& f : ra.files) {
      if (!f.ends_with(".csv")) continue;
      same = same && slurp(fs::path(a.out_dir) / f) == slurp(fs::path(b.out_dir) / f);
      ++compared;
    }
    ok = ok && same;
    detail += fmt("%s %s; ", experiment_name(c.experiment), same ? "identical" : "differs");
  }
  fs::remove_all(root);
  detail += fmt("%d csv files compared", compared);
  return {ok && compared > 0, detail};
}

}  // namespace

int main() {
  const DualModel quartic(CoefficientModel::power_potential(4.0));
  report(1, "criterion concordance", criterion_concordance);
  report(2, "changed clock has the Bessel(3) law", [&] { return bessel_law(quartic); });
  report(3, "absorption is almost sure", [&] { return finiteness(quartic); });
  report(4, "lattice separation equals absorption survival", lattice_separation);
  report(5, "intertwining residuals converge at first order", intertwining_rates);
  report(6, "coupling properties by exact enumeration", coupling);
  report(7, "OU total variation rate", ou_tv_rate);
  report(8, "OU strong-time bound chain", ou_bound_chain);
  report(9, "OU spectral suite", spectral_suite);
  report(10, "dominance properties", [&] { return dominance(quartic); });
  report(11, "determinism across worker counts", determinism);
  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
