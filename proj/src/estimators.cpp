#include "sst/estimators.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "sst/errors.hpp"

namespace sst {

namespace {
constexpr std::uint64_t kBootstrapSalt = 0xB0075A1DULL;

double two_sided_z(double level) { return normal_quantile(0.5 + 0.5 * level); }

// 1 - min over grid of P_hat[X > y]/mu((y, inf)); x must be sorted.
double halfline_separation(const std::vector<double>& sorted, const std::vector<double>& grid,
                           const std::vector<double>& tails) {
  const double n = static_cast<double>(sorted.size());
  double best = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto above = sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), grid[k]);
    const double ratio = static_cast<double>(above) / (n * tails[k]);
    best = std::max(best, 1.0 - ratio);
  }
  return std::min(best, 1.0);
}
}  // namespace

SurvivalCurve survival(const std::vector<double>& times, const std::vector<double>& t_grid,
                       double level) {
  SurvivalCurve c;
  c.t_grid = t_grid;
  c.n = times.size();
  std::vector<double> sorted = times;
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  const double z = two_sided_z(level);
  for (double t : t_grid) {
    const auto alive = sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), t);
    const double p = n > 0 ? static_cast<double>(alive) / n : 0.0;
    c.survival.push_back(p);
    c.ci_half_width.push_back(n > 0 ? std::min(1.0, z * std::sqrt(p * (1.0 - p) / n)) : 1.0);
  }
  return c;
}

SeparationEstimate separation_from_samples(const StationaryMeasure& mu, double t,
                                           const std::vector<double>& x_t, std::uint64_t seed,
                                           const SeparationOptions& opt) {
  if (x_t.empty()) throw ConfigError("separation needs samples");
  const double n = static_cast<double>(x_t.size());
  std::vector<double> grid, tails;
  for (int k = 1; k <= opt.grid_points; ++k) {
    const double y = mu.quantile(static_cast<double>(k) / (opt.grid_points + 1));
    const double tail = mu.upper_tail(y);
    if (n * tail < opt.min_tail_count) continue;
    grid.push_back(y);
    tails.push_back(tail);
  }
  SeparationEstimate est;
  est.t = t;
  est.n = x_t.size();
  est.method = SeparationMethod::HalfLineSup;
  if (grid.empty()) throw ConfigError("too few samples for the separation grid");
  std::vector<double> sorted = x_t;
  std::sort(sorted.begin(), sorted.end());
  est.s_hat = halfline_separation(sorted, grid, tails);

  Stream boot(derive_seed(seed, kBootstrapSalt), 0);
  std::vector<double> reps;
  std::vector<double> resample(x_t.size());
  for (int b = 0; b < opt.bootstrap; ++b) {
    for (auto& v : resample) {
      const auto i = static_cast<std::size_t>(boot.uniform() * n);
      v = x_t[std::min(i, x_t.size() - 1)];
    }
    std::sort(resample.begin(), resample.end());
    reps.push_back(halfline_separation(resample, grid, tails));
  }
  if (!reps.empty()) {
    std::sort(reps.begin(), reps.end());
    auto pick = [&](double q) {
      const double pos = q * (reps.size() - 1);
      const auto i = static_cast<std::size_t>(pos);
      const double f = pos - i;
      return i + 1 < reps.size() ? (1.0 - f) * reps[i] + f * reps[i + 1] : reps.back();
    };
    est.ci_low = pick(0.025);
    est.ci_high = pick(0.975);
    est.ci = 0.5 * (est.ci_high - est.ci_low);
  } else {
    est.ci_low = est.ci_high = est.s_hat;
  }
  return est;
}

SeparationEstimate separation_halfline(const CoefficientModel& model, double t,
                                       std::size_t n_paths, std::uint64_t seed,
                                       const SeparationOptions& opt, double start_edge) {
  const StationaryMeasure mu(model);
  const double top = mu.cdf(start_edge);
  std::vector<double> x_t(n_paths);
  StepPlan plan = opt.plan;
  plan.t_max = t;
  parallel_for(n_paths, opt.workers, [&](std::size_t i) {
    Stream s = substream(seed, i);
    const double x0 = mu.quantile(s.uniform() * top);
    if (t <= 0.0) {
      x_t[i] = x0;
      return;
    }
    const StoppedPath p = simulate_X(model, x0, plan, s, {t});
    x_t[i] = p.states.empty() ? x0 : p.states.back();
  });
  return separation_from_samples(mu, t, x_t, seed, opt);
}

SeparationBoundReport check_separation_bound(const SeparationEstimate& sep,
                                             const SurvivalCurve& surv) {
  SeparationBoundReport r;
  r.t = sep.t;
  std::size_t j = 0;
  double best = 1e300;
  for (std::size_t k = 0; k < surv.t_grid.size(); ++k) {
    const double d = std::abs(surv.t_grid[k] - sep.t);
    if (d < best) {
      best = d;
      j = k;
    }
  }
  if (surv.t_grid.empty() || best > 1e-12 * std::max(1.0, std::abs(sep.t)))
    throw ConfigError("survival grid does not contain the separation time");
  r.separation = sep.s_hat;
  r.survival = surv.survival[j];
  r.joint_ci = std::hypot(sep.ci, surv.ci_half_width[j]);
  r.violation = r.separation > r.survival + r.joint_ci;
  r.agreement = std::abs(r.separation - r.survival) <= r.joint_ci;
  return r;
}

double kolmogorov_q(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-18) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b, double level) {
  if (a.empty() || b.empty()) throw ConfigError("KS needs nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  KsResult r;
  r.statistic = d;
  const double scale = std::sqrt(na * nb / (na + nb));
  r.critical = std::sqrt(-0.5 * std::log(0.5 * level)) / scale;
  r.p_value = kolmogorov_q(d * scale);
  r.pass = d <= r.critical;
  return r;
}

DominanceReport dominance_report(const std::vector<CoupledPath>& paths) {
  DominanceReport r;
  for (const auto& p : paths) {
    if (!p.valid) {
      ++r.invalid_paths;
      continue;
    }
    for (std::size_t k = 0; k < p.t.size(); ++k) {
      if (!p.checked[k]) continue;
      ++r.checked;
      if (p.u[k] > p.y[k]) ++r.violations;
    }
  }
  r.fraction = r.checked ? static_cast<double>(r.violations) / r.checked : 0.0;
  return r;
}

CurveDominance survival_dominance(const SurvivalCurve& lower, const SurvivalCurve& upper,
                                  double k_se) {
  if (lower.t_grid.size() != upper.t_grid.size())
    throw ConfigError("survival curves need a shared grid");
  CurveDominance d;
  d.max_excess_se = -1e300;
  for (std::size_t k = 0; k < lower.t_grid.size(); ++k) {
    const double pl = lower.survival[k], pu = upper.survival[k];
    const double se = std::sqrt(pl * (1.0 - pl) / std::max<std::size_t>(lower.n, 1) +
                                pu * (1.0 - pu) / std::max<std::size_t>(upper.n, 1));
    const double excess = pl - pu;
    const double in_se = se > 0.0 ? excess / se : (excess > 0.0 ? 1e300 : 0.0);
    d.max_excess_se = std::max(d.max_excess_se, in_se);
  }
  if (lower.t_grid.empty()) d.max_excess_se = 0.0;
  d.holds = d.max_excess_se <= k_se;
  return d;
}

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{:.17g}", v);
}

void write_csv(std::ostream& out, const std::vector<CsvRow>& rows) {
  out << "t,estimate,ci_low,ci_high,n_effective\n";
  for (const auto& r : rows) {
    out << format_real(r.t) << ',' << format_real(r.estimate) << ',' << format_real(r.ci_low)
        << ',' << format_real(r.ci_high) << ',' << format_real(r.n_effective) << '\n';
  }
}

std::vector<CsvRow> survival_rows(const SurvivalCurve& c) {
  std::vector<CsvRow> rows;
  for (std::size_t k = 0; k < c.t_grid.size(); ++k) {
    rows.push_back({c.t_grid[k], c.survival[k], std::max(0.0, c.survival[k] - c.ci_half_width[k]),
                    std::min(1.0, c.survival[k] + c.ci_half_width[k]),
                    static_cast<double>(c.n)});
  }
  return rows;
}

}  // namespace sst
