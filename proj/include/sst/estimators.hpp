#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "sst/diffusion_model.hpp"
#include "sst/dual_process.hpp"
#include "sst/sde_engine.hpp"

namespace sst {

struct SurvivalCurve {
  std::vector<double> t_grid;
  std::vector<double> survival;
  std::vector<double> ci_half_width;
  std::size_t n = 0;
};

/// Empirical P[tau > t]; +infinity marks a censored (timed out) sample, which
/// stays alive on the whole grid.
SurvivalCurve survival(const std::vector<double>& times, const std::vector<double>& t_grid,
                       double level = 0.95);

enum class SeparationMethod { HalfLineSup, ExactLattice };

struct SeparationEstimate {
  double t = 0.0;
  double s_hat = 0.0;
  SeparationMethod method = SeparationMethod::HalfLineSup;
  double ci = 0.0;  // half-width of the bootstrap percentile interval
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n = 0;
};

struct SeparationOptions {
  StepPlan plan{1e-3, 1e-7, 0.0};
  int grid_points = 512;
  int bootstrap = 200;
  /// Grid points whose expected upper-tail count is below this are skipped.
  double min_tail_count = 400.0;
  int workers = 1;
};

/// 1 - inf_y P[X_t > y]/mu((y, inf)) over a quantile grid of mu, with X
/// started from mu conditioned to (-inf, start_edge).
SeparationEstimate separation_halfline(const CoefficientModel& model, double t, std::size_t n_paths,
                                       std::uint64_t seed, const SeparationOptions& opt = {},
                                       double start_edge = 0.0);

/// Same estimator applied to given samples of X_t.
SeparationEstimate separation_from_samples(const StationaryMeasure& mu, double t,
                                           const std::vector<double>& x_t, std::uint64_t seed,
                                           const SeparationOptions& opt = {});

struct SeparationBoundReport {
  double t = 0.0;
  double separation = 0.0;
  double survival = 0.0;
  double joint_ci = 0.0;
  bool violation = false;  // separation exceeds survival beyond the joint CI
  bool agreement = false;  // two-sided agreement within the joint CI
};

SeparationBoundReport check_separation_bound(const SeparationEstimate& sep,
                                             const SurvivalCurve& surv);

struct KsResult {
  double statistic = 0.0;
  double critical = 0.0;
  double p_value = 1.0;
  bool pass = true;
};

/// Two-sample Kolmogorov-Smirnov with asymptotic critical values.
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b, double level = 0.01);

/// Asymptotic Kolmogorov survival function P[K > lambda].
double kolmogorov_q(double lambda);

struct DominanceReport {
  std::size_t checked = 0;
  std::size_t violations = 0;
  double fraction = 0.0;
  std::size_t invalid_paths = 0;
};

/// Pathwise relation U_t <= Y_t on the checked grid points.
DominanceReport dominance_report(const std::vector<CoupledPath>& paths);

struct CurveDominance {
  double max_excess_se = 0.0;  // largest (lower - upper) / joint SE
  bool holds = true;
};

/// Checks lower(t) <= upper(t) + k joint standard errors on a shared grid.
CurveDominance survival_dominance(const SurvivalCurve& lower, const SurvivalCurve& upper,
                                  double k_se = 2.0);

struct CsvRow {
  double t = 0.0;
  double estimate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double n_effective = 0.0;
};

/// Shortest round-trip decimal form with 17 significant digits.
std::string format_real(double v);

void write_csv(std::ostream& out, const std::vector<CsvRow>& rows);

std::vector<CsvRow> survival_rows(const SurvivalCurve& c);

}  // namespace sst
