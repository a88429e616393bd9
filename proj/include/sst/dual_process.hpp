#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "sst/diffusion_model.hpp"
#include "sst/numerics.hpp"
#include "sst/sde_engine.hpp"

namespace sst {

enum class Regime { Interior, LeftEdge, RightEdge, Absorbed };

const char* regime_name(Regime r);

/// Model, stationary law and tail profile bundled with stable addresses.
class DualModel {
 public:
  explicit DualModel(const CoefficientModel& model);
  const CoefficientModel& model() const { return model_; }
  const StationaryMeasure& measure() const { return *measure_; }
  const TailProfile& tail() const { return *tail_; }

 private:
  CoefficientModel model_;
  std::unique_ptr<StationaryMeasure> measure_;
  std::unique_ptr<TailProfile> tail_;
};

struct DualState {
  SegmentState seg;
  Regime regime = Regime::Interior;
  double t = 0.0;
  double s_changed = 0.0;
  double alpha = 0.0;
};

struct DualStart {
  enum class Kind { DiagonalAt, SegmentAt, HalfLineLeft, HalfLineRight };
  Kind kind = Kind::DiagonalAt;
  double x = 0.0;
  double y = 0.0;
  static DualStart diagonal(double x0) { return {Kind::DiagonalAt, x0, x0}; }
  static DualStart segment(double x, double y) { return {Kind::SegmentAt, x, y}; }
  /// Segment (-infinity, x].
  static DualStart half_line_left(double x) { return {Kind::HalfLineLeft, x, x}; }
  /// Segment [x, +infinity).
  static DualStart half_line_right(double x) { return {Kind::HalfLineRight, x, x}; }
};

struct DualConfig {
  double alpha = 0.0;
  double r_switch = 0.05;
  double eps_edge = 1e-6;
  StepPlan plan{1e-3, 1e-9, 200.0};
  /// Changed-clock step in the (R, S) chart as a fraction of R^2.
  double chart_courant = 0.02;
  std::vector<double> t_grid;
};

struct DualSnapshot {
  double t = 0.0;
  SegmentState seg;
  double h = 0.0;
  Regime regime = Regime::Interior;
};

struct DualPath {
  std::vector<DualSnapshot> snapshots;  // one per t_grid entry
  double tau_minus = std::numeric_limits<double>::infinity();
  double tau_plus = std::numeric_limits<double>::infinity();
  double tau_star = std::numeric_limits<double>::infinity();
  double varsigma = 0.0;      // changed clock at absorption or at the stop
  double clock_inverse = 0.0; // int dvarsigma / Gamma, the original time accrued
  bool absorbed = false;
  StopReason stop_reason = StopReason::TimeOut;
  double h_start = 0.0;
  double u_before = 0.0;  // CDF coordinates one step before absorption
  double v_before = 0.0;
  long steps = 0;
  long rejected = 0;
  int chart_entries = 0;
};

struct DriftSpec {
  double dx = 0.0;
  double dy = 0.0;
  double sigma_x = 0.0;  // diffusion of X is sigma_x dB_1
  double sigma_y = 0.0;  // diffusion of Y is +sigma_y dB_2
  double rho = -1.0;     // correlation of B_1 and B_2
};

/// Drifts and noise of the dual on finite segments x < y.
DriftSpec interior_drift(const StationaryMeasure& mu, double x, double y, double alpha);

/// Drift of the finite endpoint when the other one sits at infinity.
/// LeftEdge: x = -infinity, drift of y. RightEdge: y = +infinity, drift of x.
double edge_drift(const StationaryMeasure& mu, double z, Regime regime);

/// Carre du champ of h along the alpha-coupled dual.
double gamma_alpha(const StationaryMeasure& mu, double x, double y, double alpha);

struct ChartPoint {
  double R = 0.0;
  double S = 0.0;
};

ChartPoint psi_map(const StationaryMeasure& mu, double x, double y);
/// Returns (x, y) with mu([x, y]) = R and midpoint S.
std::pair<double, double> psi_inverse(const StationaryMeasure& mu, double R, double S);

/// Changed-clock drift of S in the (R, S) chart and its noise variance
/// (zero for alpha = 0).
struct ChartDrift {
  double beta = 0.0;
  double noise_var = 0.0;
  double noise_corr = 0.0;  // correlation with the Bessel driver
  double gamma = 0.0;       // Gamma_alpha at the point
};
ChartDrift chart_drift(const StationaryMeasure& mu, double x, double y, double alpha);

struct StepEvent {
  double t = 0.0;
  double dt = 0.0;
  double z_y = 0.0;  // normal driving the upper endpoint
  bool chart = false;
  double L_y = 0.0;  // -log(1 - F(y)); infinite once exploded
};

using StepObserver = std::function<void(const StepEvent&)>;

DualPath run_dual(const DualModel& model, const DualStart& start, const DualConfig& cfg,
                  Stream& noise, const StepObserver& observer = nullptr);

/// Advances from the diagonal through the (R, S) chart until R >= r_switch.
DualState diagonal_start(const DualModel& model, double x0, const DualConfig& cfg,
                         Stream& noise);

/// Runs n paths with per-path substreams; output does not depend on workers.
std::vector<DualPath> run_dual_batch(const DualModel& model, const DualStart& start,
                                     const DualConfig& cfg, std::size_t n,
                                     std::uint64_t seed, int workers);

struct MartingaleReport {
  std::vector<double> t;
  std::vector<double> mean;
  std::vector<double> se;
  double target = 0.0;
  double max_deviation_se = 0.0;
};

/// E[1/h(Z_t)] against 1/h(z0) on the grid.
MartingaleReport one_over_h_martingale_test(const DualModel& model, double x0, double y0,
                                            const std::vector<double>& t_grid,
                                            std::size_t n_paths, const DualConfig& cfg,
                                            std::uint64_t seed, int workers);

/// Reflected comparison process driven by the upper endpoint's noise.
struct CoupledPath {
  std::vector<double> t;
  std::vector<double> u;      // comparison process
  std::vector<double> y;      // upper endpoint of the dual
  std::vector<char> checked;  // grid point before U's first zero and before y explodes
  bool valid = true;          // false when the chart interrupted the coupling
};

CoupledPath coupled_comparison_run(const DualModel& model, double x0, double y0,
                                   const DualConfig& cfg, Stream& noise);

}  // namespace sst
