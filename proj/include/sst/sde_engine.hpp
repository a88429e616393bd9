#pragma once

#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "sst/diffusion_model.hpp"
#include "sst/numerics.hpp"

namespace sst {

struct StepPlan {
  double dt_base = 1e-3;
  double dt_min = 1e-7;
  double t_max = 10.0;
  /// Effective step for a state whose stiffness functional is `stiffness`.
  double dt(double stiffness = 1.0) const;
};

enum class StopReason { Hit, Explosion, TimeOut };

struct StoppedPath {
  std::vector<double> times;
  std::vector<double> states;  // +-infinity once exploded
  StopReason stop_reason = StopReason::TimeOut;
  double stop_time = 0.0;
  double level = 0.0;   // hit level for Hit
  int side = 0;         // explosion side for Explosion
  double first_zero = std::numeric_limits<double>::infinity();  // reflected paths
};

/// Pair of standard normals with correlation rho; rho = +-1 are exact copies.
struct NoisePair {
  double a = 0.0;
  double b = 0.0;
};
NoisePair shared_noise_pair(Stream& driver, double rho);

/// Paths of dX = b dt + sqrt(2a) dB. Exact Gaussian transitions for the OU
/// model, Euler-Maruyama otherwise. States are recorded at `record_times`
/// (sorted) or at every step when none are given.
StoppedPath simulate_X(const CoefficientModel& model, double x0, const StepPlan& plan,
                       Stream& noise, const std::vector<double>& record_times = {});

/// Exact R^2 update of the Bessel(3) process over a step dt.
double besq3_exact_step(double q, double dt, Stream& noise);

/// dY = Y dt + sqrt(2) dB from 0 with exact transitions on a uniform step;
/// stops when |Y| reaches `level` (linear interpolation inside the step).
StoppedPath simulate_linear_Y(const std::vector<double>& t_grid, Stream& noise, double level,
                              double dt = 1e-3);

/// Tail geometry of mu in log-tail coordinates. For the lower tail
/// L = -log F(x) and r(L) = sqrt(a(x)) mu(x)/F(x); the upper tail mirrors it
/// with 1 - F. Escape times past `cap()` decide explosions.
class TailProfile {
 public:
  explicit TailProfile(const StationaryMeasure& mu);

  const StationaryMeasure& measure() const { return *mu_; }
  double ratio_lower(double L) const;
  double ratio_upper(double L) const;
  /// sqrt(a) mu at the u-quantile.
  double profile(double u) const;

  /// Remaining time int_L^inf dl/r(l)^2 for L >= cap(); divergent when infinite.
  Extended escape_lower(double L) const;
  Extended escape_upper(double L) const;

  static constexpr double cap() { return 1e6; }
  /// Coordinate at which simulators switch from x to L.
  static double switch_level() { return 13.815510557964274; }  // -log(1e-6)

 private:
  double direct_ratio(double L, bool lower) const;
  double table_ratio(const std::vector<double>& table, double L, bool lower) const;
  Extended escape_at_cap(bool lower) const;

  const StationaryMeasure* mu_;
  double zeta_lo_ = -30.0, zeta_hi_ = 0.0, zeta_step_ = 0.002;
  std::vector<double> log_ratio_lower_, log_ratio_upper_;
  Extended escape_lower_cap_, escape_upper_cap_;
};

/// Drift of the comparison process U: a' - b + 2a mu/F.
double reflected_u_drift(const StationaryMeasure& mu, double u);

/// Reflected at 0 and absorbed at +infinity. Steps in x until the upper tail
/// drops below exp(-switch_level), then in L = -log(1 - F(U)).
StoppedPath simulate_reflected_U(const TailProfile& tail, double u0, const StepPlan& plan,
                                 const std::function<double()>& noise,
                                 const std::vector<double>& record_times = {});

}  // namespace sst
