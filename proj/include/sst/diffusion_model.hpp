#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "sst/numerics.hpp"

namespace sst {

enum class ModelKind { OrnsteinUhlenbeck, PowerPotential, Tabulated, Custom };

/// Generator a d^2 + b d on the real line.
class CoefficientModel {
 public:
  struct Fields {
    ScalarField a, a_prime, b, b_prime;
    ScalarField log_scale;  // c(x) = int_0^x b/a; optional
  };

  static CoefficientModel ornstein_uhlenbeck();
  /// a = 1, b = -U' with U = |x|^alpha outside [-r, r] and a quartic inside.
  static CoefficientModel power_potential(double alpha, double smoothing_radius = 0.5);
  /// Natural cubic splines through (x, a) and (x, b); affine continuation outside.
  static CoefficientModel tabulated(std::vector<double> x, std::vector<double> a,
                                    std::vector<double> b);
  /// Three whitespace separated columns per line: x a b. '#' starts a comment.
  static CoefficientModel from_table_file(const std::string& path);
  static CoefficientModel custom(std::string name, Fields fields, bool unit_diffusion = false,
                                 bool even = false);

  double a(double x) const;
  double a_prime(double x) const;
  double b(double x) const;
  double b_prime(double x) const;
  double c(double x) const;

  ModelKind kind() const;
  const std::string& name() const;
  double alpha() const;
  double smoothing_radius() const;
  bool unit_diffusion() const;
  /// a even and b odd.
  bool even() const;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

/// Normalized stationary law mu = exp(c)/(m a), with log-tail tables for
/// accurate tails on both sides.
class StationaryMeasure {
 public:
  explicit StationaryMeasure(const CoefficientModel& model);

  const CoefficientModel& model() const { return model_; }
  double mass() const { return std::exp(log_mass_); }
  double log_mass() const { return log_mass_; }

  double log_density(double x) const;
  double density(double x) const;
  /// d/dx log density = (b - a')/a.
  double log_density_slope(double x) const;

  double cdf(double x) const;
  /// mu((x, +inf)).
  double upper_tail(double x) const;
  double log_cdf(double x) const;
  double log_upper_tail(double x) const;
  /// mu([x, y]) for x <= y, either end may be infinite.
  double segment_mass(double x, double y) const;

  double quantile(double u) const;
  /// x with -log F(x) = L.
  double quantile_log_lower(double L) const;
  /// x with -log mu((x, inf)) = L.
  double quantile_log_upper(double L) const;

  /// mu(x)/F(x) and mu(x)/mu((x, inf)).
  double lower_hazard(double x) const;
  double upper_hazard(double x) const;

  double median() const { return median_; }
  double table_lo() const { return lo_; }
  double table_hi() const { return hi_; }

  /// phi(x) = int_0^x a^{-1/2}; the identity for unit diffusions.
  double metric(double x) const;
  double metric_inverse(double p) const;

 private:
  double interp(const std::vector<double>& value, const std::vector<double>& slope,
                double x) const;
  double asymptotic_log_lower(double x) const;
  double asymptotic_log_upper(double x) const;
  double direct_mass(double x, double y) const;
  double solve_tail(double L, bool lower) const;

  CoefficientModel model_;
  double log_mass_ = 0.0;
  double lo_ = 0.0, hi_ = 0.0, step_ = 1.0;
  double median_ = 0.0;
  std::vector<double> log_lower_, log_upper_;
  std::vector<double> lower_slope_, upper_slope_;
  CumulativeIntegral metric_table_;
};

struct SegmentState {
  double x = 0.0;
  double y = 0.0;
  double u = 0.0;
  double v = 0.0;
};

/// Builds a segment with CDF coordinates; rejects x > y and the two
/// degenerate points at infinity.
SegmentState make_segment(const StationaryMeasure& mu, double x, double y);

/// h = mu([x, y]).
double mass_h(const SegmentState& seg);

/// CDF at t of the uniform-by-mu law on the segment (Dirac on the diagonal).
double link_cdf(const StationaryMeasure& mu, const SegmentState& seg, double t);

/// Point s with int_x^s a^{-1/2} = int_s^y a^{-1/2}, by bisection.
double midpoint_s(const CoefficientModel& model, double x, double y);

struct Extended {
  double value = 0.0;
  bool divergent = false;
  bool finite() const { return !divergent; }
};

struct RecurrenceReport {
  bool recurrent_left = false;
  bool recurrent_right = false;
  bool mass_finite = false;
};

struct CriterionReport {
  Extended i_minus;
  Extended i_plus;
  bool recurrent_left = false;
  bool recurrent_right = false;
  bool mass_finite = false;
  bool sst_exists = false;
};

enum class CriterionForm { Auto, Fubini, Direct };

RecurrenceReport check_recurrence(const CoefficientModel& model);

CriterionReport criterion_I(const CoefficientModel& model, CriterionForm form = CriterionForm::Auto);

/// Explosion test at +infinity for the diffusion a_hat d^2 + b_hat d on R_+
/// reflected at 0. True iff the test integral is finite.
bool feller_explosion_test(const ScalarField& a_hat, const ScalarField& b_hat);

enum class Side { Left, Right };

struct EdgeCoefficients {
  ScalarField a_hat;
  ScalarField b_hat;
};

/// Coefficients on R_+ of the one-sided edge process heading to the given
/// infinity: Right is the upper endpoint with the lower one at -infinity, Left
/// is the mirror image of the lower endpoint with the upper one at +infinity.
EdgeCoefficients edge_coefficients(const StationaryMeasure& mu, Side side);

}  // namespace sst
