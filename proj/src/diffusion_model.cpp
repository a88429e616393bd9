#include "sst/diffusion_model.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_spline.h>

#include <algorithm>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace sst {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

struct SplineDeleter {
  void operator()(gsl_spline* s) const { gsl_spline_free(s); }
};

// Cubic spline with affine continuation past the last nodes. The continuation
// slope is clamped so the extension of `a` never decreases towards infinity.
struct SplineField {
  std::shared_ptr<gsl_spline> spline;
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0, s0 = 0, s1 = 0;

  SplineField(const std::vector<double>& x, const std::vector<double>& y, bool keep_positive) {
    spline.reset(gsl_spline_alloc(gsl_interp_cspline, x.size()), SplineDeleter{});
    gsl_spline_init(spline.get(), x.data(), y.data(), x.size());
    x0 = x.front();
    x1 = x.back();
    y0 = y.front();
    y1 = y.back();
    s0 = gsl_spline_eval_deriv(spline.get(), x0, nullptr);
    s1 = gsl_spline_eval_deriv(spline.get(), x1, nullptr);
    if (keep_positive) {
      s0 = std::min(s0, 0.0);
      s1 = std::max(s1, 0.0);
    }
  }
  double value(double x) const {
    if (x < x0) return y0 + s0 * (x - x0);
    if (x > x1) return y1 + s1 * (x - x1);
    return gsl_spline_eval(spline.get(), x, nullptr);
  }
  double deriv(double x) const {
    if (x < x0) return s0;
    if (x > x1) return s1;
    return gsl_spline_eval_deriv(spline.get(), x, nullptr);
  }
};

// int_0^s (b0 + b1 t)/(a0 + a1 t) dt for the affine continuation.
double affine_ratio_integral(double a0, double a1, double b0, double b1, double s) {
  if (a1 == 0.0) return (b0 * s + 0.5 * b1 * s * s) / a0;
  const double k = b1 / a1;
  return k * s + (b0 - k * a0) / a1 * std::log1p(a1 * s / a0);
}

}  // namespace

struct CoefficientModel::Impl {
  ModelKind kind = ModelKind::Custom;
  std::string name;
  double alpha = 0.0;
  double radius = 0.0;
  bool unit = false;
  bool even = false;
  ScalarField a, a_prime, b, b_prime, c;
};

namespace {

struct PowerPatch {
  double alpha, r, c0, c2, c4;
  PowerPatch(double alpha_, double r_) : alpha(alpha_), r(r_) {
    const double u = std::pow(r, alpha);
    const double u1 = alpha * std::pow(r, alpha - 1);
    const double u2 = alpha * (alpha - 1) * std::pow(r, alpha - 2);
    c4 = (u2 * r - u1) / (8 * r * r * r);
    c2 = (u1 - 4 * c4 * r * r * r) / (2 * r);
    c0 = u - c2 * r * r - c4 * r * r * r * r;
  }
  double U(double x) const {
    const double ax = std::abs(x);
    if (ax >= r) return std::pow(ax, alpha);
    return c0 + c2 * x * x + c4 * x * x * x * x;
  }
  double U1(double x) const {
    const double ax = std::abs(x);
    if (ax >= r) return std::copysign(alpha * std::pow(ax, alpha - 1), x);
    return 2 * c2 * x + 4 * c4 * x * x * x;
  }
  double U2(double x) const {
    const double ax = std::abs(x);
    if (ax >= r) return alpha * (alpha - 1) * std::pow(ax, alpha - 2);
    return 2 * c2 + 12 * c4 * x * x;
  }
};

}  // namespace

CoefficientModel CoefficientModel::ornstein_uhlenbeck() {
  auto impl = std::make_shared<Impl>();
  impl->kind = ModelKind::OrnsteinUhlenbeck;
  impl->name = "ou";
  impl->unit = true;
  impl->even = true;
  impl->a = [](double) { return 1.0; };
  impl->a_prime = [](double) { return 0.0; };
  impl->b = [](double x) { return -x; };
  impl->b_prime = [](double) { return -1.0; };
  impl->c = [](double x) { return -0.5 * x * x; };
  CoefficientModel m;
  m.impl_ = impl;
  return m;
}

CoefficientModel CoefficientModel::power_potential(double alpha, double smoothing_radius) {
  if (!(alpha >= 1.0) || !std::isfinite(alpha))
    throw ConfigError("power potential needs alpha >= 1");
  if (!(smoothing_radius > 0.0)) throw ConfigError("smoothing radius must be positive");
  auto impl = std::make_shared<Impl>();
  impl->kind = ModelKind::PowerPotential;
  impl->name = "power";
  impl->alpha = alpha;
  impl->radius = smoothing_radius;
  impl->unit = true;
  impl->even = true;
  const PowerPatch p(alpha, smoothing_radius);
  impl->a = [](double) { return 1.0; };
  impl->a_prime = [](double) { return 0.0; };
  impl->b = [p](double x) { return -p.U1(x); };
  impl->b_prime = [p](double x) { return -p.U2(x); };
  impl->c = [p](double x) { return -(p.U(x) - p.c0); };
  CoefficientModel m;
  m.impl_ = impl;
  return m;
}

CoefficientModel CoefficientModel::tabulated(std::vector<double> x, std::vector<double> a,
                                             std::vector<double> b) {
  if (x.size() < 4 || a.size() != x.size() || b.size() != x.size())
    throw ConfigError("coefficient table needs at least 4 rows of x, a, b");
  for (std::size_t i = 1; i < x.size(); ++i)
    if (!(x[i] > x[i - 1])) throw ConfigError("coefficient table x column must increase");
  for (double v : a)
    if (!(v > 0.0)) throw ConfigError("coefficient table has a non-positive diffusion value");
  if (x.front() > -20.0 || x.back() < 20.0)
    throw ConfigError("coefficient table must cover [-20, 20]");
  gsl_set_error_handler_off();
  auto impl = std::make_shared<Impl>();
  impl->kind = ModelKind::Tabulated;
  impl->name = "tabulated";
  const SplineField fa(x, a, true);
  const SplineField fb(x, b, false);
  impl->a = [fa](double t) { return fa.value(t); };
  impl->a_prime = [fa](double t) { return fa.deriv(t); };
  impl->b = [fb](double t) { return fb.value(t); };
  impl->b_prime = [fb](double t) { return fb.deriv(t); };
  bool unit = true;
  for (double v : a) unit = unit && v == 1.0;
  impl->unit = unit;
  bool even = x.front() == -x.back();
  for (std::size_t i = 0; even && i < x.size(); ++i) {
    const std::size_t j = x.size() - 1 - i;
    even = x[i] == -x[j] && a[i] == a[j] && b[i] == -b[j];
  }
  impl->even = even;
  const double lo = x.front(), hi = x.back();
  const double step = std::max(0.005, (hi - lo) / 200000.0);
  auto ratio = [fa, fb](double t) { return fb.value(t) / fa.value(t); };
  auto table = std::make_shared<CumulativeIntegral>(ratio, 0.0, lo, hi, step);
  impl->c = [table, fa, fb, lo, hi](double t) {
    if (t > hi)
      return (*table)(hi) + affine_ratio_integral(fa.y1, fa.s1, fb.y1, fb.s1, t - hi);
    if (t < lo)
      return (*table)(lo) + affine_ratio_integral(fa.y0, fa.s0, fb.y0, fb.s0, t - lo);
    return (*table)(t);
  };
  CoefficientModel m;
  m.impl_ = impl;
  return m;
}

CoefficientModel CoefficientModel::from_table_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open coefficient table " + path);
  std::vector<double> x, a, b;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    double xi, ai, bi;
    if (!(ss >> xi)) continue;
    if (!(ss >> ai >> bi))
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected three columns");
    x.push_back(xi);
    a.push_back(ai);
    b.push_back(bi);
  }
  return tabulated(std::move(x), std::move(a), std::move(b));
}

CoefficientModel CoefficientModel::custom(std::string name, Fields fields, bool unit_diffusion,
                                          bool even) {
  if (!fields.a || !fields.b) throw ConfigError("custom model needs a and b");
  auto impl = std::make_shared<Impl>();
  impl->kind = ModelKind::Custom;
  impl->name = std::move(name);
  impl->unit = unit_diffusion;
  impl->even = even;
  impl->a = fields.a;
  impl->b = fields.b;
  auto fd = [](ScalarField f) {
    return [f](double x) {
      const double h = 1e-5 * std::max(1.0, std::abs(x));
      return (f(x + h) - f(x - h)) / (2 * h);
    };
  };
  impl->a_prime = fields.a_prime ? fields.a_prime : ScalarField(fd(fields.a));
  impl->b_prime = fields.b_prime ? fields.b_prime : ScalarField(fd(fields.b));
  if (fields.log_scale) {
    impl->c = fields.log_scale;
  } else {
    ScalarField a = fields.a, b = fields.b;
    auto ratio = [a, b](double t) { return b(t) / a(t); };
    auto table = std::make_shared<CumulativeIntegral>(ratio, 0.0, -50.0, 50.0, 0.01);
    impl->c = [table, ratio](double t) {
      if (table->contains(t)) return (*table)(t);
      const double edge = t > 0 ? table->hi() : table->lo();
      return (*table)(edge) + integrate_finite(ratio, edge, t, 1e-12);
    };
  }
  CoefficientModel m;
  m.impl_ = impl;
  return m;
}

double CoefficientModel::a(double x) const { return impl_->a(x); }
double CoefficientModel::a_prime(double x) const { return impl_->a_prime(x); }
double CoefficientModel::b(double x) const { return impl_->b(x); }
double CoefficientModel::b_prime(double x) const { return impl_->b_prime(x); }
double CoefficientModel::c(double x) const { return impl_->c(x); }
ModelKind CoefficientModel::kind() const { return impl_->kind; }
const std::string& CoefficientModel::name() const { return impl_->name; }
double CoefficientModel::alpha() const { return impl_->alpha; }
double CoefficientModel::smoothing_radius() const { return impl_->radius; }
bool CoefficientModel::unit_diffusion() const { return impl_->unit; }
bool CoefficientModel::even() const { return impl_->even; }

// ---------------------------------------------------------------------------

namespace {

constexpr double kLogDepth = 750.0;

double scan_edge(const std::function<double(double)>& ell, int dir, double& peak) {
  double x = 0.0;
  double step = 0.05;
  double prev = ell(0.0);
  peak = std::max(peak, prev);
  while (std::abs(x) < 1e8) {
    const double next = x + dir * step;
    const double v = ell(next);
    if (std::isfinite(v)) peak = std::max(peak, v);
    if (!(v > peak - kLogDepth) && v <= prev) {
      double a = x, b = next;
      for (int k = 0; k < 60; ++k) {
        const double mid = 0.5 * (a + b);
        if (ell(mid) > peak - kLogDepth)
          a = mid;
        else
          b = mid;
      }
      return b;
    }
    prev = v;
    x = next;
    step *= 1.02;
  }
  return x;
}

}  // namespace

StationaryMeasure::StationaryMeasure(const CoefficientModel& model) : model_(model) {
  auto log_unnorm = [this](double x) { return model_.c(x) - std::log(model_.a(x)); };
  auto weight = [&](double x) { return std::exp(log_unnorm(x)); };
  const QuadResult m = adaptive_quad(weight, -kInf, kInf, 1e-11);
  if (m.divergent || !(m.value > 0.0) || !std::isfinite(m.value))
    throw NumericalError("NonIntegrable", "stationary mass int exp(c)/a diverges");
  log_mass_ = std::log(m.value);

  auto ell = [&](double x) { return log_unnorm(x) - log_mass_; };
  double peak = -kInf;
  hi_ = scan_edge(ell, +1, peak);
  lo_ = scan_edge(ell, -1, peak);
  hi_ = scan_edge(ell, +1, peak);
  const double span = hi_ - lo_;
  const int cells = std::clamp(static_cast<int>(std::ceil(span / 0.005)), 4000, 40000);
  step_ = span / cells;

  std::vector<double> node(cells + 1), log_cell(cells);
  for (int i = 0; i <= cells; ++i) node[i] = ell(lo_ + i * step_);
  for (int i = 0; i < cells; ++i) {
    const double a = lo_ + i * step_;
    const double ref = std::max({node[i], node[i + 1], ell(a + 0.5 * step_)});
    const double v = kronrod15([&](double x) { return std::exp(ell(x) - ref); }, a, a + step_);
    log_cell[i] = v > 0.0 ? ref + std::log(v) : -kInf;
  }
  log_lower_.assign(cells + 1, 0.0);
  log_upper_.assign(cells + 1, 0.0);
  log_lower_[0] = asymptotic_log_lower(lo_);
  for (int i = 0; i < cells; ++i) log_lower_[i + 1] = log_add(log_lower_[i], log_cell[i]);
  log_upper_[cells] = asymptotic_log_upper(hi_);
  for (int i = cells; i > 0; --i) log_upper_[i - 1] = log_add(log_upper_[i], log_cell[i - 1]);
  const double total = log_add(log_lower_[cells], log_upper_[cells]);
  for (double& v : log_lower_) v -= total;
  for (double& v : log_upper_) v -= total;
  log_mass_ += total;

  lower_slope_.resize(cells + 1);
  upper_slope_.resize(cells + 1);
  for (int i = 0; i <= cells; ++i) {
    const double l = node[i] - total;
    lower_slope_[i] = std::exp(l - log_lower_[i]);
    upper_slope_[i] = -std::exp(l - log_upper_[i]);
  }
  median_ = solve_tail(std::numbers::ln2, true);

  if (!model_.unit_diffusion()) {
    const CoefficientModel mdl = model_;
    metric_table_ = CumulativeIntegral([mdl](double x) { return 1.0 / std::sqrt(mdl.a(x)); },
                                       0.0, std::min(lo_, 0.0) - 1.0, std::max(hi_, 0.0) + 1.0,
                                       std::max(0.005, span / 200000.0));
  }
}

double StationaryMeasure::log_density(double x) const {
  return model_.c(x) - std::log(model_.a(x)) - log_mass_;
}

double StationaryMeasure::density(double x) const {
  if (std::isinf(x)) return 0.0;
  return std::exp(log_density(x));
}

double StationaryMeasure::log_density_slope(double x) const {
  return (model_.b(x) - model_.a_prime(x)) / model_.a(x);
}

double StationaryMeasure::interp(const std::vector<double>& value,
                                 const std::vector<double>& slope, double x) const {
  const int cells = static_cast<int>(value.size()) - 1;
  const double s = (x - lo_) / step_;
  const int i = std::clamp(static_cast<int>(std::floor(s)), 0, cells - 1);
  const double t = s - i;
  const double h00 = (1 + 2 * t) * (1 - t) * (1 - t);
  const double h10 = t * (1 - t) * (1 - t);
  const double h01 = t * t * (3 - 2 * t);
  const double h11 = t * t * (t - 1);
  return h00 * value[i] + h10 * step_ * slope[i] + h01 * value[i + 1] +
         h11 * step_ * slope[i + 1];
}

double StationaryMeasure::asymptotic_log_lower(double x) const {
  const double lambda = log_density_slope(x);
  const double ell = log_density(x);
  if (!std::isfinite(ell) || !std::isfinite(lambda)) return -kInf;
  if (!(lambda > 0.0)) return ell;
  const double h = 1e-4 * std::max(1.0, std::abs(x));
  const double curv = (log_density_slope(x + h) - log_density_slope(x - h)) / (2 * h);
  const double corr = curv / (lambda * lambda);
  return ell - std::log(lambda) + (corr > -0.5 ? std::log1p(corr) : 0.0);
}

double StationaryMeasure::asymptotic_log_upper(double x) const {
  const double lambda = -log_density_slope(x);
  const double ell = log_density(x);
  if (!std::isfinite(ell) || !std::isfinite(lambda)) return -kInf;
  if (!(lambda > 0.0)) return ell;
  const double h = 1e-4 * std::max(1.0, std::abs(x));
  const double curv = (log_density_slope(x + h) - log_density_slope(x - h)) / (2 * h);
  const double corr = curv / (lambda * lambda);
  return ell - std::log(lambda) + (corr > -0.5 ? std::log1p(corr) : 0.0);
}

double StationaryMeasure::log_cdf(double x) const {
  if (x == -kInf) return -kInf;
  if (x == kInf) return 0.0;
  if (x <= lo_) return asymptotic_log_lower(x);
  if (x >= hi_) return std::log1p(-std::exp(log_upper_tail(x)));
  return interp(log_lower_, lower_slope_, x);
}

double StationaryMeasure::log_upper_tail(double x) const {
  if (x == kInf) return -kInf;
  if (x == -kInf) return 0.0;
  if (x >= hi_) return asymptotic_log_upper(x);
  if (x <= lo_) return std::log1p(-std::exp(log_cdf(x)));
  return interp(log_upper_, upper_slope_, x);
}

double StationaryMeasure::cdf(double x) const {
  if (x <= median_) return std::exp(log_cdf(x));
  return -std::expm1(log_upper_tail(x));
}

double StationaryMeasure::upper_tail(double x) const {
  if (x >= median_) return std::exp(log_upper_tail(x));
  return -std::expm1(log_cdf(x));
}

double StationaryMeasure::direct_mass(double x, double y) const {
  const int pieces = std::max(1, static_cast<int>(std::ceil((y - x) / step_)));
  const double w = (y - x) / pieces;
  const double ref = std::max(log_density(x), log_density(y));
  double sum = 0.0;
  for (int k = 0; k < pieces; ++k)
    sum += kronrod15([&](double t) { return std::exp(log_density(t) - ref); }, x + k * w,
                     x + (k + 1) * w);
  return sum * std::exp(ref);
}

double StationaryMeasure::segment_mass(double x, double y) const {
  if (!(y > x)) return 0.0;
  if (x == -kInf && y == kInf) return 1.0;
  if (x == -kInf) return cdf(y);
  if (y == kInf) return upper_tail(x);
  if (y - x <= 8.0 * step_) return direct_mass(x, y);
  if (y <= median_) {
    const double ly = log_cdf(y);
    return std::exp(ly) * -std::expm1(log_cdf(x) - ly);
  }
  if (x >= median_) {
    const double lx = log_upper_tail(x);
    return std::exp(lx) * -std::expm1(log_upper_tail(y) - lx);
  }
  return std::max(0.0, 1.0 - std::exp(log_cdf(x)) - std::exp(log_upper_tail(y)));
}

namespace {
// Hazard from the two-term tail expansion; avoids differencing huge logs.
double asymptotic_hazard(double lambda, double curv) {
  const double corr = curv / (lambda * lambda);
  return corr > -0.5 ? lambda / (1.0 + corr) : lambda;
}
}  // namespace

double StationaryMeasure::lower_hazard(double x) const {
  if (x < lo_) {
    const double lambda = log_density_slope(x);
    if (lambda > 0.0) {
      const double h = 1e-4 * std::max(1.0, std::abs(x));
      return asymptotic_hazard(
          lambda, (log_density_slope(x + h) - log_density_slope(x - h)) / (2 * h));
    }
  }
  return std::exp(log_density(x) - log_cdf(x));
}

double StationaryMeasure::upper_hazard(double x) const {
  if (x > hi_) {
    const double lambda = -log_density_slope(x);
    if (lambda > 0.0) {
      const double h = 1e-4 * std::max(1.0, std::abs(x));
      return asymptotic_hazard(
          lambda, (log_density_slope(x + h) - log_density_slope(x - h)) / (2 * h));
    }
  }
  return std::exp(log_density(x) - log_upper_tail(x));
}

double StationaryMeasure::solve_tail(double L, bool lower) const {
  // g increases in x for both orientations.
  auto g = [&](double x) { return lower ? log_cdf(x) + L : -(log_upper_tail(x) + L); };
  auto dg = [&](double x) { return lower ? lower_hazard(x) : upper_hazard(x); };
  double a, b;
  const double target = -L;
  if (lower && target >= log_lower_.front() && target <= log_lower_.back()) {
    const auto it = std::lower_bound(log_lower_.begin(), log_lower_.end(), target);
    const int i = std::max(1, static_cast<int>(it - log_lower_.begin()));
    a = lo_ + (i - 1) * step_;
    b = lo_ + i * step_;
  } else if (!lower && target >= log_upper_.back() && target <= log_upper_.front()) {
    const auto it = std::lower_bound(log_upper_.rbegin(), log_upper_.rend(), target);
    const int j = static_cast<int>(it - log_upper_.rbegin());
    const int i = static_cast<int>(log_upper_.size()) - 1 - std::max(1, j);
    a = lo_ + i * step_;
    b = a + step_;
  } else {
    // Outside the table: expand a bracket geometrically.
    double width = std::max(1.0, hi_ - lo_);
    if (g(lo_) > 0.0) {
      b = lo_;
      a = lo_ - width;
      while (g(a) > 0.0) {
        b = a;
        width *= 2.0;
        a = lo_ - width;
        if (!std::isfinite(a)) return -kInf;
      }
    } else {
      a = hi_;
      b = hi_ + width;
      while (g(b) < 0.0) {
        a = b;
        width *= 2.0;
        b = hi_ + width;
        if (!std::isfinite(b)) return kInf;
      }
    }
  }
  double x = 0.5 * (a + b);
  for (int it = 0; it < 200; ++it) {
    const double gx = g(x);
    if (gx == 0.0) return x;
    if (gx < 0.0)
      a = x;
    else
      b = x;
    const double d = dg(x);
    double next = x - gx / d;
    if (!(next > a && next < b) || !std::isfinite(next)) next = 0.5 * (a + b);
    if (std::abs(next - x) <= 1e-15 * std::max(1.0, std::abs(x)) || b - a <= 1e-15 * std::max(1.0, std::abs(x)))
      return next;
    x = next;
  }
  return x;
}

double StationaryMeasure::quantile_log_lower(double L) const {
  if (L <= 0.0) return kInf;
  if (L == kInf) return -kInf;
  return solve_tail(L, true);
}

double StationaryMeasure::quantile_log_upper(double L) const {
  if (L <= 0.0) return -kInf;
  if (L == kInf) return kInf;
  return solve_tail(L, false);
}

double StationaryMeasure::quantile(double u) const {
  if (!(u > 0.0)) return -kInf;
  if (!(u < 1.0)) return kInf;
  if (u <= 0.5) return quantile_log_lower(-std::log(u));
  return quantile_log_upper(-std::log1p(-u));
}

double StationaryMeasure::metric(double x) const {
  if (model_.unit_diffusion()) return x;
  if (metric_table_.contains(x)) return metric_table_(x);
  const double edge = x > 0 ? metric_table_.hi() : metric_table_.lo();
  const CoefficientModel& m = model_;
  return metric_table_(edge) +
         integrate_finite([&m](double t) { return 1.0 / std::sqrt(m.a(t)); }, edge, x, 1e-13);
}

double StationaryMeasure::metric_inverse(double p) const {
  if (model_.unit_diffusion()) return p;
  double lo = -1.0, hi = 1.0;
  while (metric(lo) > p) lo *= 2.0;
  while (metric(hi) < p) hi *= 2.0;
  auto f = [&](double x) {
    return std::make_pair(metric(x) - p, 1.0 / std::sqrt(model_.a(x)));
  };
  std::uintmax_t iters = 200;
  return boost::math::tools::newton_raphson_iterate(f, 0.5 * (lo + hi), lo, hi, 50, iters);
}

// ---------------------------------------------------------------------------

SegmentState make_segment(const StationaryMeasure& mu, double x, double y) {
  if (std::isnan(x) || std::isnan(y) || x > y)
    throw NumericalError("DegenerateSegment", "segment needs x <= y");
  if ((x == -kInf && y == -kInf) || (x == kInf && y == kInf))
    throw NumericalError("DegenerateSegment", "segments collapsed at infinity are excluded");
  SegmentState s{x, y, 0.0, 0.0};
  s.u = mu.cdf(x);
  if (x == y) {
    s.v = s.u;
  } else if (y == kInf) {
    s.v = 1.0;
  } else {
    s.v = std::min(1.0, s.u + mu.segment_mass(x, y));
  }
  return s;
}

double mass_h(const SegmentState& seg) { return std::clamp(seg.v - seg.u, 0.0, 1.0); }

double link_cdf(const StationaryMeasure& mu, const SegmentState& seg, double t) {
  if (seg.x == seg.y) return t >= seg.x ? 1.0 : 0.0;
  if (t < seg.x) return 0.0;
  if (t >= seg.y) return 1.0;
  const double h = mass_h(seg);
  if (!(h > 0.0)) return t >= seg.x ? 1.0 : 0.0;
  const double below = mu.segment_mass(seg.x, t), above = mu.segment_mass(t, seg.y);
  return std::clamp(below <= above ? below / h : 1.0 - above / h, 0.0, 1.0);
}

double midpoint_s(const CoefficientModel& model, double x, double y) {
  if (!(x <= y) || !std::isfinite(x) || !std::isfinite(y))
    throw NumericalError("DegenerateSegment", "midpoint needs finite x <= y");
  if (x == y) return x;
  if (model.unit_diffusion()) return 0.5 * (x + y);
  auto w = [&model](double t) { return 1.0 / std::sqrt(model.a(t)); };
  double lo = x, hi = y;
  const double tol = 1e-10 * (y - x);
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    const double g = integrate_finite(w, x, mid, 1e-13) - integrate_finite(w, mid, y, 1e-13);
    if (g < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------

RecurrenceReport check_recurrence(const CoefficientModel& model) {
  RecurrenceReport r;
  auto speed = [&model](double x) { return std::exp(model.c(x)) / model.a(x); };
  auto scale = [&model](double x) { return std::exp(-model.c(x)); };
  r.mass_finite = !adaptive_quad(speed, -kInf, kInf, 1e-10).divergent;
  r.recurrent_right = tail_diverges(scale, 0.0, +1, 1e-10);
  r.recurrent_left = tail_diverges(scale, 0.0, -1, 1e-10);
  return r;
}

namespace {

Extended one_sided_I(const CoefficientModel& model, double log_m, int dir, bool fubini) {
  auto width = [&model](double y) {
    return 0.5 / (1.0 + std::abs(model.b(y) / model.a(y)));
  };
  ScalarField outer;
  if (fubini) {
    outer = [&, dir](double t) {
      const double y = dir * t;
      const double cy = model.c(y);
      auto inner = [&](double z) { return std::exp(model.c(z) - cy - log_m) / model.a(z); };
      return sweep_integral(inner, y, dir, dir * kInf, width(y), 1e-11);
    };
  } else {
    outer = [&, dir](double t) {
      const double y = dir * t;
      const double cy = model.c(y);
      const double ay = model.a(y);
      auto inner = [&](double z) { return std::exp(cy - model.c(z) - log_m) / ay; };
      return sweep_integral(inner, y, -dir, 0.0, width(y), 1e-11);
    };
  }
  const QuadResult q = adaptive_quad(outer, 0.0, kInf, 1e-9);
  return {q.value, q.divergent};
}

}  // namespace

CriterionReport criterion_I(const CoefficientModel& model, CriterionForm form) {
  const RecurrenceReport rec = check_recurrence(model);
  CriterionReport r;
  r.recurrent_left = rec.recurrent_left;
  r.recurrent_right = rec.recurrent_right;
  r.mass_finite = rec.mass_finite;
  if (!rec.mass_finite) {
    r.i_minus = {kInf, true};
    r.i_plus = {kInf, true};
    return r;
  }
  auto speed = [&model](double x) { return std::exp(model.c(x)) / model.a(x); };
  const double log_m = std::log(adaptive_quad(speed, -kInf, kInf, 1e-11).value);
  const bool fubini = form == CriterionForm::Fubini ||
                      (form == CriterionForm::Auto && model.unit_diffusion());
  r.i_plus = one_sided_I(model, log_m, +1, fubini);
  r.i_minus = model.even() ? r.i_plus : one_sided_I(model, log_m, -1, fubini);
  r.sst_exists = r.mass_finite && r.recurrent_left && r.recurrent_right && r.i_minus.finite() &&
                 r.i_plus.finite();
  return r;
}

bool feller_explosion_test(const ScalarField& a_hat, const ScalarField& b_hat) {
  auto ratio = [&](double x) { return b_hat(x) / a_hat(x); };
  const CumulativeIntegral B(ratio, 0.0, 0.0, 700.0, 0.01);
  auto Bx = [&](double x) {
    if (x <= B.hi()) return B(x);
    return B(B.hi()) + integrate_finite(ratio, B.hi(), x, 1e-12);
  };
  auto outer = [&](double x) {
    if (x <= 0.0) return 0.0;
    const double bx = Bx(x);
    auto inner = [&](double z) { return std::exp(Bx(z) - bx) / a_hat(z); };
    const double w = 0.5 / (1.0 + std::abs(ratio(x)));
    return sweep_integral(inner, x, -1, 0.0, w, 1e-10);
  };
  return !tail_diverges(outer, 0.0, +1, 1e-9);
}

EdgeCoefficients edge_coefficients(const StationaryMeasure& mu, Side side) {
  const StationaryMeasure* m = &mu;
  if (side == Side::Right) {
    return {[m](double x) { return m->model().a(x); },
            [m](double x) {
              const auto& md = m->model();
              return md.a_prime(x) - md.b(x) + 2.0 * md.a(x) * m->lower_hazard(x);
            }};
  }
  return {[m](double x) { return m->model().a(-x); },
          [m](double x) {
            const auto& md = m->model();
            return -(md.a_prime(-x) - md.b(-x) - 2.0 * md.a(-x) * m->upper_hazard(-x));
          }};
}

}  // namespace sst
