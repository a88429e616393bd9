#include "sst/sde_engine.hpp"

#include <algorithm>
#include <cmath>

namespace sst {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTailCourant = 0.05;

// Advances a record cursor: returns the step length that lands on the next
// record time if it comes first.
double clip_to_record(double t, double dt, const std::vector<double>& rec, std::size_t cursor) {
  if (cursor < rec.size() && rec[cursor] - t < dt) return std::max(rec[cursor] - t, 0.0);
  return dt;
}
}  // namespace

double StepPlan::dt(double stiffness) const {
  const double s = std::max(stiffness, 1.0);
  return std::clamp(dt_base / s, dt_min, dt_base);
}

NoisePair shared_noise_pair(Stream& driver, double rho) {
  const double z1 = driver.normal();
  if (rho >= 1.0) return {z1, z1};
  if (rho <= -1.0) return {z1, -z1};
  const double z2 = driver.normal();
  return {z1, rho * z1 + std::sqrt(1.0 - rho * rho) * z2};
}

StoppedPath simulate_X(const CoefficientModel& model, double x0, const StepPlan& plan,
                       Stream& noise, const std::vector<double>& record_times) {
  StoppedPath path;
  const bool exact = model.kind() == ModelKind::OrnsteinUhlenbeck;
  const bool every = record_times.empty();
  const double t_end = every ? plan.t_max : std::min(plan.t_max, record_times.back());
  std::size_t cursor = 0;
  double t = 0.0, x = x0;
  auto record = [&] {
    while (cursor < record_times.size() && record_times[cursor] <= t) {
      path.times.push_back(record_times[cursor]);
      path.states.push_back(x);
      ++cursor;
    }
  };
  if (every) {
    path.times.push_back(0.0);
    path.states.push_back(x);
  } else {
    record();
  }
  while (t < t_end) {
    double dt = exact && !every ? t_end - t : plan.dt_base;
    dt = std::min(dt, t_end - t);
    if (!every) dt = clip_to_record(t, dt, record_times, cursor);
    if (dt <= 0.0) {
      record();
      if (cursor >= record_times.size()) break;
      continue;
    }
    const double z = noise.normal();
    if (exact) {
      x = std::exp(-dt) * x + std::sqrt(-std::expm1(-2.0 * dt)) * z;
    } else {
      x += model.b(x) * dt + std::sqrt(2.0 * model.a(x) * dt) * z;
    }
    t = (t_end - t - dt <= 1e-14 * std::max(1.0, t_end)) ? t_end : t + dt;
    if (!std::isfinite(x)) {
      path.stop_reason = StopReason::Explosion;
      path.side = x > 0 ? 1 : -1;
      path.stop_time = t;
      x = path.side * kInf;
      if (every) {
        path.times.push_back(t);
        path.states.push_back(x);
      }
      for (; cursor < record_times.size(); ++cursor) {
        path.times.push_back(record_times[cursor]);
        path.states.push_back(x);
      }
      return path;
    }
    if (every) {
      path.times.push_back(t);
      path.states.push_back(x);
    } else {
      record();
    }
  }
  path.stop_reason = StopReason::TimeOut;
  path.stop_time = t;
  return path;
}

double besq3_exact_step(double q, double dt, Stream& noise) {
  const double z1 = noise.normal() + std::sqrt(std::max(q, 0.0) / dt);
  const double z2 = noise.normal();
  const double z3 = noise.normal();
  return dt * (z1 * z1 + z2 * z2 + z3 * z3);
}

StoppedPath simulate_linear_Y(const std::vector<double>& t_grid, Stream& noise, double level,
                              double dt) {
  StoppedPath path;
  const double t_end = t_grid.empty() ? 0.0 : t_grid.back();
  std::size_t cursor = 0;
  double t = 0.0, y = 0.0;
  while (cursor < t_grid.size() && t_grid[cursor] <= 0.0) {
    path.times.push_back(t_grid[cursor++]);
    path.states.push_back(0.0);
  }
  while (t < t_end) {
    const double step = clip_to_record(t, std::min(dt, t_end - t), t_grid, cursor);
    if (step <= 0.0) break;
    const double next = std::exp(step) * y + std::sqrt(std::expm1(2.0 * step)) * noise.normal();
    if (std::abs(next) >= level) {
      const double target = next > 0 ? level : -level;
      const double frac = (target - y) / (next - y);
      path.stop_reason = StopReason::Hit;
      path.level = level;
      path.stop_time = t + frac * step;
      path.times.push_back(path.stop_time);
      path.states.push_back(target);
      return path;
    }
    y = next;
    t += step;
    if (cursor < t_grid.size() && t >= t_grid[cursor] - 1e-14) {
      t = t_grid[cursor];
      path.times.push_back(t);
      path.states.push_back(y);
      ++cursor;
    }
  }
  path.stop_reason = StopReason::TimeOut;
  path.stop_time = t_end;
  return path;
}

// ---------------------------------------------------------------------------

TailProfile::TailProfile(const StationaryMeasure& mu) : mu_(&mu) {
  zeta_hi_ = std::log(cap()) + 0.5;
  const int n = static_cast<int>(std::ceil((zeta_hi_ - zeta_lo_) / zeta_step_));
  zeta_hi_ = zeta_lo_ + n * zeta_step_;
  log_ratio_lower_.resize(n + 1);
  log_ratio_upper_.resize(n + 1);
  for (int i = 0; i <= n; ++i) {
    const double L = std::exp(zeta_lo_ + i * zeta_step_);
    log_ratio_lower_[i] = std::log(direct_ratio(L, true));
    log_ratio_upper_[i] = std::log(direct_ratio(L, false));
  }
  escape_lower_cap_ = escape_at_cap(true);
  escape_upper_cap_ = escape_at_cap(false);
}

double TailProfile::direct_ratio(double L, bool lower) const {
  const double x = lower ? mu_->quantile_log_lower(L) : mu_->quantile_log_upper(L);
  if (!std::isfinite(x)) return 0.0;
  const double hazard = lower ? mu_->lower_hazard(x) : mu_->upper_hazard(x);
  return std::sqrt(mu_->model().a(x)) * hazard;
}

double TailProfile::table_ratio(const std::vector<double>& table, double L, bool lower) const {
  if (!(L > 0.0)) return 0.0;
  const double zeta = std::log(L);
  if (zeta < zeta_lo_) {
    // The quantile sits deep in the opposite tail: q(u) = (1 - u) r_opposite.
    const double w = -std::expm1(-L);
    const double other = lower ? ratio_upper(-std::log(w)) : ratio_lower(-std::log(w));
    return w * other / std::exp(-L);
  }
  if (zeta >= zeta_hi_) return direct_ratio(L, lower);
  const double s = (zeta - zeta_lo_) / zeta_step_;
  const int i = std::min(static_cast<int>(s), static_cast<int>(table.size()) - 2);
  const double f = s - i;
  return std::exp((1.0 - f) * table[i] + f * table[i + 1]);
}

double TailProfile::ratio_lower(double L) const { return table_ratio(log_ratio_lower_, L, true); }
double TailProfile::ratio_upper(double L) const { return table_ratio(log_ratio_upper_, L, false); }

double TailProfile::profile(double u) const {
  if (!(u > 0.0) || !(u < 1.0)) return 0.0;
  if (u <= 0.5) return u * ratio_lower(-std::log(u));
  return (1.0 - u) * ratio_upper(-std::log1p(-u));
}

Extended TailProfile::escape_at_cap(bool lower) const {
  const double z0 = std::log(cap());
  auto f = [&](double zeta) {
    const double L = std::exp(zeta);
    const double r = direct_ratio(L, lower);
    return r > 0.0 ? L / (r * r) : kInf;
  };
  constexpr int kPieces = 4;
  constexpr double kWidth = 10.0;
  double piece[kPieces];
  double total = 0.0;
  for (int k = 0; k < kPieces; ++k) {
    piece[k] = integrate_finite(f, z0 + k * kWidth, z0 + (k + 1) * kWidth, 1e-7);
    if (!std::isfinite(piece[k])) return {kInf, true};
    total += piece[k];
  }
  const double r1 = piece[kPieces - 2] / std::max(piece[kPieces - 3], 1e-300);
  const double r2 = piece[kPieces - 1] / std::max(piece[kPieces - 2], 1e-300);
  if (!(r1 < 0.9 && r2 < 0.9)) return {kInf, true};
  return {total + piece[kPieces - 1] * r2 / (1.0 - r2), false};
}

Extended TailProfile::escape_lower(double L) const {
  if (escape_lower_cap_.divergent) return escape_lower_cap_;
  if (L <= cap()) return escape_lower_cap_;
  auto f = [&](double zeta) {
    const double l = std::exp(zeta);
    const double r = direct_ratio(l, true);
    return l / (r * r);
  };
  const double used = integrate_finite(f, std::log(cap()), std::log(L), 1e-8);
  return {std::max(0.0, escape_lower_cap_.value - used), false};
}

Extended TailProfile::escape_upper(double L) const {
  if (escape_upper_cap_.divergent) return escape_upper_cap_;
  if (L <= cap()) return escape_upper_cap_;
  auto f = [&](double zeta) {
    const double l = std::exp(zeta);
    const double r = direct_ratio(l, false);
    return l / (r * r);
  };
  const double used = integrate_finite(f, std::log(cap()), std::log(L), 1e-8);
  return {std::max(0.0, escape_upper_cap_.value - used), false};
}

// ---------------------------------------------------------------------------

double reflected_u_drift(const StationaryMeasure& mu, double u) {
  const auto& m = mu.model();
  return m.a_prime(u) - m.b(u) + 2.0 * m.a(u) * mu.lower_hazard(u);
}

StoppedPath simulate_reflected_U(const TailProfile& tail, double u0, const StepPlan& plan,
                                 const std::function<double()>& noise,
                                 const std::vector<double>& record_times) {
  const StationaryMeasure& mu = tail.measure();
  const auto& model = mu.model();
  const double l_switch = TailProfile::switch_level();
  const double x_switch = mu.quantile_log_upper(l_switch);
  const bool every = record_times.empty();
  StoppedPath path;
  std::size_t cursor = 0;
  double t = 0.0;
  double x = std::abs(u0);
  double L = 0.0;
  bool tail_mode = false;
  auto state = [&] { return tail_mode ? mu.quantile_log_upper(L) : x; };
  auto record = [&] {
    if (every) {
      path.times.push_back(t);
      path.states.push_back(state());
      return;
    }
    while (cursor < record_times.size() && record_times[cursor] <= t + 1e-14) {
      path.times.push_back(record_times[cursor]);
      path.states.push_back(state());
      ++cursor;
    }
  };
  auto finish = [&](StopReason reason, double when, double value) {
    path.stop_reason = reason;
    path.stop_time = when;
    if (every) {
      path.times.push_back(when);
      path.states.push_back(value);
    }
    for (; cursor < record_times.size(); ++cursor) {
      path.times.push_back(record_times[cursor]);
      path.states.push_back(record_times[cursor] >= when ? value : state());
    }
  };
  record();
  while (t < plan.t_max) {
    double dt = plan.dt_base;
    if (tail_mode) {
      const double r = tail.ratio_upper(L);
      dt = std::min(dt, kTailCourant * std::max(L, 1.0) / (r * r));
    }
    dt = std::min(dt, plan.t_max - t);
    if (!every) dt = clip_to_record(t, dt, record_times, cursor);
    if (dt <= 0.0) {
      record();
      if (cursor >= record_times.size()) break;
      continue;
    }
    const double z = noise();
    if (!tail_mode) {
      double next = x + reflected_u_drift(mu, x) * dt + std::sqrt(2.0 * model.a(x) * dt) * z;
      if (next < 0.0) {
        if (!std::isfinite(path.first_zero)) path.first_zero = t + dt;
        next = -next;
      }
      x = next;
      if (x > x_switch) {
        tail_mode = true;
        L = -mu.log_upper_tail(x);
      }
    } else {
      const double r = tail.ratio_upper(L);
      const double w = std::exp(-L);
      const double v = -std::expm1(-L);
      L += r * r * (1.0 + 2.0 * w / v) * dt + std::sqrt(2.0 * dt) * r * z;
      if (L < l_switch - 1.0) {
        tail_mode = false;
        x = mu.quantile_log_upper(L);
      }
    }
    t += dt;
    if (tail_mode && L >= TailProfile::cap()) {
      const Extended e = tail.escape_upper(L);
      if (e.finite() && t + e.value <= plan.t_max) {
        path.side = 1;
        finish(StopReason::Explosion, t + e.value, kInf);
      } else {
        finish(StopReason::TimeOut, plan.t_max, state());
      }
      return path;
    }
    record();
  }
  path.stop_reason = StopReason::TimeOut;
  path.stop_time = t;
  return path;
}

}  // namespace sst
