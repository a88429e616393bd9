#include "sst/dual_process.hpp"

#include <algorithm>
#include <cmath>

#include "sst/errors.hpp"

namespace sst {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kTailCourant = 0.05;
constexpr int kMaxHalvings = 40;

double root_a(const CoefficientModel& m, double x) {
  return m.unit_diffusion() ? 1.0 : std::sqrt(m.a(x));
}

// sqrt(a) mu at x.
double edge_flux(const StationaryMeasure& mu, double x) {
  return root_a(mu.model(), x) * mu.density(x);
}

double gamma_from(double P, double Q, double alpha) {
  return 2.0 * (P + Q) * (P + Q) - 8.0 * alpha * P * Q;
}

// mu([x, y]) through the CDF tables; cheap and smooth in (x, y).
double cdf_gap(const StationaryMeasure& mu, double x, double y) {
  const double m = mu.median();
  if (y <= m) {
    const double ly = mu.log_cdf(y);
    return std::exp(ly) * -std::expm1(mu.log_cdf(x) - ly);
  }
  if (x >= m) {
    const double lx = mu.log_upper_tail(x);
    return std::exp(lx) * -std::expm1(mu.log_upper_tail(y) - lx);
  }
  return 1.0 - mu.cdf(x) - mu.upper_tail(y);
}

struct Inverted {
  double x, y, delta;
};

// Solves gap(x(d), y(d)) = R with phi(x) = phi(S) - d, phi(y) = phi(S) + d.
// d/dd gap = sqrt(a(x)) mu(x) + sqrt(a(y)) mu(y).
template <class Gap>
Inverted invert_chart(const StationaryMeasure& mu, double R, double S, double guess, Gap gap) {
  if (R <= 0.0) return {S, S, 0.0};
  if (R >= 1.0) throw NumericalError("ChartInversionFailure", "R must lie below 1");
  const auto& model = mu.model();
  const bool unit = model.unit_diffusion();
  const double pS = unit ? S : mu.metric(S);
  auto ends = [&](double d) {
    if (unit) return std::pair<double, double>(S - d, S + d);
    return std::pair<double, double>(mu.metric_inverse(pS - d), mu.metric_inverse(pS + d));
  };
  auto residual = [&](double d, double& slope, double& x, double& y) {
    std::tie(x, y) = ends(d);
    slope = edge_flux(mu, x) + edge_flux(mu, y);
    return gap(x, y) - R;
  };
  double lo = 0.0, hi = kInf;
  double d = guess > 0.0 ? guess : std::min(R / std::max(2.0 * edge_flux(mu, S), 1e-300), 1.0);
  double x = S, y = S, slope = 0.0;
  const double tol = 1e-10 * R;
  for (int it = 0; it < 400; ++it) {
    const double g = residual(d, slope, x, y);
    if (!std::isfinite(g)) {
      hi = d;
      d = 0.5 * (lo + d);
      continue;
    }
    if (std::abs(g) <= tol) return {x, y, d};
    if (g < 0.0) lo = d; else hi = d;
    double next = slope > 0.0 ? d - g / slope : kNaN;
    if (!(next > lo && next < hi)) {
      if (!std::isfinite(hi)) next = 2.0 * d + 1e-300;
      else if (lo > 0.0 && hi > 4.0 * lo) next = std::sqrt(lo * hi);
      else next = 0.5 * (lo + hi);
    }
    if (std::isfinite(hi) && hi - lo <= 1e-15 * std::max(1.0, std::abs(hi))) return {x, y, d};
    d = next;
  }
  throw NumericalError(
      "ChartInversionFailure",
      "no convergence for R = " + std::to_string(R) + ", S = " + std::to_string(S));
}

// Changed-clock drift of S at the chart point (x, y) with midpoint s and mass h.
ChartDrift chart_drift_at(const StationaryMeasure& mu, double x, double y, double s, double h,
                          double alpha) {
  const auto& m = mu.model();
  const double rho = 2.0 * alpha - 1.0;
  const double gx = root_a(m, x), gy = root_a(m, y), gs = root_a(m, s);
  const double P = gx * mu.density(x), Q = gy * mu.density(y);
  const double k = 0.5 * gs;
  const double sx = k / gx, sy = k / gy;
  double beta = sx * (m.a_prime(x) - m.b(x)) + sy * (m.a_prime(y) - m.b(y));
  if (h > 0.0) beta += (2.0 * k / h) * (1.0 + rho) * (Q - P);
  if (!m.unit_diffusion()) {
    auto dg = [&](double z, double g) { return m.a_prime(z) / (2.0 * g); };
    const double gps = dg(s, gs);
    const double sxx = 0.5 * (gps * sx / gx - gs * dg(x, gx) / (gx * gx));
    const double syy = 0.5 * (gps * sy / gy - gs * dg(y, gy) / (gy * gy));
    const double sxy = 0.5 * gps * sy / gx;
    beta += gx * gx * sxx + gy * gy * syy + 2.0 * rho * gx * gy * sxy;
  }
  ChartDrift out;
  out.gamma = gamma_from(P, Q, alpha);
  out.beta = beta / out.gamma;
  if (alpha > 0.0) {
    out.noise_var = 2.0 * alpha * gs * gs / out.gamma;
    out.noise_corr =
        std::clamp(std::sqrt(2.0 * alpha) * (Q - P) / std::sqrt(out.gamma), -1.0, 1.0);
  }
  return out;
}

double chart_midpoint(const StationaryMeasure& mu, double x, double y) {
  if (mu.model().unit_diffusion()) return 0.5 * (x + y);
  return mu.metric_inverse(0.5 * (mu.metric(x) + mu.metric(y)));
}

// Path state in log-tail coordinates Lx = -log F(x), Ly = -log(1 - F(y)).
struct Walker {
  const DualModel& dm;
  const DualConfig& cfg;
  Stream& noise;
  StepObserver observer;
  DualPath path;

  double t = 0.0;
  double sigma = 0.0;
  double Lx = 0.0, Ly = 0.0;
  bool x_gone = false, y_gone = false;     // exploded or parked
  bool x_parked = false, y_parked = false;  // never explodes
  std::size_t cursor = 0;

  // Chart coordinates when active.
  double cx = 0.0, cy = 0.0;

  Walker(const DualModel& m, const DualConfig& c, Stream& n, const StepObserver& o)
      : dm(m), cfg(c), noise(n), observer(o) {}

  const StationaryMeasure& mu() const { return dm.measure(); }
  const TailProfile& tail() const { return dm.tail(); }
  double U() const { return x_gone ? 0.0 : std::exp(-Lx); }
  double W() const { return y_gone ? 0.0 : std::exp(-Ly); }
  double h() const { return 1.0 - U() - W(); }

  Regime regime_now() const {
    if (path.absorbed && t >= path.tau_star) return Regime::Absorbed;
    const double edge = -std::log(cfg.eps_edge);
    if (x_gone || Lx > edge) return Regime::LeftEdge;
    if (y_gone || Ly > edge) return Regime::RightEdge;
    return Regime::Interior;
  }

  DualSnapshot snapshot_log(double at) const {
    DualSnapshot s;
    s.t = at;
    if (path.absorbed && at >= path.tau_star) {
      s.seg = {-kInf, kInf, 0.0, 1.0};
      s.h = 1.0;
      s.regime = Regime::Absorbed;
      return s;
    }
    const bool xg = x_gone || at >= path.tau_minus;
    const bool yg = y_gone || at >= path.tau_plus;
    s.seg.x = xg ? -kInf : mu().quantile_log_lower(Lx);
    s.seg.y = yg ? kInf : mu().quantile_log_upper(Ly);
    s.seg.u = xg ? 0.0 : std::exp(-Lx);
    s.seg.v = yg ? 1.0 : -std::expm1(-Ly);
    s.h = s.seg.v - s.seg.u;
    s.regime = regime_now();
    return s;
  }

  void record_log() {
    while (cursor < cfg.t_grid.size() && cfg.t_grid[cursor] <= t) {
      path.snapshots.push_back(snapshot_log(cfg.t_grid[cursor]));
      ++cursor;
    }
  }

  void record_chart(double R) {
    while (cursor < cfg.t_grid.size() && cfg.t_grid[cursor] <= t) {
      DualSnapshot s;
      s.t = cfg.t_grid[cursor];
      s.seg = {cx, cy, mu().cdf(cx), mu().cdf(cy)};
      s.h = R;
      s.regime = Regime::Interior;
      path.snapshots.push_back(s);
      ++cursor;
    }
  }

  void finish_snapshots() {
    while (cursor < cfg.t_grid.size()) {
      path.snapshots.push_back(snapshot_log(cfg.t_grid[cursor]));
      ++cursor;
    }
  }

  void enter_log(double x, double y) {
    Lx = -mu().log_cdf(x);
    Ly = -mu().log_upper_tail(y);
  }

  // The chart is used only while both endpoints stay off the far tails.
  bool outside_core(double x, double y) const {
    const double core = TailProfile::switch_level();
    return -mu().log_cdf(x) > core || -mu().log_upper_tail(y) > core;
  }

  // Advances through the (R, S) chart. Returns false on timeout.
  bool run_chart(double R, double S, double half_width = 0.0) {
    ++path.chart_entries;
    const double r_exit = std::min(cfg.r_switch, 0.95);
    const double alpha = cfg.alpha;
    auto gap = [&](double x, double y) { return cdf_gap(mu(), x, y); };
    Inverted cur = invert_chart(mu(), R, S, half_width, gap);
    cx = cur.x;
    cy = cur.y;
    ChartDrift cd = chart_drift_at(mu(), cur.x, cur.y, S, R, alpha);
    while (R < r_exit) {
      if (t >= cfg.plan.t_max) return false;
      double ds = std::clamp(cfg.chart_courant * R * R, 1e-12, 1e-5);
      // Keep the midpoint move a small fraction of the segment width.
      const double width = std::max(cy - cx, 1e-12);
      if (cd.beta != 0.0) ds = std::min(ds, 0.1 * width / std::abs(cd.beta));
      if (cd.noise_var > 0.0) ds = std::min(ds, 0.01 * width * width / cd.noise_var);
      ds = std::max(ds, 1e-14);
      const double z1 = noise.normal(), z2 = noise.normal(), z3 = noise.normal();
      const double shift = z1 + R / std::sqrt(ds);
      const double R_new = std::sqrt(ds * (shift * shift + z2 * z2 + z3 * z3));
      const double R_mid = std::sqrt(0.5 * (R * R + R_new * R_new));
      const double S_half = S + 0.5 * ds * cd.beta;
      const Inverted mid = invert_chart(mu(), R_mid, S_half, cur.delta, gap);
      const ChartDrift cm = chart_drift_at(mu(), mid.x, mid.y, S_half, R_mid, alpha);
      double S_new = S + ds * cm.beta;
      if (!std::isfinite(S_new))
        throw NumericalError("ConvergenceFailure", "chart midpoint left the real line");
      if (cm.noise_var > 0.0) {
        const double z4 = noise.normal();
        const double c = cm.noise_corr;
        S_new += std::sqrt(cm.noise_var * ds) * (c * z1 + std::sqrt(1.0 - c * c) * z4);
      }
      const double R_next = std::min(R_new, 0.999);
      cur = invert_chart(mu(), R_next, S_new, mid.delta, gap);
      const ChartDrift cn = chart_drift_at(mu(), cur.x, cur.y, S_new, R_next, alpha);
      const double dt = 0.5 * ds * (1.0 / cd.gamma + 1.0 / cn.gamma);
      if (observer) observer({t, dt, kNaN, true, kNaN});
      t += dt;
      sigma += ds;
      path.clock_inverse += dt;
      ++path.steps;
      R = R_next;
      S = S_new;
      cd = cn;
      cx = cur.x;
      cy = cur.y;
      record_chart(R);
      if (R >= 0.2 * r_exit && outside_core(cx, cy)) break;
    }
    enter_log(cx, cy);
    return true;
  }

  // Endpoint passed the cap: schedule its explosion or park it.
  void settle_lower() {
    const Extended e = tail().escape_lower(Lx);
    x_gone = true;
    if (e.divergent) {
      x_parked = true;
    } else {
      path.tau_minus = t + e.value;
    }
  }
  void settle_upper() {
    const Extended e = tail().escape_upper(Ly);
    y_gone = true;
    if (e.divergent) {
      y_parked = true;
    } else {
      path.tau_plus = t + e.value;
    }
  }

  void run_log() {
    const double rho = 2.0 * cfg.alpha - 1.0;
    const double cap = TailProfile::cap();
    double Ux = U(), Wy = W();
    double rx = x_gone ? 0.0 : tail().ratio_lower(Lx);
    double ry = y_gone ? 0.0 : tail().ratio_upper(Ly);
    double hh = 1.0 - Ux - Wy;
    double gam = gamma_from(Ux * rx, Wy * ry, cfg.alpha);
    while (true) {
      if (x_gone && y_gone) {
        if (!x_parked && !y_parked) {
          path.absorbed = true;
          path.tau_star = std::max(path.tau_minus, path.tau_plus);
          path.stop_reason = StopReason::Explosion;
        }
        return;
      }
      if (t >= cfg.plan.t_max) return;
      const double core = TailProfile::switch_level();
      if (!x_gone && !y_gone && hh < 0.5 * cfg.r_switch && Lx < core && Ly < core) {
        const double x = mu().quantile_log_lower(Lx);
        const double y = mu().quantile_log_upper(Ly);
        if (x < y) {
          const bool unit = mu().model().unit_diffusion();
          const double half = 0.5 * (unit ? y - x : mu().metric(y) - mu().metric(x));
          if (!run_chart(hh, chart_midpoint(mu(), x, y), half)) return;
          Ux = U();
          Wy = W();
          rx = tail().ratio_lower(Lx);
          ry = tail().ratio_upper(Ly);
          hh = 1.0 - Ux - Wy;
          gam = gamma_from(Ux * rx, Wy * ry, cfg.alpha);
          continue;
        }
      }
      double dt = cfg.plan.dt(1.0 / (hh * hh));
      if (!x_gone) dt = std::min(dt, kTailCourant * std::max(Lx, 1.0) / std::max(rx * rx, 1e-300));
      if (!y_gone) dt = std::min(dt, kTailCourant * std::max(Ly, 1.0) / std::max(ry * ry, 1e-300));
      if (cursor < cfg.t_grid.size() && cfg.t_grid[cursor] > t)
        dt = std::min(dt, cfg.t_grid[cursor] - t);
      dt = std::min(dt, cfg.plan.t_max - t);
      const double P = Ux * rx, Q = Wy * ry;
      double nLx = Lx, nLy = Ly, zy = 0.0;
      bool ok = false;
      for (int k = 0; k <= kMaxHalvings; ++k) {
        const NoisePair z = shared_noise_pair(noise, rho);
        zy = z.b;
        const double sq = std::sqrt(2.0 * dt);
        nLx = Lx;
        nLy = Ly;
        if (!x_gone)
          nLx = Lx + (rx * rx * (1.0 + 2.0 * Ux / hh) - 2.0 * rho * rx * Q / hh) * dt -
                sq * rx * z.a;
        if (!y_gone)
          nLy = Ly + (ry * ry * (1.0 + 2.0 * Wy / hh) - 2.0 * rho * ry * P / hh) * dt +
                sq * ry * z.b;
        const double nh =
            1.0 - (x_gone ? 0.0 : std::exp(-nLx)) - (y_gone ? 0.0 : std::exp(-nLy));
        if ((x_gone || nLx > 0.0) && (y_gone || nLy > 0.0) && nh > 0.0) {
          ok = true;
          break;
        }
        ++path.rejected;
        dt *= 0.5;
      }
      if (!ok) throw NumericalError("ConvergenceFailure", "dual step rejected repeatedly");
      path.u_before = Ux;
      path.v_before = 1.0 - Wy;
      Lx = nLx;
      Ly = nLy;
      t += dt;
      ++path.steps;
      if (!x_gone && Lx >= cap) settle_lower();
      if (!y_gone && Ly >= cap) settle_upper();
      if (observer) observer({t - dt, dt, zy, false, y_gone ? kInf : Ly});
      Ux = U();
      Wy = W();
      rx = x_gone ? 0.0 : tail().ratio_lower(Lx);
      ry = y_gone ? 0.0 : tail().ratio_upper(Ly);
      hh = 1.0 - Ux - Wy;
      const double g_new = gamma_from(Ux * rx, Wy * ry, cfg.alpha);
      sigma += 0.5 * (gam + g_new) * dt;
      path.clock_inverse += dt;
      gam = g_new;
      record_log();
    }
  }
};

}  // namespace

const char* regime_name(Regime r) {
  switch (r) {
    case Regime::Interior: return "interior";
    case Regime::LeftEdge: return "left_edge";
    case Regime::RightEdge: return "right_edge";
    case Regime::Absorbed: return "absorbed";
  }
  return "?";
}

DualModel::DualModel(const CoefficientModel& model)
    : model_(model),
      measure_(std::make_unique<StationaryMeasure>(model)),
      tail_(std::make_unique<TailProfile>(*measure_)) {}

DriftSpec interior_drift(const StationaryMeasure& mu, double x, double y, double alpha) {
  if (!(x < y) || !std::isfinite(x) || !std::isfinite(y))
    throw NumericalError("DegenerateSegment", "interior drift needs finite x < y");
  const auto& m = mu.model();
  const double rho = 2.0 * alpha - 1.0;
  const double h = mu.segment_mass(x, y);
  const double Ax = root_a(m, x), Ay = root_a(m, y);
  const double P = Ax * mu.density(x), Q = Ay * mu.density(y);
  DriftSpec d;
  d.dx = m.a_prime(x) - m.b(x) + (2.0 * Ax / h) * (-P + rho * Q);
  d.dy = m.a_prime(y) - m.b(y) + (2.0 * Ay / h) * (Q - rho * P);
  d.sigma_x = std::sqrt(2.0) * Ax;
  d.sigma_y = std::sqrt(2.0) * Ay;
  d.rho = rho;
  return d;
}

double edge_drift(const StationaryMeasure& mu, double z, Regime regime) {
  const auto& m = mu.model();
  const double base = m.a_prime(z) - m.b(z);
  if (regime == Regime::LeftEdge) return base + 2.0 * m.a(z) * mu.lower_hazard(z);
  if (regime == Regime::RightEdge) return base - 2.0 * m.a(z) * mu.upper_hazard(z);
  throw NumericalError("DegenerateSegment", "edge drift needs an edge regime");
}

double gamma_alpha(const StationaryMeasure& mu, double x, double y, double alpha) {
  return gamma_from(edge_flux(mu, x), edge_flux(mu, y), alpha);
}

ChartPoint psi_map(const StationaryMeasure& mu, double x, double y) {
  if (!(x <= y) || !std::isfinite(x) || !std::isfinite(y))
    throw NumericalError("DegenerateSegment", "psi_map needs finite x <= y");
  return {mu.segment_mass(x, y), midpoint_s(mu.model(), x, y)};
}

std::pair<double, double> psi_inverse(const StationaryMeasure& mu, double R, double S) {
  const Inverted r = invert_chart(mu, R, S, 0.0,
                                  [&](double x, double y) { return mu.segment_mass(x, y); });
  return {r.x, r.y};
}

ChartDrift chart_drift(const StationaryMeasure& mu, double x, double y, double alpha) {
  return chart_drift_at(mu, x, y, chart_midpoint(mu, x, y), mu.segment_mass(x, y), alpha);
}

DualPath run_dual(const DualModel& model, const DualStart& start, const DualConfig& cfg,
                  Stream& noise, const StepObserver& observer) {
  if (!(cfg.alpha >= 0.0 && cfg.alpha < 1.0))
    throw ConfigError("alpha must lie in [0, 1)");
  Walker w(model, cfg, noise, observer);
  const auto& mu = model.measure();
  bool alive = true;
  switch (start.kind) {
    case DualStart::Kind::DiagonalAt:
      w.path.h_start = 0.0;
      alive = w.run_chart(0.0, start.x);
      break;
    case DualStart::Kind::SegmentAt: {
      if (!(start.x < start.y)) throw NumericalError("DegenerateSegment", "segment start needs x < y");
      w.enter_log(start.x, start.y);
      w.path.h_start = mu.segment_mass(start.x, start.y);
      w.record_log();
      break;
    }
    case DualStart::Kind::HalfLineLeft:
      w.x_gone = true;
      w.path.tau_minus = 0.0;
      w.Ly = -mu.log_upper_tail(start.x);
      w.path.h_start = mu.cdf(start.x);
      w.record_log();
      break;
    case DualStart::Kind::HalfLineRight:
      w.y_gone = true;
      w.path.tau_plus = 0.0;
      w.Lx = -mu.log_cdf(start.x);
      w.path.h_start = mu.upper_tail(start.x);
      w.record_log();
      break;
  }
  if (alive) w.run_log();
  if (!w.path.absorbed) w.path.stop_reason = StopReason::TimeOut;
  w.path.varsigma = w.sigma;
  w.finish_snapshots();
  return std::move(w.path);
}

DualState diagonal_start(const DualModel& model, double x0, const DualConfig& cfg,
                         Stream& noise) {
  const auto& mu = model.measure();
  DualConfig local = cfg;
  local.t_grid.clear();
  Walker w(model, local, noise, nullptr);
  DualState st;
  st.alpha = cfg.alpha;
  if (!w.run_chart(0.0, x0))
    throw NumericalError("ConvergenceFailure", "time limit reached inside the diagonal chart");
  st.seg = {w.cx, w.cy, mu.cdf(w.cx), mu.cdf(w.cy)};
  st.t = w.t;
  st.s_changed = w.sigma;
  st.regime = Regime::Interior;
  return st;
}

std::vector<DualPath> run_dual_batch(const DualModel& model, const DualStart& start,
                                     const DualConfig& cfg, std::size_t n, std::uint64_t seed,
                                     int workers) {
  std::vector<DualPath> out(n);
  parallel_for(n, workers, [&](std::size_t i) {
    Stream s = substream(seed, i);
    out[i] = run_dual(model, start, cfg, s);
  });
  return out;
}

MartingaleReport one_over_h_martingale_test(const DualModel& model, double x0, double y0,
                                            const std::vector<double>& t_grid,
                                            std::size_t n_paths, const DualConfig& cfg,
                                            std::uint64_t seed, int workers) {
  DualConfig local = cfg;
  local.t_grid = t_grid;
  const auto paths = run_dual_batch(model, DualStart::segment(x0, y0), local, n_paths, seed,
                                    workers);
  MartingaleReport rep;
  rep.t = t_grid;
  rep.target = 1.0 / model.measure().segment_mass(x0, y0);
  for (std::size_t j = 0; j < t_grid.size(); ++j) {
    double s = 0.0, s2 = 0.0;
    for (const auto& p : paths) {
      const double v = 1.0 / p.snapshots[j].h;
      s += v;
      s2 += v * v;
    }
    const double n = static_cast<double>(paths.size());
    const double mean = s / n;
    const double var = std::max(0.0, s2 / n - mean * mean);
    const double se = std::sqrt(var / std::max(n - 1.0, 1.0));
    rep.mean.push_back(mean);
    rep.se.push_back(se);
    const double dev = se > 0.0 ? std::abs(mean - rep.target) / se
                                : (std::abs(mean - rep.target) > 1e-12 ? kInf : 0.0);
    rep.max_deviation_se = std::max(rep.max_deviation_se, dev);
  }
  return rep;
}

CoupledPath coupled_comparison_run(const DualModel& model, double x0, double y0,
                                   const DualConfig& cfg, Stream& noise) {
  const auto& mu = model.measure();
  const auto& m = model.model();
  CoupledPath out;
  out.t = cfg.t_grid;
  out.u.assign(cfg.t_grid.size(), kNaN);
  out.y.assign(cfg.t_grid.size(), kNaN);
  out.checked.assign(cfg.t_grid.size(), 0);
  double u = y0;
  bool u_zero = false, u_gone = false;
  std::size_t cursor = 0;
  auto record = [&](double t_now, double Ly) {
    while (cursor < cfg.t_grid.size() && cfg.t_grid[cursor] <= t_now) {
      out.u[cursor] = u_gone ? kInf : u;
      const bool y_fin = std::isfinite(Ly);
      out.y[cursor] = y_fin ? mu.quantile_log_upper(Ly) : kInf;
      out.checked[cursor] = out.valid && !u_zero && !u_gone && y_fin;
      ++cursor;
    }
  };
  auto obs = [&](const StepEvent& e) {
    if (e.chart) {
      out.valid = false;
      return;
    }
    if (!u_gone) {
      const double drift = reflected_u_drift(mu, u);
      double next = u + drift * e.dt + std::sqrt(2.0 * m.a(u) * e.dt) * e.z_y;
      if (next <= 0.0) u_zero = true;
      next = std::abs(next);
      if (!std::isfinite(next) || next > 1e150) u_gone = true;
      u = next;
    }
    record(e.t + e.dt, e.L_y);
  };
  DualConfig local = cfg;
  const DualPath p = run_dual(model, DualStart::segment(x0, y0), local, noise, obs);
  record(kInf, kInf);
  (void)p;
  return out;
}

}  // namespace sst
