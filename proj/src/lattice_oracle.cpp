#include "sst/lattice_oracle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <tuple>

#include <unsupported/Eigen/MatrixFunctions>

#include "sst/errors.hpp"

namespace sst {

namespace {
using Triplets = std::vector<Eigen::Triplet<double>>;

// Rates (left, right) of a nearest-neighbour walk with variance 2*var and
// drift `drift`; central when nonnegative, upwind otherwise.
std::pair<double, double> split_rates(double var, double drift, double delta, bool& upwind) {
  if (var > 0.0) {
    const double l = var / (delta * delta) - drift / (2.0 * delta);
    const double r = var / (delta * delta) + drift / (2.0 * delta);
    if (l >= 0.0 && r >= 0.0) return {l, r};
    upwind = true;
  }
  return {var / (delta * delta) + std::max(-drift, 0.0) / delta,
          var / (delta * delta) + std::max(drift, 0.0) / delta};
}

std::vector<double> prefix_sums(const std::vector<double>& w) {
  std::vector<double> c(w.size() + 1, 0.0);
  for (std::size_t k = 0; k < w.size(); ++k) c[k + 1] = c[k] + w[k];
  return c;
}

// Sums over [a, b] from whichever end keeps the cancellation small.
class RangeSum {
 public:
  explicit RangeSum(const std::vector<double>& w) : pre_(prefix_sums(w)), suf_(w.size() + 1, 0.0) {
    for (std::size_t k = w.size(); k-- > 0;) suf_[k] = suf_[k + 1] + w[k];
  }
  double operator()(int a, int b) const {
    if (pre_[b + 1] <= suf_[a]) return pre_[b + 1] - pre_[a];
    return suf_[a] - suf_[b + 1];
  }

 private:
  std::vector<double> pre_, suf_;
};

// Poisson(lam) weights on [first, first + size) from the mode outward,
// normalized over the window; the neglected tails are below 1e-13.
std::vector<double> poisson_window(double lam, int& first) {
  const int mode = static_cast<int>(std::floor(lam));
  const int reach = static_cast<int>(std::ceil(8.5 * std::sqrt(lam) + 30.0));
  first = std::max(0, mode - reach);
  const int last = mode + reach;
  std::vector<double> w(last - first + 1, 0.0);
  w[mode - first] = 1.0;
  for (int m = mode; m < last; ++m) w[m + 1 - first] = w[m - first] * lam / (m + 1);
  for (int m = mode; m > first; --m) w[m - 1 - first] = w[m - first] * m / lam;
  double total = 0.0;
  for (double v : w) total += v;
  for (double& v : w) v /= total;
  return w;
}

template <class Step>
Eigen::VectorXd uniformize(double rate, double t, const Eigen::VectorXd& v, Step step) {
  const double lam = rate * t;
  if (lam <= 0.0) return v;
  int first = 0;
  const std::vector<double> w = poisson_window(lam, first);
  const int last = first + static_cast<int>(w.size()) - 1;
  Eigen::VectorXd term = v;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(v.size());
  for (int m = 0; m <= last; ++m) {
    if (m >= first) out += w[m - first] * term;
    if (m < last) term = step(term);
  }
  return out;
}
}  // namespace

SparseRows GridChain::generator() const {
  const int n = static_cast<int>(size());
  Triplets tr;
  for (int k = 0; k < n; ++k) {
    if (k + 1 < n) tr.emplace_back(k, k + 1, up[k]);
    if (k > 0) tr.emplace_back(k, k - 1, down[k]);
    tr.emplace_back(k, k, -(k + 1 < n ? up[k] : 0.0) - (k > 0 ? down[k] : 0.0));
  }
  SparseRows q(n, n);
  q.setFromTriplets(tr.begin(), tr.end());
  return q;
}

Eigen::MatrixXd GridChain::dense_generator() const { return Eigen::MatrixXd(generator()); }

double GridChain::max_rate() const {
  double r = 0.0;
  for (std::size_t k = 0; k < size(); ++k) r = std::max(r, up[k] + down[k]);
  return r;
}

GridChain discretize_L(const CoefficientModel& model, const std::vector<double>& sites) {
  const int n = static_cast<int>(sites.size());
  if (n < 3) throw NumericalError("InvalidGrid", "need at least three sites");
  const double delta = (sites.back() - sites.front()) / (n - 1);
  for (int k = 1; k < n; ++k) {
    if (std::abs(sites[k] - sites[k - 1] - delta) > 1e-9 * std::max(1.0, std::abs(delta)))
      throw NumericalError("InvalidGrid", "sites must be uniformly spaced");
  }
  if (!(delta > 0.0)) throw NumericalError("InvalidGrid", "sites must increase");
  GridChain g;
  g.sites = sites;
  g.delta = delta;
  g.up.assign(n, 0.0);
  g.down.assign(n, 0.0);
  for (double x : sites) {
    g.a.push_back(model.a(x));
    g.a_prime.push_back(model.a_prime(x));
    g.b.push_back(model.b(x));
  }
  auto fill = [&](bool upwind) {
    bool ok = true;
    for (int k = 0; k < n; ++k) {
      const double a = g.a[k], b = g.b[k];
      const double base = a / (delta * delta);
      double u, d;
      if (upwind) {
        u = base + std::max(b, 0.0) / delta;
        d = base + std::max(-b, 0.0) / delta;
      } else {
        u = base + b / (2.0 * delta);
        d = base - b / (2.0 * delta);
      }
      g.up[k] = k + 1 < n ? u : 0.0;
      g.down[k] = k > 0 ? d : 0.0;
      if ((k + 1 < n && u <= 0.0) || (k > 0 && d <= 0.0)) ok = false;
    }
    return ok;
  };
  if (!fill(false)) {
    g.scheme = RateScheme::Upwind;
    fill(true);
  }
  std::vector<double> logpi(n, 0.0);
  for (int k = 0; k + 1 < n; ++k) logpi[k + 1] = logpi[k] + std::log(g.up[k]) - std::log(g.down[k + 1]);
  const double top = *std::max_element(logpi.begin(), logpi.end());
  double total = 0.0;
  g.pi.resize(n);
  for (int k = 0; k < n; ++k) total += (g.pi[k] = std::exp(logpi[k] - top));
  for (auto& p : g.pi) p /= total;
  return g;
}

GridChain discretize_L(const CoefficientModel& model, int n, double lo, double hi) {
  if (n < 3 || !(hi > lo)) throw NumericalError("InvalidGrid", "need n >= 3 and lo < hi");
  std::vector<double> sites(n);
  for (int k = 0; k < n; ++k) sites[k] = lo + (hi - lo) * k / (n - 1);
  sites.back() = hi;
  return discretize_L(model, sites);
}

// ---------------------------------------------------------------------------

int IntervalDual::index(int i, int j) const {
  // Keys (i + 1, j) with i in [-1, n - 1], j in [0, n].
  for (std::size_t s = 0; s < states.size(); ++s)
    if (states[s].i == i && states[s].j == j) return static_cast<int>(s);
  return -1;
}

std::pair<int, int> IntervalDual::support(int s) const {
  const auto& st = states[s];
  return {std::max(st.i, 0), std::min(st.j, n_sites - 1)};
}

Eigen::MatrixXd IntervalDual::link(const GridChain& g) const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(states.size(), n_sites);
  for (std::size_t s = 0; s < states.size(); ++s) {
    const auto [a, b] = support(static_cast<int>(s));
    double mass = 0.0;
    for (int k = a; k <= b; ++k) mass += g.pi[k];
    for (int k = a; k <= b; ++k) m(s, k) = g.pi[k] / mass;
  }
  return m;
}

double IntervalDual::max_rate() const {
  double r = 0.0;
  for (int s = 0; s < gen.rows(); ++s)
    for (SparseRows::InnerIterator it(gen, s); it; ++it)
      if (it.col() == s) r = std::max(r, -it.value());
  return r;
}

IntervalDual discretize_Lstar(const GridChain& g, DualScheme scheme) {
  const int n = static_cast<int>(g.size());
  IntervalDual d;
  d.scheme = scheme;
  d.n_sites = n;
  const RangeSum range(g.pi);
  auto mass = [&](int i, int j) { return range(std::max(i, 0), std::min(j, n - 1)); };

  // Dense key table for (i, j) in [-1, n - 1] x [0, n].
  std::vector<int> key((n + 1) * (n + 1), -1);
  auto slot = [&](int i, int j) -> int& { return key[(i + 1) * (n + 1) + j]; };
  auto add_state = [&](int i, int j) {
    slot(i, j) = static_cast<int>(d.states.size());
    d.states.push_back({i, j});
  };
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) add_state(i, j);
  if (scheme == DualScheme::Mirror) {
    for (int j = 0; j < n; ++j) add_state(-1, j);
    for (int i = 0; i < n; ++i) add_state(i, n);
    add_state(-1, n);
    d.absorbing = slot(-1, n);
  } else {
    d.absorbing = slot(0, n - 1);
  }

  Triplets tr;
  auto add_move = [&](int from, int i, int j, double rate) {
    if (rate <= 0.0) return;
    if (i > j || j < 0 || i >= n) return;
    const int to = slot(i, j);
    if (to < 0) throw InvariantViolation("dual move leaves the state space");
    tr.emplace_back(from, to, rate);
    tr.emplace_back(from, from, -rate);
  };

  if (scheme == DualScheme::Sharp) {
    const auto& add = add_move;
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) {
        const int s = slot(i, j);
        const double h = mass(i, j);
        if (i > 0) add(s, i - 1, j, g.up[i - 1] * mass(i - 1, j) / h);
        if (i < j) add(s, i + 1, j, g.down[i] * mass(i + 1, j) / h);
        if (j + 1 < n) add(s, i, j + 1, g.down[j + 1] * mass(i, j + 1) / h);
        if (i < j) add(s, i, j - 1, g.up[j] * mass(i, j - 1) / h);
      }
    }
  } else {
    // Moves out of the current state; singleton targets are replaced by
    // non-singleton moves carrying the same first two link moments.
    struct Move {
      int i, j;
      double rate;
    };
    std::vector<Move> pending;
    auto up_end = [&](int j) { return j + 1 >= n ? n : j + 1; };
    auto add = [&](int, int i, int j, double rate) {
      if (rate > 0.0 && i <= j && j >= 0 && i < n) pending.push_back({i, j, rate});
    };
    auto moments = [&](int i, int j, double centre) {
      const int lo = std::max(i, 0), hi = std::min(j, n - 1);
      double m1 = 0.0, m2 = 0.0, w = 0.0;
      for (int k = lo; k <= hi; ++k) {
        const double u = g.sites[k] - centre;
        m1 += g.pi[k] * u;
        m2 += g.pi[k] * u * u;
        w += g.pi[k];
      }
      return std::array<double, 2>{m1 / w, m2 / w};
    };
    auto flush = [&](int s) {
      const int i = d.states[s].i, j = d.states[s].j;
      const double centre = moments(i, j, 0.0)[0];
      const auto own = moments(i, j, centre);
      auto shift = [&](int ti, int tj) {
        const auto m = moments(ti, tj, centre);
        return std::array<double, 2>{m[0] - own[0], m[1] - own[1]};
      };
      std::array<double, 2> need{0.0, 0.0};
      std::vector<Move> kept, singles;
      for (const Move& mv : pending) {
        if (mv.i == mv.j) {
          const auto dm = shift(mv.i, mv.j);
          need[0] += mv.rate * dm[0];
          need[1] += mv.rate * dm[1];
          singles.push_back(mv);
        } else {
          kept.push_back(mv);
        }
      }
      pending.clear();
      if (need[0] != 0.0 || need[1] != 0.0) {
        auto rate_to = [&](int ti, int tj) {
          double r = 0.0;
          for (const Move& mv : kept)
            if (mv.i == ti && mv.j == tj) r += mv.rate;
          return r;
        };
        auto usable = [&](int ti, int tj) {
          return ti >= -1 && ti < tj && tj <= n && slot(ti, tj) >= 0 && slot(ti, tj) != s;
        };
        const int jr = up_end(j);
        const std::array<std::array<int, 4>, 3> pairs{{{i - 1, jr, i + 1, jr},
                                                        {i - 1, jr, i - 1, j - 1},
                                                        {i - 1, j, i, jr}}};
        bool placed = false;
        for (const auto& p : pairs) {
          if (!usable(p[0], p[1]) || !usable(p[2], p[3])) continue;
          const auto u = shift(p[0], p[1]), v = shift(p[2], p[3]);
          const double det = u[0] * v[1] - u[1] * v[0];
          if (std::abs(det) < 1e-300) continue;
          const double wu = (need[0] * v[1] - need[1] * v[0]) / det;
          const double wv = (u[0] * need[1] - u[1] * need[0]) / det;
          const double tol = 1e-9 * (std::abs(wu) + std::abs(wv));
          if (wu < -rate_to(p[0], p[1]) - tol || wv < -rate_to(p[2], p[3]) - tol) continue;
          kept.push_back({p[0], p[1], wu});
          kept.push_back({p[2], p[3], wv});
          placed = true;
          break;
        }
        if (!placed) kept.insert(kept.end(), singles.begin(), singles.end());
      }
      // Merge duplicates so negative corrections net against existing moves.
      std::sort(kept.begin(), kept.end(),
                [](const Move& x, const Move& y) { return std::tie(x.i, x.j) < std::tie(y.i, y.j); });
      for (std::size_t k = 0; k < kept.size();) {
        double r = 0.0;
        std::size_t e = k;
        for (; e < kept.size() && kept[e].i == kept[k].i && kept[e].j == kept[k].j; ++e) r += kept[e].rate;
        add_move(s, kept[k].i, kept[k].j, r);
        k = e;
      }
    };
    const double dl = g.delta;
    const auto& a = g.a;
    std::vector<double> A(n), base(n);
    for (int k = 0; k < n; ++k) {
      A[k] = std::sqrt(a[k]);
      base[k] = g.a_prime[k] - g.b[k];
    }
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) {
        const int s = slot(i, j);
        const double h = mass(i, j);
        const double P = A[i] * g.pi[i] / dl, Q = A[j] * g.pi[j] / dl;
        const double Rx = 2.0 * A[i] * (P + Q) / h, Ry = 2.0 * A[j] * (P + Q) / h;
        const double Rc = std::min(Rx, Ry);
        const double omega = std::sqrt(a[i] * a[j]) / (dl * dl);
        const int m = j - i + 1;
        double e = omega + Rc / (2.0 * dl), c = omega - Rc / (2.0 * dl);
        if (m <= 2) {
          c = 0.0;
        } else if (c < 0.0) {
          e = omega + Rc / dl;
          c = omega;
          d.upwind_used = true;
        }
        add(s, i - 1, up_end(j), e);
        if (m > 2) add(s, i + 1, j - 1, c);
        // The shared part of the base drifts moves both endpoints together.
        const double gx = base[i], gy = base[j];
        const double G = gx * gy > 0.0 ? std::copysign(std::min(std::abs(gx), std::abs(gy)), gx) : 0.0;
        if (G > 0.0) add(s, i + 1, up_end(j), G / dl);
        if (G < 0.0) add(s, i - 1, j - 1, -G / dl);
        const double vx = std::max(0.0, a[i] - std::sqrt(a[i] * a[j]));
        const double vy = std::max(0.0, a[j] - std::sqrt(a[i] * a[j]));
        bool uw = false;
        const auto [xl, xr] = split_rates(vx, gx - G - (Rx - Rc), dl, uw);
        const auto [yl, yr] = split_rates(vy, gy - G + (Ry - Rc), dl, uw);
        d.upwind_used = d.upwind_used || uw;
        add(s, i - 1, j, xl);
        if (i < j) add(s, i + 1, j, xr);
        if (i < j) add(s, i, j - 1, yl);
        add(s, i, up_end(j), yr);
        flush(s);
      }
    }
    for (int j = 0; j < n; ++j) {
      const int s = slot(-1, j);
      const double h = mass(0, j);
      const double D = base[j] + 2.0 * A[j] * (A[j] * g.pi[j] / dl) / h;
      bool uw = false;
      const auto [l, r] = split_rates(a[j], D, dl, uw);
      d.upwind_used = d.upwind_used || uw;
      if (j > 0) add(s, -1, j - 1, l);
      add(s, -1, up_end(j), r);
      flush(s);
    }
    for (int i = 0; i < n; ++i) {
      const int s = slot(i, n);
      const double h = mass(i, n - 1);
      const double D = base[i] - 2.0 * A[i] * (A[i] * g.pi[i] / dl) / h;
      bool uw = false;
      const auto [l, r] = split_rates(a[i], D, dl, uw);
      d.upwind_used = d.upwind_used || uw;
      add(s, i - 1, n, l);
      if (i + 1 < n) add(s, i + 1, n, r);
      flush(s);
    }
  }
  d.gen.resize(static_cast<Eigen::Index>(d.states.size()), static_cast<Eigen::Index>(d.states.size()));
  d.gen.setFromTriplets(tr.begin(), tr.end());
  d.gen.makeCompressed();
  return d;
}

// ---------------------------------------------------------------------------

std::vector<ScalarField> smooth_probes() {
  return {[](double x) { return std::tanh(x); }, [](double x) { return std::exp(-0.5 * x * x); },
          [](double x) { return std::sin(x) * std::exp(-0.125 * x * x); }};
}

namespace {
std::vector<Eigen::VectorXd> sample_probes(const GridChain& g, const ResidualOptions& opt) {
  std::vector<Eigen::VectorXd> out;
  const auto tests = opt.tests.empty() ? smooth_probes() : opt.tests;
  for (const auto& f : tests) {
    Eigen::VectorXd v(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) v[k] = f(g.sites[k]);
    out.push_back(v);
  }
  return out;
}

// (link v)(s) for every dual state.
Eigen::VectorXd link_apply(const GridChain& g, const IntervalDual& d, const Eigen::VectorXd& v) {
  std::vector<double> w(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) w[k] = g.pi[k] * v[k];
  const RangeSum wsum(w), mass(g.pi);
  Eigen::VectorXd out(d.states.size());
  for (int s = 0; s < static_cast<int>(d.states.size()); ++s) {
    const auto [a, b] = d.support(s);
    out[s] = wsum(a, b) / mass(a, b);
  }
  return out;
}

bool skipped_row(const IntervalDual& d, int s, const ResidualOptions& opt) {
  if (s == d.absorbing) return true;
  const auto [a, b] = d.support(s);
  return opt.skip_boundary_rows && (a == 0 || b == d.n_sites - 1);
}
}  // namespace

double intertwining_residual(const GridChain& g, const IntervalDual& d,
                             const ResidualOptions& opt) {
  const int n = static_cast<int>(g.size());
  if (opt.norm == ResidualNorm::TestFunctions) {
    const SparseRows q = g.generator();
    double worst = 0.0;
    for (const auto& f : sample_probes(g, opt)) {
      const Eigen::VectorXd qf = q * f;
      const Eigen::VectorXd lhs = link_apply(g, d, qf);
      const Eigen::VectorXd rhs = d.gen * link_apply(g, d, f);
      for (int s = 0; s < lhs.size(); ++s)
        if (!skipped_row(d, s, opt)) worst = std::max(worst, std::abs(lhs[s] - rhs[s]));
    }
    return worst;
  }
  const RangeSum mass(g.pi);
  double worst = 0.0;
  std::vector<double> lhs, rhs;
  for (int s = 0; s < static_cast<int>(d.states.size()); ++s) {
    if (s == d.absorbing) continue;
    const auto [a, b] = d.support(s);
    if (opt.skip_boundary_rows && (a == 0 || b == n - 1)) continue;
    const int lo = std::max(a - 1, 0), hi = std::min(b + 1, n - 1);
    const int w = hi - lo + 1;
    lhs.assign(w, 0.0);
    rhs.assign(w, 0.0);
    const double h = mass(a, b);
    for (int l = a; l <= b; ++l) {
      const double wl = g.pi[l] / h;
      const double up = l + 1 < n ? g.up[l] : 0.0;
      const double dn = l > 0 ? g.down[l] : 0.0;
      lhs[l - lo] -= wl * (up + dn);
      if (l + 1 < n) lhs[l + 1 - lo] += wl * up;
      if (l > 0) lhs[l - 1 - lo] += wl * dn;
    }
    for (SparseRows::InnerIterator it(d.gen, s); it; ++it) {
      const auto [ja, jb] = d.support(static_cast<int>(it.col()));
      const double hj = mass(ja, jb);
      for (int k = ja; k <= jb; ++k) {
        if (k < lo || k > hi) throw InvariantViolation("dual move jumps more than one site");
        rhs[k - lo] += it.value() * g.pi[k] / hj;
      }
    }
    for (int k = 0; k < w; ++k) worst = std::max(worst, std::abs(lhs[k] - rhs[k]));
  }
  return worst;
}

Eigen::VectorXd uniformized_apply(const SparseRows& q, double rate, double t,
                                  const Eigen::VectorXd& v) {
  const double lam = std::max(rate, 1e-300);
  return uniformize(lam, t, v, [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd y = q * x;
    return Eigen::VectorXd(x + y / lam);
  });
}

Eigen::VectorXd uniformized_propagate(const SparseRows& q, double rate, double t,
                                      const Eigen::VectorXd& m) {
  const double lam = std::max(rate, 1e-300);
  const SparseRows qt = q.transpose();
  return uniformize(lam, t, m, [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd y = qt * x;
    return Eigen::VectorXd(x + y / lam);
  });
}

double semigroup_residual(const GridChain& g, const IntervalDual& d, double t,
                          const std::vector<int>& columns, const ResidualOptions& opt) {
  const int n = static_cast<int>(g.size());
  const SparseRows q = g.generator();
  if (opt.norm == ResidualNorm::TestFunctions) {
    double worst = 0.0;
    for (const auto& f : sample_probes(g, opt)) {
      const Eigen::VectorXd lhs = link_apply(g, d, uniformized_apply(q, g.max_rate(), t, f));
      const Eigen::VectorXd rhs = uniformized_apply(d.gen, d.max_rate(), t, link_apply(g, d, f));
      for (int s = 0; s < lhs.size(); ++s)
        if (!skipped_row(d, s, opt)) worst = std::max(worst, std::abs(lhs[s] - rhs[s]));
    }
    return worst;
  }
  std::vector<int> cols = columns;
  if (cols.empty())
    for (int k = 0; k < n; ++k) cols.push_back(k);
  const double rate_x = g.max_rate();
  const double rate_d = d.max_rate();
  const RangeSum mass(g.pi);
  double worst = 0.0;
  const int S = static_cast<int>(d.states.size());
  for (int k : cols) {
    Eigen::VectorXd ek = Eigen::VectorXd::Zero(n);
    ek[k] = 1.0;
    const Eigen::VectorXd gk = uniformized_apply(q, rate_x, t, ek);
    std::vector<double> w(n);
    for (int l = 0; l < n; ++l) w[l] = g.pi[l] * gk[l];
    const RangeSum wsum(w);
    Eigen::VectorXd phi(S);
    for (int s = 0; s < S; ++s) {
      const auto [a, b] = d.support(s);
      phi[s] = (k >= a && k <= b) ? g.pi[k] / mass(a, b) : 0.0;
    }
    const Eigen::VectorXd psi = uniformized_apply(d.gen, rate_d, t, phi);
    for (int s = 0; s < S; ++s) {
      if (s == d.absorbing) continue;
      const auto [a, b] = d.support(s);
      if (opt.skip_boundary_rows && (a == 0 || b == n - 1)) continue;
      const double lhs = wsum(a, b) / mass(a, b);
      worst = std::max(worst, std::abs(lhs - psi[s]));
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------

CouplingReport df_coupling_check(const GridChain& g, const IntervalDual& d, double dt, int steps,
                                 const Eigen::VectorXd& start_law) {
  const int n = static_cast<int>(g.size());
  const int S = static_cast<int>(d.states.size());
  if (start_law.size() != S) throw ConfigError("start law must live on the dual states");
  const Eigen::MatrixXd P = (dt * g.dense_generator()).exp();
  const Eigen::MatrixXd Ps = (dt * Eigen::MatrixXd(d.gen)).exp();
  const Eigen::MatrixXd L = d.link(g);
  const Eigen::MatrixXd Delta = L * P;
  CouplingReport rep;
  rep.steps = steps;

  // kernel(z, x, z2, x2) = P(x, x2) Ps(z, z2) L(z2, x2) / Delta(z, x2)
  auto ratio = [&](int z, int z2, int x2) {
    if (L(z2, x2) == 0.0) return 0.0;
    if (!(Delta(z, x2) > 0.0)) {
      rep.zero_denominator = true;
      return 0.0;
    }
    return Ps(z, z2) * L(z2, x2) / Delta(z, x2);
  };
  const Eigen::VectorXd m0 = L.transpose() * start_law;

  // X path law: carry joint weights over the current dual state.
  std::function<void(int, int, const Eigen::VectorXd&, double)> walk_x =
      [&](int depth, int x, const Eigen::VectorXd& wz, double chain_law) {
        rep.x_marginal = std::max(rep.x_marginal, std::abs(wz.sum() - chain_law));
        if (depth == steps) return;
        for (int x2 = 0; x2 < n; ++x2) {
          Eigen::VectorXd next = Eigen::VectorXd::Zero(S);
          for (int z = 0; z < S; ++z) {
            if (wz[z] == 0.0) continue;
            for (int z2 = 0; z2 < S; ++z2) next[z2] += wz[z] * P(x, x2) * ratio(z, z2, x2);
          }
          walk_x(depth + 1, x2, next, chain_law * P(x, x2));
        }
      };
  for (int x0 = 0; x0 < n; ++x0) {
    Eigen::VectorXd wz(S);
    for (int z = 0; z < S; ++z) wz[z] = start_law[z] * L(z, x0);
    walk_x(0, x0, wz, m0[x0]);
  }

  // Dual path law and the conditional law of X given the dual history.
  std::function<void(int, int, const Eigen::VectorXd&, double)> walk_z =
      [&](int depth, int z, const Eigen::VectorXd& wx, double chain_law) {
        const double total = wx.sum();
        rep.dual_marginal = std::max(rep.dual_marginal, std::abs(total - chain_law));
        if (total > 1e-300) {
          for (int x = 0; x < n; ++x)
            rep.conditional = std::max(rep.conditional, std::abs(wx[x] / total - L(z, x)));
        }
        if (depth == steps || total == 0.0) return;
        for (int z2 = 0; z2 < S; ++z2) {
          if (Ps(z, z2) == 0.0) continue;
          Eigen::VectorXd next = Eigen::VectorXd::Zero(n);
          for (int x = 0; x < n; ++x) {
            if (wx[x] == 0.0) continue;
            for (int x2 = 0; x2 < n; ++x2) next[x2] += wx[x] * P(x, x2) * ratio(z, z2, x2);
          }
          walk_z(depth + 1, z2, next, chain_law * Ps(z, z2));
        }
      };
  for (int z0 = 0; z0 < S; ++z0) {
    if (start_law[z0] == 0.0) continue;
    Eigen::VectorXd wx(n);
    for (int x = 0; x < n; ++x) wx[x] = start_law[z0] * L(z0, x);
    walk_z(0, z0, wx, start_law[z0]);
  }
  return rep;
}

SeparationCurves exact_separation_vs_absorption(const GridChain& g, int last,
                                                const std::vector<double>& t_grid) {
  const int n = static_cast<int>(g.size());
  if (last < 0 || last >= n - 1) throw ConfigError("half-line end must be an inner site");
  const auto cum = prefix_sums(g.pi);
  // Half-line dual on states [0, j].
  Triplets tr;
  for (int j = 0; j + 1 < n; ++j) {
    const double h = cum[j + 1];
    const double grow = g.down[j + 1] * cum[j + 2] / h;
    const double shrink = j > 0 ? g.up[j] * cum[j] / h : 0.0;
    tr.emplace_back(j, j + 1, grow);
    tr.emplace_back(j, j, -grow - shrink);
    if (j > 0) tr.emplace_back(j, j - 1, shrink);
  }
  SparseRows qd(n, n);
  qd.setFromTriplets(tr.begin(), tr.end());
  double rate_d = 0.0;
  for (int j = 0; j < n; ++j) rate_d = std::max(rate_d, -qd.coeff(j, j));
  const SparseRows q = g.generator();
  const double rate_x = g.max_rate();

  Eigen::VectorXd nu = Eigen::VectorXd::Zero(n);
  for (int k = 0; k <= last; ++k) nu[k] = g.pi[k] / cum[last + 1];
  Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
  z[last] = 1.0;

  SeparationCurves out;
  double t_prev = 0.0;
  for (double t : t_grid) {
    if (t < t_prev) throw ConfigError("time grid must be sorted");
    if (t > t_prev) {
      nu = uniformized_propagate(q, rate_x, t - t_prev, nu);
      z = uniformized_propagate(qd, rate_d, t - t_prev, z);
      t_prev = t;
    }
    double min_ratio = 1e300;
    for (int k = 0; k < n; ++k) min_ratio = std::min(min_ratio, nu[k] / g.pi[k]);
    const double sep = 1.0 - min_ratio;
    const double surv = 1.0 - z[n - 1];
    out.t.push_back(t);
    out.separation.push_back(sep);
    out.survival.push_back(surv);
    out.max_gap = std::max(out.max_gap, std::abs(sep - surv));
  }
  return out;
}

}  // namespace sst
