#include "sst/numerics.hpp"

#include <lapacke.h>

#include <algorithm>
#include <atomic>
#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <queue>
#include <thread>

namespace sst {

namespace {

constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
  double lo, hi, value, error;
  bool operator<(const Segment& o) const { return error < o.error; }
};

Segment gk15(const ScalarField& f, double lo, double hi) {
  const double c = 0.5 * (lo + hi);
  const double r = 0.5 * (hi - lo);
  const double fc = f(c);
  double k = fc * kWgk[7];
  double g = fc * kWg[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = r * kXgk[j];
    const double s = f(c - dx) + f(c + dx);
    k += kWgk[j] * s;
    if (j % 2 == 1) g += kWg[j / 2] * s;
  }
  k *= r;
  g *= r;
  return {lo, hi, k, std::abs(k - g)};
}

// Finite-interval adaptive integration; returns value and error estimate.
QuadResult adapt(const ScalarField& f, double lo, double hi, double tol, int max_intervals) {
  if (lo == hi) return {};
  double sign = 1.0;
  if (hi < lo) {
    std::swap(lo, hi);
    sign = -1.0;
  }
  std::priority_queue<Segment> heap;
  Segment first = gk15(f, lo, hi);
  double total = first.value;
  double err = first.error;
  heap.push(first);
  int count = 1;
  std::vector<Segment> frozen;
  while (!heap.empty() && err > tol * (1.0 + std::abs(total))) {
    if (!std::isfinite(total)) break;
    Segment s = heap.top();
    heap.pop();
    const double mid = 0.5 * (s.lo + s.hi);
    if (mid <= s.lo || mid >= s.hi ||
        (s.hi - s.lo) < 64.0 * std::numeric_limits<double>::epsilon() *
                            std::max(1.0, std::abs(mid))) {
      frozen.push_back(s);
      if (heap.empty()) break;
      continue;
    }
    Segment a = gk15(f, s.lo, mid);
    Segment b = gk15(f, mid, s.hi);
    total += a.value + b.value - s.value;
    err += a.error + b.error - s.error;
    heap.push(a);
    heap.push(b);
    if (++count > max_intervals) {
      // Recompute sums to shed accumulated rounding before judging the stall.
      double v = 0.0, e = 0.0;
      for (auto h = heap; !h.empty(); h.pop()) {
        v += h.top().value;
        e += h.top().error;
      }
      for (const auto& z : frozen) {
        v += z.value;
        e += z.error;
      }
      if (e > std::sqrt(tol) * (1.0 + std::abs(v)))
        throw NumericalError("MaxDepthExceeded", "adaptive quadrature failed to converge on [" +
                                                     std::to_string(lo) + ", " +
                                                     std::to_string(hi) + "]");
      return {sign * v, e, false};
    }
  }
  double v = 0.0, e = 0.0;
  for (auto h = std::move(heap); !h.empty(); h.pop()) {
    v += h.top().value;
    e += h.top().error;
  }
  for (const auto& z : frozen) {
    v += z.value;
    e += z.error;
  }
  QuadResult r{sign * v, e, false};
  if (!std::isfinite(v)) r.divergent = true;
  return r;
}

constexpr int kProbeDoublings = 5;
constexpr double kProbeStart = 20.0;
constexpr double kDecayRatio = 0.9;

// Integrates [from, from + 640] in doubling pieces; decides integrability of the tail.
struct Probe {
  double value = 0.0;
  bool divergent = false;
  double cutoff = 0.0;
};

Probe probe_tail(const ScalarField& f, double from, int dir, double tol) {
  Probe p;
  std::array<double, kProbeDoublings + 1> piece{};
  double a = 0.0;
  double b = kProbeStart;
  for (int k = 0; k <= kProbeDoublings; ++k) {
    const QuadResult q = adapt(f, from + dir * a, from + dir * b, tol, 4000);
    piece[k] = dir * q.value;
    if (q.divergent || !std::isfinite(q.value)) {
      p.divergent = true;
      return p;
    }
    a = b;
    b *= 2.0;
  }
  double total = 0.0;
  for (double v : piece) total += v;
  p.value = total;
  p.cutoff = from + dir * a;
  const double last = std::abs(piece[kProbeDoublings]);
  if (last <= tol * (1.0 + std::abs(total))) return p;
  const double r1 = std::abs(piece[kProbeDoublings - 1]) /
                    std::max(std::abs(piece[kProbeDoublings - 2]), 1e-300);
  const double r2 = last / std::max(std::abs(piece[kProbeDoublings - 1]), 1e-300);
  p.divergent = !(r1 < kDecayRatio && r2 < kDecayRatio);
  return p;
}

// Integral over [x0, +inf) (dir = +1) or (-inf, x0] (dir = -1) after the probe
// succeeded: x = x0 + dir * X s^{-4} maps s in (0, 1] onto the remaining tail.
double mapped_tail(const ScalarField& f, double x0, int dir, double tol) {
  const double scale = std::max(1.0, std::abs(x0));
  auto g = [&](double s) {
    if (s <= 0.0) return 0.0;
    const double s2 = s * s;
    const double x = x0 + dir * scale * (1.0 / (s2 * s2) - 1.0);
    const double v = f(x);
    if (v == 0.0) return 0.0;
    return v * 4.0 * scale / (s2 * s2 * s);
  };
  return adapt(g, 0.0, 1.0, tol, 4000).value;
}

QuadResult half_line(const ScalarField& f, double from, int dir, double tol) {
  Probe p = probe_tail(f, from, dir, tol);
  if (p.divergent) return {std::numeric_limits<double>::infinity(), 0.0, true};
  return {p.value + mapped_tail(f, p.cutoff, dir, tol), 0.0, false};
}

}  // namespace

double kronrod15(const ScalarField& f, double lo, double hi) { return gk15(f, lo, hi).value; }

double integrate_finite(const ScalarField& f, double lo, double hi, double tol,
                        int max_intervals) {
  return adapt(f, lo, hi, tol, max_intervals).value;
}

double sweep_integral(const ScalarField& f, double x0, int dir, double limit, double width,
                      double tol) {
  double total = 0.0;
  double pos = x0;
  int quiet = 0;
  const bool bounded = std::isfinite(limit);
  for (int k = 0; k < 400; ++k) {
    double next = pos + dir * width;
    bool last = false;
    if (bounded && (next - limit) * dir >= 0.0) {
      next = limit;
      last = true;
    }
    const double piece = integrate_finite(f, std::min(pos, next), std::max(pos, next), tol);
    total += piece;
    if (last || !std::isfinite(total)) break;
    if (std::abs(piece) <= 1e-17 * std::abs(total)) {
      if (++quiet >= 2) break;
    } else {
      quiet = 0;
    }
    pos = next;
    width *= 2.0;
  }
  return total;
}

bool tail_diverges(const ScalarField& f, double from, int dir, double tol) {
  return probe_tail(f, from, dir, tol).divergent;
}

QuadResult adaptive_quad(const ScalarField& f, double lo, double hi, double tol,
                         int max_intervals) {
  const bool lo_inf = std::isinf(lo);
  const bool hi_inf = std::isinf(hi);
  if (!lo_inf && !hi_inf) return adapt(f, lo, hi, tol, max_intervals);
  if (lo_inf && hi_inf) {
    if (lo > 0 || hi < 0) {
      QuadResult r = adaptive_quad(f, hi, lo, tol, max_intervals);
      r.value = -r.value;
      return r;
    }
    QuadResult left = half_line(f, 0.0, -1, tol);
    QuadResult right = half_line(f, 0.0, +1, tol);
    if (left.divergent || right.divergent)
      return {std::numeric_limits<double>::infinity(), 0.0, true};
    return {left.value + right.value, 0.0, false};
  }
  if (hi_inf) {
    QuadResult r = half_line(f, lo, hi > 0 ? +1 : -1, tol);
    if (hi < 0) r.value = -r.value;
    return r;
  }
  QuadResult r = half_line(f, hi, lo < 0 ? -1 : +1, tol);
  if (lo > 0) r.value = -r.value;
  return r;
}

// ---------------------------------------------------------------------------

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_upper(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

double normal_interval(double x, double y) {
  if (y <= x) return 0.0;
  if (x < 0.0 && y > 0.0)
    return 0.5 * (std::erf(y / std::numbers::sqrt2) - std::erf(x / std::numbers::sqrt2));
  const double w = y - x;
  if (w < 0.25) return kronrod15(normal_pdf, x, y);
  if (x >= 0.0) return normal_upper(x) - normal_upper(y);
  return normal_cdf(y) - normal_cdf(x);
}

double normal_quantile(double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

double hermite(int n, double x) {
  if (n <= 0) return 1.0;
  double prev = 1.0, cur = x;
  for (int k = 1; k < n; ++k) {
    const double next = x * cur - k * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

// ---------------------------------------------------------------------------

TridiagonalOperator discretize(const SturmLiouvilleProblem& p, int cells) {
  if (cells < 2 || !(p.hi > p.lo))
    throw NumericalError("InvalidGrid", "Sturm-Liouville grid needs hi > lo and >= 2 cells");
  const double delta = (p.hi - p.lo) / cells;
  const int first = p.left == Boundary::Reflecting ? 0 : 1;
  const int last = p.right == Boundary::Reflecting ? cells : cells - 1;
  TridiagonalOperator op;
  op.left = p.left;
  op.right = p.right;
  const int n = last - first + 1;
  std::vector<double> stiff_diag(n, 0.0), stiff_off(std::max(n - 1, 0), 0.0);
  op.grid.resize(n);
  op.weight.resize(n);
  for (int k = 0; k < n; ++k) {
    const int i = first + k;
    const double x = p.lo + i * delta;
    op.grid[k] = x;
    const bool boundary = (i == 0 || i == cells);
    op.weight[k] = p.weight(x) * delta * (boundary ? 0.5 : 1.0);
  }
  for (int i = 0; i < cells; ++i) {
    const double wmid = p.weight(p.lo + (i + 0.5) * delta) / delta;
    const int a = i - first;
    const int b = i + 1 - first;
    if (a >= 0 && a < n) stiff_diag[a] += wmid;
    if (b >= 0 && b < n) stiff_diag[b] += wmid;
    if (a >= 0 && b < n) stiff_off[a] = -wmid;
  }
  op.diag.resize(n);
  op.offdiag.resize(std::max(n - 1, 0));
  for (int k = 0; k < n; ++k) op.diag[k] = stiff_diag[k] / op.weight[k];
  for (int k = 0; k + 1 < n; ++k)
    op.offdiag[k] = stiff_off[k] / std::sqrt(op.weight[k] * op.weight[k + 1]);
  return op;
}

double tridiagonal_eigenvalue(const TridiagonalOperator& op, int k) {
  const lapack_int n = static_cast<lapack_int>(op.diag.size());
  if (k < 0 || k >= n) throw NumericalError("InvalidGrid", "eigenvalue index out of range");
  std::vector<double> w(n);
  std::vector<lapack_int> iblock(n), isplit(n);
  lapack_int m = 0, nsplit = 0;
  const double abstol = 2.0 * LAPACKE_dlamch('S');
  const lapack_int info = LAPACKE_dstebz('I', 'E', n, 0.0, 0.0, k + 1, k + 1, abstol,
                                         op.diag.data(), op.offdiag.data(), &m, &nsplit,
                                         w.data(), iblock.data(), isplit.data());
  if (info != 0 || m < 1) throw NumericalError("ConvergenceFailure", "dstebz failed");
  return w[0];
}

double smallest_dirichlet_eigenvalue(const TridiagonalOperator& op) {
  return tridiagonal_eigenvalue(op, 0);
}

double sturm_liouville_eigenvalue(const SturmLiouvilleProblem& p, int cells, int k,
                                  double agreement) {
  const double l1 = tridiagonal_eigenvalue(discretize(p, cells), k);
  const double l2 = tridiagonal_eigenvalue(discretize(p, 2 * cells), k);
  const double l4 = tridiagonal_eigenvalue(discretize(p, 4 * cells), k);
  const double r1 = (4.0 * l2 - l1) / 3.0;
  const double r2 = (4.0 * l4 - l2) / 3.0;
  if (std::abs(r1 - r2) > agreement * std::max(1.0, std::abs(r2)))
    throw NumericalError("ConvergenceFailure",
                         "Richardson extrapolants disagree: " + std::to_string(r1) + " vs " +
                             std::to_string(r2));
  return r2;
}

// ---------------------------------------------------------------------------

CumulativeIntegral::CumulativeIntegral(const ScalarField& f, double origin, double lo,
                                       double hi, double step)
    : lo_(lo), hi_(hi) {
  const int cells = std::max(1, static_cast<int>(std::ceil((hi - lo) / step)));
  step_ = (hi - lo) / cells;
  value_.assign(cells + 1, 0.0);
  deriv_.assign(cells + 1, 0.0);
  for (int i = 0; i <= cells; ++i) deriv_[i] = f(lo + i * step_);
  for (int i = 0; i < cells; ++i) {
    const double a = lo + i * step_;
    value_[i + 1] = value_[i] + kronrod15(f, a, a + 0.5 * step_) +
                    kronrod15(f, a + 0.5 * step_, a + step_);
  }
  double shift = 0.0;
  if (origin >= lo && origin <= hi) {
    const int k = std::min(cells - 1, static_cast<int>((origin - lo) / step_));
    shift = value_[k] + kronrod15(f, lo + k * step_, origin);
  } else {
    shift = value_[0] + integrate_finite(f, lo, origin);
  }
  for (double& v : value_) v -= shift;
}

double CumulativeIntegral::operator()(double x) const {
  const int cells = static_cast<int>(value_.size()) - 1;
  double s = (x - lo_) / step_;
  int i = static_cast<int>(std::floor(s));
  i = std::clamp(i, 0, cells - 1);
  const double t = s - i;
  const double h00 = (1 + 2 * t) * (1 - t) * (1 - t);
  const double h10 = t * (1 - t) * (1 - t);
  const double h01 = t * t * (3 - 2 * t);
  const double h11 = t * t * (t - 1);
  return h00 * value_[i] + h10 * step_ * deriv_[i] + h01 * value_[i + 1] +
         h11 * step_ * deriv_[i + 1];
}

// ---------------------------------------------------------------------------

namespace {
constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}
}  // namespace

Philox4x32::Philox4x32(std::uint64_t seed, std::uint64_t stream) {
  key_ = {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  ctr_ = {0u, 0u, static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
}

void Philox4x32::refill() {
  std::array<std::uint32_t, 4> c = ctr_;
  std::array<std::uint32_t, 2> k = key_;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * c[2];
    c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
         static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
    k[0] += kPhiloxW0;
    k[1] += kPhiloxW1;
  }
  out_ = c;
  if (++ctr_[0] == 0) ++ctr_[1];
  pos_ = 0;
}

Philox4x32::result_type Philox4x32::operator()() {
  if (pos_ >= 4) refill();
  return out_[pos_++];
}

double Stream::uniform() {
  const std::uint64_t a = engine_() >> 5;
  const std::uint64_t b = engine_() >> 6;
  return (static_cast<double>(a) * 67108864.0 + static_cast<double>(b) + 0.5) /
         9007199254740992.0;
}

Stream substream(std::uint64_t master_seed, std::uint64_t path_index) {
  return Stream(master_seed, path_index);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  return splitmix64(seed ^ splitmix64(salt));
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  const int count = static_cast<int>(std::min<std::size_t>(workers, n));
  std::vector<std::thread> pool;
  pool.reserve(count);
  for (int w = 0; w < count; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace sst
