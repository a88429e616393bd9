#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "sst/errors.hpp"

namespace sst {

using ScalarField = std::function<double(double)>;

// ---------------------------------------------------------------------------
// Quadrature

struct QuadResult {
  double value = 0.0;
  double abs_error = 0.0;
  bool divergent = false;
};

/// Adaptive Gauss-Kronrod (7/15) integration. Infinite endpoints are mapped
/// onto finite ones after a truncation probe decides whether the tail is
/// integrable; a non-integrable tail is reported through `divergent`.
/// Throws NumericalError("MaxDepthExceeded") when refinement stalls.
QuadResult adaptive_quad(const ScalarField& f, double lo, double hi, double tol = 1e-10,
                         int max_intervals = 4000);

/// Same as adaptive_quad on a finite interval, never probes for divergence.
double integrate_finite(const ScalarField& f, double lo, double hi, double tol = 1e-10,
                        int max_intervals = 4000);

/// Integrates from x0 in direction dir over pieces of doubling width starting
/// at `width`, until `limit` or until pieces stop contributing. Suited to
/// integrands peaked at x0 whose mass is finite.
double sweep_integral(const ScalarField& f, double x0, int dir, double limit, double width,
                      double tol = 1e-12);

/// Single 15-point Kronrod rule on [lo, hi].
double kronrod15(const ScalarField& f, double lo, double hi);

/// Probe for a one-sided tail starting at `from` in direction `dir` (+1 or -1).
/// Returns true when the truncated integrals keep growing without geometric
/// decay of their increments.
bool tail_diverges(const ScalarField& f, double from, int dir, double tol = 1e-10);

// ---------------------------------------------------------------------------
// Gaussian special functions

double normal_pdf(double x);
double normal_cdf(double x);
/// 1 - Phi(x), accurate in the upper tail.
double normal_upper(double x);
/// Phi(y) - Phi(x) for x <= y without cancellation.
double normal_interval(double x, double y);
double normal_quantile(double p);

/// Probabilists' Hermite polynomial He_n(x).
double hermite(int n, double x);

// ---------------------------------------------------------------------------
// Sturm-Liouville eigenproblems

enum class Boundary { Dirichlet, Reflecting };

/// Weighted symmetric tridiagonal operator -d/dx(w d/dx)/w on a uniform grid,
/// assembled from the Dirichlet form sum w_{i+1/2}(f_{i+1}-f_i)^2/delta^2.
/// `diag`/`offdiag` hold the symmetrized matrix W^{-1/2} K W^{-1/2}.
struct TridiagonalOperator {
  std::vector<double> grid;  // unknown nodes
  std::vector<double> diag;
  std::vector<double> offdiag;
  std::vector<double> weight;  // lumped mass at each unknown
  Boundary left = Boundary::Dirichlet;
  Boundary right = Boundary::Dirichlet;
};

struct SturmLiouvilleProblem {
  double lo = 0.0;
  double hi = 1.0;
  ScalarField weight;
  Boundary left = Boundary::Dirichlet;
  Boundary right = Boundary::Dirichlet;
};

TridiagonalOperator discretize(const SturmLiouvilleProblem& p, int cells);

/// k-th smallest eigenvalue (k = 0 is the bottom of the spectrum).
double tridiagonal_eigenvalue(const TridiagonalOperator& op, int k = 0);

/// Eigenvalue on a single grid.
double smallest_dirichlet_eigenvalue(const TridiagonalOperator& op);

/// Richardson-extrapolated eigenvalue from grids n, 2n, 4n. Throws
/// NumericalError("ConvergenceFailure") when the two extrapolants disagree by
/// more than `agreement`.
double sturm_liouville_eigenvalue(const SturmLiouvilleProblem& p, int cells, int k = 0,
                                  double agreement = 1e-4);

// ---------------------------------------------------------------------------
// Cumulative integral table with cubic Hermite interpolation

class CumulativeIntegral {
 public:
  CumulativeIntegral() = default;
  /// Tabulates F(x) = int_{origin}^{x} f on [lo, hi] with node spacing <= step.
  CumulativeIntegral(const ScalarField& f, double origin, double lo, double hi, double step);
  double operator()(double x) const;
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  bool contains(double x) const { return x >= lo_ && x <= hi_; }

 private:
  double lo_ = 0.0, hi_ = 0.0, step_ = 1.0;
  std::vector<double> value_, deriv_;
};

// ---------------------------------------------------------------------------
// Counter-based random streams

/// Philox4x32-10 keyed by the master seed; the stream index occupies the high
/// counter words so distinct (seed, index) pairs never share a block.
class Philox4x32 {
 public:
  using result_type = std::uint32_t;
  Philox4x32(std::uint64_t seed, std::uint64_t stream);
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return 0xffffffffu; }
  result_type operator()();

 private:
  void refill();
  std::array<std::uint32_t, 4> ctr_{};
  std::array<std::uint32_t, 4> out_{};
  std::array<std::uint32_t, 2> key_{};
  int pos_ = 4;
};

class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t index) : engine_(seed, index) {}
  double normal() { return normal_(engine_); }
  /// Uniform on the open interval (0, 1).
  double uniform();
  double exponential() { return exponential_(engine_); }
  Philox4x32& engine() { return engine_; }

 private:
  Philox4x32 engine_;
  std::normal_distribution<double> normal_;
  std::exponential_distribution<double> exponential_;
};

Stream substream(std::uint64_t master_seed, std::uint64_t path_index);

/// Derives a child seed for a named sub-experiment (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt);

// ---------------------------------------------------------------------------
// Deterministic parallel map: fn(i) for i in [0, n); results are indexed, so the
// worker count never changes what is computed.

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace sst
