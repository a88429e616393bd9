#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "sst/diffusion_model.hpp"

namespace sst {

using SparseRows = Eigen::SparseMatrix<double, Eigen::RowMajor>;

enum class RateScheme { Central, Upwind };

/// Reflected birth-death chain on a uniform grid.
struct GridChain {
  std::vector<double> sites;
  std::vector<double> up;    // Q(i, i+1)
  std::vector<double> down;  // Q(i, i-1)
  std::vector<double> pi;
  std::vector<double> a, a_prime, b;  // coefficients at the sites
  double delta = 0.0;
  RateScheme scheme = RateScheme::Central;

  std::size_t size() const { return sites.size(); }
  SparseRows generator() const;
  Eigen::MatrixXd dense_generator() const;
  double max_rate() const;
};

GridChain discretize_L(const CoefficientModel& model, int n, double lo, double hi);
/// Sites must be uniformly spaced (InvalidGrid otherwise).
GridChain discretize_L(const CoefficientModel& model, const std::vector<double>& sites);

/// Sharp: exact single-endpoint dual of the chain (intertwines to rounding).
/// Mirror: the alpha = 0 dual discretized with joint endpoint moves, edge
/// states past the grid ends and an absorbing full state.
enum class DualScheme { Sharp, Mirror };

struct IntervalState {
  int i = 0;  // -1 for -infinity
  int j = 0;  // n for +infinity
};

struct IntervalDual {
  DualScheme scheme = DualScheme::Sharp;
  std::vector<IntervalState> states;
  SparseRows gen;
  int absorbing = -1;
  bool upwind_used = false;
  int n_sites = 0;

  int index(int i, int j) const;
  /// Site range [first, last] carrying the link row of a state.
  std::pair<int, int> support(int s) const;
  /// Dense link matrix; intended for small chains.
  Eigen::MatrixXd link(const GridChain& g) const;
  double max_rate() const;
};

IntervalDual discretize_Lstar(const GridChain& g, DualScheme scheme);

enum class ResidualNorm {
  Entrywise,      // largest matrix entry
  TestFunctions,  // largest entry of the residual applied to `tests`
};

struct ResidualOptions {
  /// Rows whose support touches the first or last site are skipped.
  bool skip_boundary_rows = false;
  ResidualNorm norm = ResidualNorm::Entrywise;
  std::vector<ScalarField> tests;
};

/// Smooth bounded probes: tanh(x), exp(-x^2/2), sin(x) exp(-x^2/8).
std::vector<ScalarField> smooth_probes();

/// Max-norm of link*Q - Q_star*link over non-absorbing rows.
double intertwining_residual(const GridChain& g, const IntervalDual& d,
                             const ResidualOptions& opt = {});

/// e^{tQ} v by uniformization, truncated at Poisson tail 1e-12.
Eigen::VectorXd uniformized_apply(const SparseRows& q, double rate, double t,
                                  const Eigen::VectorXd& v);
/// Row vector m e^{tQ}.
Eigen::VectorXd uniformized_propagate(const SparseRows& q, double rate, double t,
                                      const Eigen::VectorXd& m);

/// Max-norm of link e^{tQ} - e^{tQ*} link over the given site columns (all
/// columns when empty) and non-absorbing rows.
double semigroup_residual(const GridChain& g, const IntervalDual& d, double t,
                          const std::vector<int>& columns = {},
                          const ResidualOptions& opt = {});

struct CouplingReport {
  double x_marginal = 0.0;      // deviation of the X path law from the P-chain
  double dual_marginal = 0.0;   // deviation of the dual path law from the P*-chain
  double conditional = 0.0;     // deviation of L(X_m | dual history) from the link row
  int steps = 0;
  bool zero_denominator = false;
};

/// Exact enumeration of the Diaconis-Fill joint kernel for step length dt,
/// dual started from `start_law` over the Sharp dual's states.
CouplingReport df_coupling_check(const GridChain& g, const IntervalDual& d, double dt, int steps,
                                 const Eigen::VectorXd& start_law);

struct SeparationCurves {
  std::vector<double> t;
  std::vector<double> separation;
  std::vector<double> survival;
  double max_gap = 0.0;
};

/// X from pi conditioned on sites [0, last]; dual from the half-line state.
SeparationCurves exact_separation_vs_absorption(const GridChain& g, int last,
                                                const std::vector<double>& t_grid);

}  // namespace sst
