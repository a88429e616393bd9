#include <doctest.h>

#include <cmath>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "sst/errors.hpp"
#include "sst/lattice_oracle.hpp"

using namespace sst;

namespace {
CoefficientModel flat() {
  CoefficientModel::Fields f;
  f.a = [](double) { return 1.0; };
  f.a_prime = [](double) { return 0.0; };
  f.b = [](double) { return 0.0; };
  f.b_prime = [](double) { return 0.0; };
  return CoefficientModel::custom("flat", f, true, true);
}
}  // namespace

TEST_CASE("generator rows sum to zero and satisfy detailed balance") {
  for (const auto& model : {CoefficientModel::ornstein_uhlenbeck(), CoefficientModel::power_potential(2.5)}) {
    const GridChain g = discretize_L(model, 61, -4.0, 4.0);
    const Eigen::MatrixXd Q = g.dense_generator();
    for (int i = 0; i < Q.rows(); ++i) CHECK(std::abs(Q.row(i).sum()) < 1e-9 * g.max_rate());
    double total = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      total += g.pi[i];
      if (i + 1 < g.size())
        CHECK(g.pi[i] * g.up[i] == doctest::Approx(g.pi[i + 1] * g.down[i + 1]).epsilon(1e-10));
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(discretize_L(CoefficientModel::ornstein_uhlenbeck(), 61, -4.0, 4.0).scheme == RateScheme::Central);
}

TEST_CASE("driftless chain has uniform stationary law") {
  const GridChain g = discretize_L(flat(), 11, 0.0, 1.0);
  for (double p : g.pi) CHECK(p == doctest::Approx(1.0 / 11).epsilon(1e-12));
}

TEST_CASE("chain stationary law approximates the density times the mesh") {
  const GridChain g = discretize_L(CoefficientModel::ornstein_uhlenbeck(), 401, -6.0, 6.0);
  const StationaryMeasure mu(CoefficientModel::ornstein_uhlenbeck());
  double worst = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i)
    worst = std::max(worst, std::abs(g.pi[i] / g.delta - mu.density(g.sites[i])));
  CHECK(worst < 1e-3);
}

TEST_CASE("grid validation") {
  CHECK_THROWS_AS(discretize_L(flat(), 2, 0.0, 1.0), NumericalError);
  CHECK_THROWS_AS(discretize_L(flat(), 5, 1.0, 0.0), NumericalError);
  CHECK_THROWS_AS(discretize_L(flat(), std::vector<double>{0.0, 0.1, 0.3}), NumericalError);
}

TEST_CASE("strong drift switches to upwind rates") {
  const GridChain g = discretize_L(CoefficientModel::power_potential(4.0), 21, -5.0, 5.0);
  CHECK(g.scheme == RateScheme::Upwind);
  for (std::size_t i = 0; i + 1 < g.size(); ++i) CHECK(g.up[i] > 0.0);
}

TEST_CASE("sharp dual intertwines to rounding") {
  const GridChain g = discretize_L(CoefficientModel::ornstein_uhlenbeck(), 40, -4.0, 4.0);
  const IntervalDual d = discretize_Lstar(g, DualScheme::Sharp);
  CHECK(d.absorbing >= 0);
  const Eigen::MatrixXd L = d.link(g);
  for (int s = 0; s < L.rows(); ++s) CHECK(L.row(s).sum() == doctest::Approx(1.0).epsilon(1e-12));
  const Eigen::MatrixXd G = Eigen::MatrixXd(d.gen);
  for (int s = 0; s < G.rows(); ++s) CHECK(std::abs(G.row(s).sum()) < 1e-9 * d.max_rate());
  CHECK(intertwining_residual(g, d) / g.max_rate() < 1e-12);
  CHECK(semigroup_residual(g, d, 0.3) < 1e-10);
}

TEST_CASE("semigroup residual vanishes at time zero") {
  const GridChain g = discretize_L(CoefficientModel::ornstein_uhlenbeck(), 30, -4.0, 4.0);
  for (auto scheme : {DualScheme::Sharp, DualScheme::Mirror}) {
    const IntervalDual d = discretize_Lstar(g, scheme);
    CHECK(semigroup_residual(g, d, 0.0) < 1e-14);
  }
}

TEST_CASE("uniformization matches the matrix exponential") {
  const GridChain g = discretize_L(CoefficientModel::ornstein_uhlenbeck(), 25, -3.0, 3.0);
  const Eigen::MatrixXd E = (0.7 * g.dense_generator()).exp();
  Eigen::VectorXd v(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) v[i] = std::sin(g.sites[i]);
  const Eigen::VectorXd a = uniformized_apply(g.generator(), g.max_rate(), 0.7, v);
  CHECK((a - E * v).lpNorm<Eigen::Infinity>() < 1e-10);
  const Eigen::VectorXd m = Eigen::VectorXd::Map(g.pi.data(), g.size());
  const Eigen::VectorXd p = uniformized_propagate(g.generator(), g.max_rate(), 0.7, m);
  CHECK((p - m).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("mirror dual converges at first order") {
  ResidualOptions opt;
  opt.skip_boundary_rows = true;
  opt.norm = ResidualNorm::TestFunctions;
  opt.tests = smooth_probes();
  std::vector<double> gen, semi;
  for (int n : {100, 200, 400}) {
    const GridChain g = discretize_L(CoefficientModel::ornstein_uhlenbeck(), n, -6.0, 6.0);
    const IntervalDual d = discretize_Lstar(g, DualScheme::Mirror);
    gen.push_back(intertwining_residual(g, d, opt));
    semi.push_back(semigroup_residual(g, d, 1.0, {}, opt));
  }
  for (std::size_t k = 1; k < gen.size(); ++k) {
    CHECK(gen[k - 1] / gen[k] > 1.8);
    CHECK(semi[k - 1] / semi[k] > 1.8);
  }
}

TEST_CASE("diaconis-fill coupling on a small chain") {
  const GridChain g = discretize_L(CoefficientModel::ornstein_uhlenbeck(), 5, -2.0, 2.0);
  const IntervalDual d = discretize_Lstar(g, DualScheme::Sharp);
  Eigen::VectorXd start = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d.states.size()));
  const int s0 = d.index(0, 1);
  REQUIRE(s0 >= 0);
  start[s0] = 1.0;
  const auto rep = df_coupling_check(g, d, 0.1, 3, start);
  CHECK_FALSE(rep.zero_denominator);
  CHECK(rep.x_marginal < 1e-12);
  CHECK(rep.dual_marginal < 1e-12);
  CHECK(rep.conditional < 1e-10);
}

TEST_CASE("exact separation equals absorption survival") {
  const GridChain g = discretize_L(CoefficientModel::power_potential(2.0), 60, -4.0, 4.0);
  const auto curves = exact_separation_vs_absorption(g, 29, {0.0, 0.1, 0.5, 1.0, 3.0});
  CHECK(curves.max_gap < 1e-8);
  CHECK(curves.survival.front() == doctest::Approx(1.0));
  for (std::size_t k = 1; k < curves.t.size(); ++k) CHECK(curves.survival[k] <= curves.survival[k - 1]);
  CHECK(curves.survival.back() < 0.5);
}

TEST_CASE("flat box: sharp dual is exact and labels do not matter") {
  const GridChain g = discretize_L(flat(), 30, 0.0, 1.0);
  const IntervalDual d = discretize_Lstar(g, DualScheme::Sharp);
  CHECK(intertwining_residual(g, d) / g.max_rate() < 1e-13);
  // Relabel sites by reversal: residual columns permute, the max norm does not change.
  const Eigen::MatrixXd L = d.link(g), Q = g.dense_generator(), G = Eigen::MatrixXd(d.gen);
  const Eigen::MatrixXd R = L * Q - G * L;
  Eigen::PermutationMatrix<Eigen::Dynamic> P(static_cast<int>(g.size()));
  for (int k = 0; k < P.size(); ++k) P.indices()[k] = P.size() - 1 - k;
  const Eigen::MatrixXd Lp = L * P.transpose(), Qp = P * Q * P.transpose();
  const Eigen::MatrixXd Rp = Lp * Qp - G * Lp;
  CHECK(Rp.lpNorm<Eigen::Infinity>() == doctest::Approx(R.lpNorm<Eigen::Infinity>()).epsilon(1e-12));
}

TEST_CASE("dual generator structure") {
  const GridChain g = discretize_L(CoefficientModel::ornstein_uhlenbeck(), 24, -4.0, 4.0);
  for (auto scheme : {DualScheme::Sharp, DualScheme::Mirror}) {
    const IntervalDual d = discretize_Lstar(g, scheme);
    CAPTURE(static_cast<int>(scheme));
    for (SparseRows::InnerIterator it(d.gen, d.absorbing); it; ++it) CHECK(it.value() == 0.0);
    for (int s = 0; s < d.gen.outerSize(); ++s) {
      const auto [i, j] = d.states[s];
      double out = 0.0;
      for (SparseRows::InnerIterator it(d.gen, s); it; ++it) {
        if (it.col() == s) continue;
        CHECK(it.value() > 0.0);
        out += it.value();
        const auto& to = d.states[it.col()];
        // Singletons only widen.
        if (i == j) CHECK((to.i <= i && to.j >= j && to.j - to.i > 0));
      }
      if (s != d.absorbing) CHECK(out > 0.0);
    }
  }
}

TEST_CASE("coupling on a five-site chain over two steps") {
  const GridChain g = discretize_L(flat(), 5, 0.0, 1.0);
  const IntervalDual d = discretize_Lstar(g, DualScheme::Sharp);
  const auto n = static_cast<Eigen::Index>(d.states.size());
  for (int s0 : {d.index(1, 2), d.index(2, 2), d.absorbing}) {
    Eigen::VectorXd start = Eigen::VectorXd::Zero(n);
    start[s0] = 1.0;
    const auto rep = df_coupling_check(g, d, 0.2, 2, start);
    CHECK_FALSE(rep.zero_denominator);
    CHECK(rep.x_marginal < 1e-12);
    CHECK(rep.dual_marginal < 1e-12);
    CHECK(rep.conditional < 1e-12);
  }
  // A singleton start pins X; the full state starts X at pi, which never moves.
  const Eigen::MatrixXd L = d.link(g);
  CHECK(L(d.index(2, 2), 2) == 1.0);
  const Eigen::VectorXd pi = L.row(d.absorbing).transpose();
  const Eigen::VectorXd later = uniformized_propagate(g.generator(), g.max_rate(), 5.0, pi);
  CHECK((later - pi).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("refinement halves the unit-time residual") {
  ResidualOptions opt;
  opt.skip_boundary_rows = true;
  opt.norm = ResidualNorm::TestFunctions;
  opt.tests = smooth_probes();
  double prev = 0.0;
  for (int n : {100, 200, 400}) {
    const GridChain g = discretize_L(CoefficientModel::ornstein_uhlenbeck(), n, -6.0, 6.0);
    const double r = semigroup_residual(g, discretize_Lstar(g, DualScheme::Mirror), 1.0, {}, opt);
    if (prev > 0.0) {
      CHECK(prev / r >= 1.7);
      CHECK(prev / r <= 2.3);
    }
    prev = r;
  }
}

TEST_CASE("semigroup residual grows at most linearly from zero") {
  const GridChain g = discretize_L(CoefficientModel::ornstein_uhlenbeck(), 60, -5.0, 5.0);
  const IntervalDual d = discretize_Lstar(g, DualScheme::Mirror);
  ResidualOptions opt;
  opt.skip_boundary_rows = true;
  opt.norm = ResidualNorm::TestFunctions;
  opt.tests = smooth_probes();
  const double gen = intertwining_residual(g, d, opt);
  for (double t : {0.05, 0.2, 0.5, 1.0}) CHECK(semigroup_residual(g, d, t, {}, opt) <= t * gen * std::exp(t));
}

TEST_CASE("exact separation for the quartic model") {
  const GridChain g = discretize_L(CoefficientModel::power_potential(4.0), 200, -3.0, 3.0);
  const auto curves = exact_separation_vs_absorption(g, 99, {0.0, 0.05, 0.2, 0.5, 1.0, 2.0, 20.0});
  CHECK(curves.max_gap < 1e-8);
  CHECK(curves.separation.front() == 1.0);
  CHECK(curves.survival.back() < 1e-3);
}
