#include "sst/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>
#include <openssl/evp.h>

#include "sst/diffusion_model.hpp"
#include "sst/dual_process.hpp"
#include "sst/estimators.hpp"
#include "sst/lattice_oracle.hpp"
#include "sst/ou_suite.hpp"

namespace sst {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::vector<double> linspace(double lo, double hi, int points) {
  std::vector<double> v(points);
  for (int k = 0; k < points; ++k) v[k] = lo + (hi - lo) * k / (points - 1);
  v.back() = hi;
  return v;
}

json extended_json(const Extended& e) {
  if (e.divergent) return "Divergent";
  return e.value;
}

std::string table_csv(const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
  out += '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + format_real(r[i]);
    out += '\n';
  }
  return out;
}

std::string rows_csv(const std::vector<CsvRow>& rows) {
  std::ostringstream out;
  write_csv(out, rows);
  return out.str();
}

class Outputs {
 public:
  Outputs(fs::path dir, const std::vector<std::string>& formats) : dir_(std::move(dir)) {
    csv_ = std::find(formats.begin(), formats.end(), "csv") != formats.end();
    json_ = std::find(formats.begin(), formats.end(), "json") != formats.end();
  }
  void csv(const std::string& name, const std::string& content) {
    if (csv_) write(name, content);
  }
  void json_file(const std::string& name, const json& j) {
    if (json_) write(name, j.dump(2) + "\n");
  }
  void write(const std::string& name, const std::string& content) {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + (dir_ / name).string());
    out << content;
    files_.push_back(name);
  }
  const std::vector<std::string>& files() const { return files_; }

 private:
  fs::path dir_;
  bool csv_ = true, json_ = true;
  std::vector<std::string> files_;
};

struct Context {
  const RunConfig& cfg;
  int workers;
  std::uint64_t seed;
  Outputs& out;
  json results = json::object();
  std::vector<InvariantCheck> checks;

  void check(const std::string& name, bool pass, const std::string& detail) {
    checks.push_back({name, pass, detail});
  }
  std::vector<double> grid() const { return linspace(0.0, cfg.sim.t_max, cfg.sim.t_points); }
  std::size_t n() const { return static_cast<std::size_t>(cfg.sim.n_paths); }
};

DualConfig dual_config(const RunConfig& c, const std::vector<double>& grid) {
  DualConfig d;
  d.alpha = c.dual.alpha;
  d.r_switch = c.dual.r_switch;
  d.eps_edge = c.dual.eps_edge;
  d.plan = StepPlan{c.sim.dt_base, c.sim.dt_min, c.sim.t_max};
  d.t_grid = grid;
  return d;
}

DualStart dual_start(const DualBlock& d) {
  if (d.start == "segment") return DualStart::segment(d.x0, d.y0);
  if (d.start == "half_line_left") return DualStart::half_line_left(d.x0);
  if (d.start == "half_line_right") return DualStart::half_line_right(d.x0);
  return DualStart::diagonal(d.x0);
}

void run_criterion(Context& cx) {
  const CoefficientModel model = build_model(cx.cfg.model);
  const CriterionReport r = criterion_I(model);
  const StationaryMeasure mu(model);
  const auto left = edge_coefficients(mu, Side::Left);
  const auto right = edge_coefficients(mu, Side::Right);
  const bool explode_left = feller_explosion_test(left.a_hat, left.b_hat);
  const bool explode_right = feller_explosion_test(right.a_hat, right.b_hat);
  cx.results["model"] = model.name();
  cx.results["i_minus"] = extended_json(r.i_minus);
  cx.results["i_plus"] = extended_json(r.i_plus);
  cx.results["recurrent_left"] = r.recurrent_left;
  cx.results["recurrent_right"] = r.recurrent_right;
  cx.results["mass_finite"] = r.mass_finite;
  cx.results["sst_exists"] = r.sst_exists;
  cx.results["edge_explodes_left"] = explode_left;
  cx.results["edge_explodes_right"] = explode_right;
  cx.check("edge_test_matches_i_minus", explode_left == r.i_minus.finite(),
           fmt::format("explodes={} finite={}", explode_left, r.i_minus.finite()));
  cx.check("edge_test_matches_i_plus", explode_right == r.i_plus.finite(),
           fmt::format("explodes={} finite={}", explode_right, r.i_plus.finite()));
  cx.out.json_file("criterion.json", cx.results);
}

std::vector<DualPath> dual_paths(Context& cx, const std::vector<double>& grid) {
  const DualModel dm(build_model(cx.cfg.model));
  return run_dual_batch(dm, dual_start(cx.cfg.dual), dual_config(cx.cfg, grid), cx.n(), cx.seed,
                        cx.workers);
}

void run_dual_sim(Context& cx) {
  const auto grid = cx.grid();
  const auto paths = dual_paths(cx, grid);
  std::vector<std::vector<double>> rows;
  std::size_t absorbed = 0, consistent = 0;
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const auto& p = paths[i];
    rows.push_back({static_cast<double>(i), p.tau_minus, p.tau_plus, p.tau_star, p.varsigma,
                    p.absorbed ? 1.0 : 0.0, static_cast<double>(p.stop_reason)});
    if (!p.absorbed) continue;
    ++absorbed;
    sum += p.varsigma;
    sum2 += p.varsigma * p.varsigma;
    if (p.tau_star == std::max(p.tau_minus, p.tau_plus)) ++consistent;
  }
  cx.out.csv("dual_paths.csv", table_csv({"path", "tau_minus", "tau_plus", "tau_star", "varsigma",
                                          "absorbed", "stop_reason"},
                                         rows));
  const double frac = static_cast<double>(absorbed) / paths.size();
  cx.results["absorbed_fraction"] = frac;
  cx.check("tau_star_is_last_edge_exit", consistent == absorbed,
           fmt::format("{} of {} absorbed paths", consistent, absorbed));
  if (absorbed > 1) {
    const double mean = sum / absorbed;
    const double se = std::sqrt(std::max(sum2 / absorbed - mean * mean, 0.0) / absorbed);
    cx.results["varsigma_mean"] = mean;
    cx.results["varsigma_se"] = se;
    if (cx.cfg.dual.start == "diagonal" && absorbed == paths.size())
      cx.check("varsigma_mean_one_third", std::abs(mean - 1.0 / 3.0) <= 3.0 * se,
               fmt::format("mean {:.6g} se {:.3g}", mean, se));
  }
  cx.out.json_file("dual_sim.json", cx.results);
}

void run_sst_survival(Context& cx) {
  const auto grid = cx.grid();
  const auto paths = dual_paths(cx, grid);
  std::vector<double> taus;
  for (const auto& p : paths) taus.push_back(p.tau_star);
  const SurvivalCurve c = survival(taus, grid);
  cx.out.csv("sst_survival.csv", rows_csv(survival_rows(c)));
  bool monotone = true;
  for (std::size_t k = 1; k < c.survival.size(); ++k) monotone &= c.survival[k] <= c.survival[k - 1];
  cx.check("survival_nonincreasing", monotone, "");
  cx.results["final_survival"] = c.survival.back();
  cx.out.json_file("sst_survival.json", cx.results);
}

void run_separation(Context& cx) {
  const auto grid = cx.grid();
  const CoefficientModel model = build_model(cx.cfg.model);
  const DualModel dm(model);
  const auto paths = run_dual_batch(dm, DualStart::half_line_left(cx.cfg.dual.x0),
                                    dual_config(cx.cfg, grid), cx.n(), cx.seed, cx.workers);
  std::vector<double> taus;
  for (const auto& p : paths) taus.push_back(p.tau_star);
  const SurvivalCurve surv = survival(taus, grid);
  SeparationOptions opt;
  opt.plan = StepPlan{cx.cfg.sim.dt_base, cx.cfg.sim.dt_min, cx.cfg.sim.t_max};
  opt.workers = cx.workers;
  std::vector<CsvRow> rows;
  int violations = 0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto est = separation_halfline(model, grid[k], cx.n(), derive_seed(cx.seed, k + 1), opt,
                                         cx.cfg.dual.x0);
    rows.push_back({grid[k], est.s_hat, est.ci_low, est.ci_high, static_cast<double>(est.n)});
    if (check_separation_bound(est, surv).violation) ++violations;
  }
  cx.out.csv("separation.csv", rows_csv(rows));
  cx.out.csv("survival.csv", rows_csv(survival_rows(surv)));
  cx.check("separation_below_survival", violations == 0,
           fmt::format("{} grid times beyond the joint CI", violations));
  cx.out.json_file("separation.json", cx.results);
}

void run_lattice_check(Context& cx) {
  const auto grid = cx.grid();
  const auto& lb = cx.cfg.lattice;
  const GridChain g = discretize_L(build_model(cx.cfg.model), lb.n, lb.lo, lb.hi);
  const IntervalDual d = discretize_Lstar(g, DualScheme::Sharp);
  int last = 0;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g.sites[i] <= cx.cfg.dual.x0) last = static_cast<int>(i);
  const SeparationCurves curves = exact_separation_vs_absorption(g, last, grid);
  std::vector<std::vector<double>> rows;
  for (std::size_t k = 0; k < curves.t.size(); ++k)
    rows.push_back({curves.t[k], curves.separation[k], curves.survival[k]});
  cx.out.csv("lattice_curves.csv", table_csv({"t", "separation", "survival"}, rows));
  const double residual = intertwining_residual(g, d) / g.max_rate();
  cx.results["max_gap"] = curves.max_gap;
  cx.results["relative_intertwining_residual"] = residual;
  cx.check("separation_equals_survival", curves.max_gap <= 1e-8,
           fmt::format("max gap {:.3g}", curves.max_gap));
  cx.check("sharp_dual_intertwines", residual <= 1e-10, fmt::format("{:.3g}", residual));
  cx.out.json_file("lattice_check.json", cx.results);
}

void run_ou_tv(Context& cx) {
  std::vector<std::vector<double>> rows;
  bool decreasing = true;
  double prev = 2.0;
  for (double t : cx.grid()) {
    const double tv = t > 0.0 ? ou::ou_tv_exact(t) : 1.0;
    decreasing &= tv <= prev;
    prev = tv;
    rows.push_back({t, tv, std::exp(2.0 * t) * tv});
  }
  cx.out.csv("ou_tv.csv", table_csv({"t", "tv_exact", "scaled_tv"}, rows));
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const int m = 31;
  for (int k = 0; k < m; ++k) {
    const double t = 4.0 + 0.1 * k, y = std::log(ou::ou_tv_exact(t));
    sx += t;
    sy += y;
    sxx += t * t;
    sxy += t * y;
  }
  const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  const double scaled = std::exp(10.0) * ou::ou_tv_exact(5.0);
  const double gamma1 = normal_pdf(1.0);
  cx.results["slope_4_7"] = slope;
  cx.results["scaled_tv_at_5"] = scaled;
  cx.check("tv_decreasing", decreasing, "");
  cx.check("tv_rate_two", std::abs(slope + 2.0) <= 0.05, fmt::format("slope {:.6g}", slope));
  cx.check("tv_constant_gamma1", std::abs(scaled / gamma1 - 1.0) <= 0.01,
           fmt::format("{:.8g} vs {:.8g}", scaled, gamma1));
  cx.out.json_file("ou_tv.json", cx.results);
}

void run_ou_spectral(Context& cx) {
  json& r = cx.results;
  for (int n = 1; n <= 3; ++n) {
    const double res = ou::hdagger_eigen_residual(n);
    const double norm = ou::nu_norm(n);
    const double stated = std::tgamma(2.0 * n);
    r["hdagger_residual"].push_back(res);
    r["nu_norm"].push_back(norm);
    cx.check(fmt::format("hdagger_{}_eigen", 2 * n), res < 1e-3, fmt::format("{:.3g}", res));
    cx.check(fmt::format("nu_norm_{}", 2 * n), std::abs(norm / stated - 1.0) <= 1e-3,
             fmt::format("{:.8g} vs {:.8g}", norm, stated));
  }
  const double off = std::max({std::abs(ou::nu_pairing(1, 2)), std::abs(ou::nu_pairing(1, 3)),
                               std::abs(ou::nu_pairing(2, 3))});
  r["nu_off_diagonal"] = off;
  cx.check("nu_pairings_orthogonal", off <= 1e-8, fmt::format("{:.3g}", off));

  ou::EtaOptions eo;
  eo.paths_per_start = cx.n();
  eo.dt = cx.cfg.sim.dt_base;
  eo.workers = cx.workers;
  const auto eta = ou::eta_quasi_stationarity(0.5, ou::bump_1_2, 1.0, 2.0, cx.seed, eo);
  r["eta_ratio"] = eta.ratio;
  r["eta_se"] = eta.se;
  cx.check("eta_quasi_stationary", std::abs(eta.ratio - 1.0) <= 0.02,
           fmt::format("{:.5g} se {:.3g}", eta.ratio, eta.se));

  double prev = 1e300;
  bool monotone = true;
  for (double M : {1.0, 2.0, 4.0, 8.0}) {
    const double l = ou::lambda0(M);
    r["lambda0"][fmt::format("{}", M)] = l;
    monotone &= l <= prev + 1e-9;
    prev = l;
    cx.check(fmt::format("lambda0_ge_1_M{}", M), l >= 1.0 - 1e-3, fmt::format("{:.8g}", l));
  }
  cx.check("lambda0_nonincreasing", monotone, "");
  const double ray = ou::rayleigh_fM(8.0);
  r["rayleigh_f8"] = ray;
  cx.check("rayleigh_f8_near_1", std::abs(ray - 1.0) <= 0.02, fmt::format("{:.8g}", ray));
  const double e0 = ou::half_line_eigenvalue(0), e1 = ou::half_line_eigenvalue(1);
  r["half_line_spectrum"] = {e0, e1};
  cx.check("half_line_spectrum_1_3",
           std::abs(e0 - 1.0) <= 0.02 && std::abs(e1 / 3.0 - 1.0) <= 0.02,
           fmt::format("{:.6g}, {:.6g}", e0, e1));
  r["crossing_point_a"] = ou::crossing_point_a();
  r["ystar_exit_rate"] = ou::ystar_exit_rate(cx.cfg.ou.M);
  cx.out.json_file("spectral.json", r);
}

void run_ou_bounds(Context& cx) {
  const auto grid = cx.grid();
  const double M = cx.cfg.ou.M;
  ou::TauStarOptions opt;
  opt.dt = cx.cfg.sim.dt_base;
  opt.workers = cx.workers;
  const auto rep = ou::tau_M_star_experiment(M, grid, cx.n(), ou::YStart::UniformHalfToThreeHalves,
                                             derive_seed(cx.seed, 1), opt);
  cx.out.csv("tau_star_survival.csv", rows_csv(survival_rows(rep.survival)));
  std::vector<std::vector<double>> bound_rows;
  for (std::size_t k = 0; k < grid.size(); ++k) bound_rows.push_back({grid[k], rep.bound[k]});
  cx.out.csv("tau_star_bound.csv", table_csv({"t", "bound"}, bound_rows));
  cx.results["C"] = rep.C;
  cx.results["fit_slope"] = rep.fit.slope;
  cx.results["fit_points"] = rep.fit.points;
  cx.results["ystar_exit_rate"] = ou::ystar_exit_rate(M);
  cx.check("survival_below_CM2e-2t", rep.bound_holds, fmt::format("{:.3g} SE", rep.max_excess_se));
  cx.check("tail_slope_window", rep.fit.slope >= -2.3 && rep.fit.slope <= -1.8,
           fmt::format("slope {:.4g} over {} points", rep.fit.slope, rep.fit.points));

  for (double t : {2.0, 3.0, 4.0}) {
    const auto c = ou::composite_tv_bound(t, cx.n(), derive_seed(cx.seed, 10 + t), opt);
    cx.results["composite"].push_back(
        {{"t", t}, {"M", c.M}, {"survival", c.survival}, {"trunc_tv", c.trunc_tv},
         {"bound", c.bound}, {"tv_exact", c.tv_exact}});
    cx.check(fmt::format("composite_dominates_t{}", t), c.dominates,
             fmt::format("{:.4g} >= {:.4g}", c.bound, c.tv_exact));
  }

  const auto star = ou::tau_M_star_experiment(M, grid, cx.n(), ou::YStart::DiagonalAtZero,
                                              derive_seed(cx.seed, 2), opt);
  const auto lin = ou::linear_survival(M, grid, cx.n(), derive_seed(cx.seed, 3), cx.workers,
                                       cx.cfg.sim.dt_base);
  cx.out.csv("linear_survival.csv", rows_csv(survival_rows(lin)));
  const auto dom = survival_dominance(star.survival, lin);
  cx.check("dual_survival_below_linear", dom.holds, fmt::format("{:.3g} SE", dom.max_excess_se));
  double worst = -1e300;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (grid[k] <= 0.0) continue;
    const double s = lin.survival[k];
    const double se = std::sqrt(s * (1.0 - s) / lin.n);
    const double excess = s - ou::linear_tail_bound(M, grid[k]);
    worst = std::max(worst, se > 0 ? excess / se : (excess > 0 ? 1e300 : 0.0));
  }
  cx.check("linear_survival_below_bound", worst <= 2.0, fmt::format("{:.3g} SE", worst));
  cx.out.json_file("ou_bounds.json", cx.results);
}

void dispatch(Context& cx) {
  switch (cx.cfg.experiment) {
    case Experiment::Criterion: return run_criterion(cx);
    case Experiment::DualSim: return run_dual_sim(cx);
    case Experiment::SstSurvival: return run_sst_survival(cx);
    case Experiment::Separation: return run_separation(cx);
    case Experiment::LatticeCheck: return run_lattice_check(cx);
    case Experiment::OuTv: return run_ou_tv(cx);
    case Experiment::OuSpectral: return run_ou_spectral(cx);
    case Experiment::OuBounds: return run_ou_bounds(cx);
  }
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return kExitConfig;
    case ErrorKind::Numerical: return kExitNumerical;
    case ErrorKind::Invariant: return kExitInvariant;
  }
  return kExitNumerical;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw NumericalError("ConvergenceFailure", "SHA-256 digest failed");
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

RunResult run(const RunConfig& input, const RunOptions& options) {
  RunResult result;
  RunConfig cfg = input;
  if (options.seed) cfg.sim.seed = *options.seed;
  if (!options.out_dir.empty()) cfg.output.directory = options.out_dir;
  const auto problems = validate(cfg);
  if (!problems.empty()) {
    result.exit_code = kExitConfig;
    for (const auto& p : problems) result.message += (result.message.empty() ? "" : "; ") + p;
    return result;
  }
  if (options.workers < 1) {
    result.exit_code = kExitConfig;
    result.message = "workers must be at least 1";
    return result;
  }

  const fs::path dir(cfg.output.directory);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    result.exit_code = kExitConfig;
    result.message = "cannot create " + dir.string();
    return result;
  }
  Outputs out(dir, cfg.output.formats);
  Context cx{cfg, options.workers, cfg.sim.seed, out, json::object(), {}};
  const auto start = std::chrono::steady_clock::now();
  try {
    dispatch(cx);
  } catch (const Error& e) {
    result.exit_code = exit_code_for(e.kind());
    result.message = e.what();
  } catch (const std::exception& e) {
    result.exit_code = kExitNumerical;
    result.message = e.what();
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  result.checks = cx.checks;
  int failed = 0;
  json summary;
  summary["experiment"] = experiment_name(cfg.experiment);
  summary["results"] = cx.results;
  for (const auto& c : cx.checks) {
    summary["checks"].push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    if (!c.pass) ++failed;
  }
  if (result.exit_code == kExitOk && failed > 0) {
    result.exit_code = kExitInvariant;
    result.message = fmt::format("{} of {} checks failed", failed, cx.checks.size());
  }
  summary["exit_code"] = result.exit_code;
  summary["message"] = result.message;
  out.write("summary.json", summary.dump(2) + "\n");

  json manifest;
  manifest["artifact_version"] = kArtifactVersion;
  manifest["experiment"] = experiment_name(cfg.experiment);
  manifest["seed"] = cfg.sim.seed;
  manifest["workers"] = options.workers;
  manifest["wall_time_seconds"] = wall;
  manifest["exit_code"] = result.exit_code;
  manifest["config"] = echo_config(cfg);
  manifest["files"] = json::array();
  for (const auto& name : out.files()) {
    const std::string bytes = read_file(dir / name);
    manifest["files"].push_back({{"path", name}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}});
  }
  std::ofstream(dir / "manifest.json", std::ios::binary) << manifest.dump(2) << "\n";
  result.files = out.files();
  result.files.push_back("manifest.json");
  return result;
}

std::vector<std::string> verify_manifest(const std::string& dir) {
  std::vector<std::string> problems;
  json manifest;
  try {
    manifest = json::parse(read_file(fs::path(dir) / "manifest.json"));
  } catch (const std::exception& e) {
    return {std::string("manifest unreadable: ") + e.what()};
  }
  for (const auto& f : manifest["files"]) {
    const std::string name = f["path"];
    const fs::path p = fs::path(dir) / name;
    if (!fs::exists(p)) {
      problems.push_back(name + ": missing");
      continue;
    }
    if (sha256_hex(read_file(p)) != f["sha256"].get<std::string>())
      problems.push_back(name + ": digest mismatch");
  }
  return problems;
}

}  // namespace sst
