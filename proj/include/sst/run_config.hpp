#pragma once

#include <cstdint>
#include <istream>
#include <string>
#include <vector>

#include "sst/diffusion_model.hpp"

namespace sst {

enum class Experiment {
  Criterion,
  DualSim,
  SstSurvival,
  Separation,
  LatticeCheck,
  OuTv,
  OuSpectral,
  OuBounds,
};

const char* experiment_name(Experiment e);

struct ModelBlock {
  std::string kind = "ou";  // ou | power | tabulated
  double alpha = 4.0;
  std::string table_path;
  double smoothing_radius = 0.5;
};

struct SimBlock {
  double dt_base = 1e-3;
  double dt_min = 1e-9;
  double t_max = 10.0;
  int t_points = 101;
  long n_paths = 1000;
  std::uint64_t seed = 1;
};

struct DualBlock {
  std::string start = "diagonal";  // diagonal | segment | half_line_left | half_line_right
  double x0 = 0.0;
  double y0 = 0.0;
  double alpha = 0.0;
  double r_switch = 0.05;
  double eps_edge = 1e-6;
};

struct LatticeBlock {
  int n = 200;
  double lo = -6.0;
  double hi = 6.0;
};

struct OuBlock {
  double M = 2.0;
};

struct OutputBlock {
  std::string directory = "out";
  std::vector<std::string> formats{"csv", "json"};
};

struct RunConfig {
  Experiment experiment = Experiment::Criterion;
  ModelBlock model;
  SimBlock sim;
  DualBlock dual;
  LatticeBlock lattice;
  OuBlock ou;
  OutputBlock output;
};

/// `section.key = value` lines; '#' starts a comment. Unknown keys and
/// malformed values raise ConfigError.
RunConfig parse_config(std::istream& in);
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);

/// Canonical key = value rendering; parse_config(echo(c)) reproduces c.
std::string echo_config(const RunConfig& c);

/// Every range or consistency problem, empty when the config is usable.
std::vector<std::string> validate(const RunConfig& c);

CoefficientModel build_model(const ModelBlock& m);

}  // namespace sst
