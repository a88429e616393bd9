#include "sst/run_config.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "sst/errors.hpp"
#include "sst/estimators.hpp"

namespace sst {

namespace {
const std::map<std::string, Experiment>& experiment_table() {
  static const std::map<std::string, Experiment> table{
      {"criterion", Experiment::Criterion},       {"dual-sim", Experiment::DualSim},
      {"sst-survival", Experiment::SstSurvival},  {"separation", Experiment::Separation},
      {"lattice-check", Experiment::LatticeCheck}, {"ou-tv", Experiment::OuTv},
      {"ou-spectral", Experiment::OuSpectral},    {"ou-bounds", Experiment::OuBounds},
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("{}: '{}' is not a number", key, v));
  }
  if (used != v.size()) throw ConfigError(fmt::format("{}: '{}' is not a number", key, v));
  return x;
}

long parse_integer(const std::string& key, const std::string& v) {
  const double x = parse_real(key, v);
  if (x != std::floor(x) || std::abs(x) > 9e15)
    throw ConfigError(fmt::format("{}: '{}' is not an integer", key, v));
  return static_cast<long>(x);
}

std::uint64_t parse_seed(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  std::uint64_t x = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    x = std::stoull(v, &used, 0);
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("{}: '{}' is not a seed", key, v));
  }
  if (used != v.size()) throw ConfigError(fmt::format("{}: '{}' is not a seed", key, v));
  return x;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void assign(RunConfig& c, const std::string& key, const std::string& v) {
  if (key == "experiment") {
    const auto it = experiment_table().find(v);
    if (it == experiment_table().end()) throw ConfigError("unknown experiment '" + v + "'");
    c.experiment = it->second;
  } else if (key == "model.kind") {
    c.model.kind = v;
  } else if (key == "model.alpha") {
    c.model.alpha = parse_real(key, v);
  } else if (key == "model.table_path") {
    c.model.table_path = v;
  } else if (key == "model.smoothing_radius") {
    c.model.smoothing_radius = parse_real(key, v);
  } else if (key == "sim.dt_base") {
    c.sim.dt_base = parse_real(key, v);
  } else if (key == "sim.dt_min") {
    c.sim.dt_min = parse_real(key, v);
  } else if (key == "sim.t_max") {
    c.sim.t_max = parse_real(key, v);
  } else if (key == "sim.t_points") {
    c.sim.t_points = static_cast<int>(parse_integer(key, v));
  } else if (key == "sim.n_paths") {
    c.sim.n_paths = parse_integer(key, v);
  } else if (key == "sim.seed") {
    c.sim.seed = parse_seed(key, v);
  } else if (key == "dual.start") {
    c.dual.start = v;
  } else if (key == "dual.x0") {
    c.dual.x0 = parse_real(key, v);
  } else if (key == "dual.y0") {
    c.dual.y0 = parse_real(key, v);
  } else if (key == "dual.alpha") {
    c.dual.alpha = parse_real(key, v);
  } else if (key == "dual.r_switch") {
    c.dual.r_switch = parse_real(key, v);
  } else if (key == "dual.eps_edge") {
    c.dual.eps_edge = parse_real(key, v);
  } else if (key == "lattice.n") {
    c.lattice.n = static_cast<int>(parse_integer(key, v));
  } else if (key == "lattice.lo") {
    c.lattice.lo = parse_real(key, v);
  } else if (key == "lattice.hi") {
    c.lattice.hi = parse_real(key, v);
  } else if (key == "ou.M") {
    c.ou.M = parse_real(key, v);
  } else if (key == "output.directory") {
    c.output.directory = v;
  } else if (key == "output.formats") {
    c.output.formats = split_list(v);
  } else {
    throw ConfigError("unknown key '" + key + "'");
  }
}
}  // namespace

const char* experiment_name(Experiment e) {
  for (const auto& [name, value] : experiment_table())
    if (value == e) return name.c_str();
  return "unknown";
}

RunConfig parse_config(std::istream& in) {
  RunConfig c;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(fmt::format("line {}: expected key = value", number));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError(fmt::format("line {}: empty key or value", number));
    assign(c, key, value);
  }
  return c;
}

RunConfig parse_config_text(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(in);
}

std::string echo_config(const RunConfig& c) {
  std::string formats;
  for (std::size_t i = 0; i < c.output.formats.size(); ++i)
    formats += (i ? "," : "") + c.output.formats[i];
  std::string out;
  const auto line = [&out](const std::string& k, const std::string& v) {
    out += k + " = " + v + "\n";
  };
  line("experiment", experiment_name(c.experiment));
  line("model.kind", c.model.kind);
  line("model.alpha", format_real(c.model.alpha));
  if (!c.model.table_path.empty()) line("model.table_path", c.model.table_path);
  line("model.smoothing_radius", format_real(c.model.smoothing_radius));
  line("sim.dt_base", format_real(c.sim.dt_base));
  line("sim.dt_min", format_real(c.sim.dt_min));
  line("sim.t_max", format_real(c.sim.t_max));
  line("sim.t_points", std::to_string(c.sim.t_points));
  line("sim.n_paths", std::to_string(c.sim.n_paths));
  line("sim.seed", std::to_string(c.sim.seed));
  line("dual.start", c.dual.start);
  line("dual.x0", format_real(c.dual.x0));
  line("dual.y0", format_real(c.dual.y0));
  line("dual.alpha", format_real(c.dual.alpha));
  line("dual.r_switch", format_real(c.dual.r_switch));
  line("dual.eps_edge", format_real(c.dual.eps_edge));
  line("lattice.n", std::to_string(c.lattice.n));
  line("lattice.lo", format_real(c.lattice.lo));
  line("lattice.hi", format_real(c.lattice.hi));
  line("ou.M", format_real(c.ou.M));
  line("output.directory", c.output.directory);
  line("output.formats", formats);
  return out;
}

std::vector<std::string> validate(const RunConfig& c) {
  std::vector<std::string> v;
  const auto need = [&v](bool ok, const std::string& msg) {
    if (!ok) v.push_back(msg);
  };
  const auto& m = c.model;
  need(m.kind == "ou" || m.kind == "power" || m.kind == "tabulated",
       "model.kind must be ou, power or tabulated");
  if (m.kind == "power") need(m.alpha >= 1.0 && m.alpha <= 20.0, "model.alpha must lie in [1, 20]");
  if (m.kind == "tabulated") need(!m.table_path.empty(), "model.table_path is required for tabulated");
  need(m.smoothing_radius > 0.0 && m.smoothing_radius <= 5.0,
       "model.smoothing_radius must lie in (0, 5]");

  const auto& s = c.sim;
  need(s.dt_base > 0.0 && s.dt_base <= 1.0, "sim.dt_base must lie in (0, 1]");
  need(s.dt_min > 0.0, "sim.dt_min must be positive");
  need(s.dt_min <= s.dt_base, "sim.dt_min must not exceed sim.dt_base");
  need(s.t_max > 0.0 && s.t_max <= 1e4, "sim.t_max must lie in (0, 1e4]");
  need(s.t_points >= 2 && s.t_points <= 100000, "sim.t_points must lie in [2, 100000]");
  need(s.n_paths >= 1 && s.n_paths <= 100000000, "sim.n_paths must lie in [1, 1e8]");

  const auto& d = c.dual;
  need(d.start == "diagonal" || d.start == "segment" || d.start == "half_line_left" ||
           d.start == "half_line_right",
       "dual.start must be diagonal, segment, half_line_left or half_line_right");
  if (d.start == "segment") need(d.x0 <= d.y0, "dual.x0 must not exceed dual.y0");
  need(std::isfinite(d.x0) && std::isfinite(d.y0), "dual.x0 and dual.y0 must be finite");
  if (d.alpha == 1.0)
    v.push_back("dual.alpha = 1 is rejected: the coupled dual never leaves the diagonal");
  else
    need(d.alpha >= 0.0 && d.alpha < 1.0, "dual.alpha must lie in [0, 1)");
  need(d.r_switch > 0.0 && d.r_switch < 1.0, "dual.r_switch must lie in (0, 1)");
  need(d.eps_edge > 0.0 && d.eps_edge < 0.5, "dual.eps_edge must lie in (0, 0.5)");

  need(c.lattice.n >= 3 && c.lattice.n <= 5000, "lattice.n must lie in [3, 5000]");
  need(c.lattice.lo < c.lattice.hi, "lattice.lo must be below lattice.hi");
  need(c.ou.M > 0.0 && c.ou.M <= 20.0, "ou.M must lie in (0, 20]");

  need(!c.output.directory.empty(), "output.directory must be set");
  need(!c.output.formats.empty(), "output.formats must list csv and/or json");
  for (const auto& f : c.output.formats) need(f == "csv" || f == "json", "unknown output format '" + f + "'");
  return v;
}

CoefficientModel build_model(const ModelBlock& m) {
  if (m.kind == "ou") return CoefficientModel::ornstein_uhlenbeck();
  if (m.kind == "power") return CoefficientModel::power_potential(m.alpha, m.smoothing_radius);
  if (m.kind == "tabulated") return CoefficientModel::from_table_file(m.table_path);
  throw ConfigError("unknown model kind '" + m.kind + "'");
}

}  // namespace sst
