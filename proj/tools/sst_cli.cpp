#include <iostream>

#include <CLI11.hpp>

#include "sst/errors.hpp"
#include "sst/run_config.hpp"
#include "sst/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Strong stationary time experiments"};
  std::string config_path, out_dir, verify_dir;
  int workers = 1;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "key = value experiment config")->check(CLI::ExistingFile);
  app.add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", out_dir, "output directory (overrides output.directory)");
  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides sim.seed)");
  app.add_option("--verify", verify_dir, "check the digests listed in DIR/manifest.json");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : sst::kExitConfig;
  }

  if (!verify_dir.empty()) {
    const auto problems = sst::verify_manifest(verify_dir);
    for (const auto& p : problems) std::cerr << p << '\n';
    std::cout << (problems.empty() ? "manifest verified\n" : "manifest mismatch\n");
    return problems.empty() ? sst::kExitOk : sst::kExitInvariant;
  }
  if (config_path.empty()) {
    std::cerr << "--config is required\n";
    return sst::kExitConfig;
  }

  sst::RunConfig config;
  try {
    config = sst::load_config(config_path);
  } catch (const sst::Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return sst::exit_code_for(e.kind());
  }
  sst::RunOptions options;
  options.workers = workers;
  options.out_dir = out_dir;
  if (*seed_opt) options.seed = seed;

  const sst::RunResult r = sst::run(config, options);
  for (const auto& c : r.checks)
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << (c.detail.empty() ? "" : "  " + c.detail)
              << '\n';
  if (!r.message.empty()) std::cerr << r.message << '\n';
  std::cout << "exit " << r.exit_code << '\n';
  return r.exit_code;
}
