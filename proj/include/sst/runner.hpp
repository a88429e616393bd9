#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sst/errors.hpp"
#include "sst/run_config.hpp"

namespace sst {

inline constexpr const char* kArtifactVersion = "0.1.0";

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitNumerical = 3, kExitInvariant = 4 };

int exit_code_for(ErrorKind kind);

struct RunOptions {
  int workers = 1;
  std::string out_dir;                 // overrides output.directory when set
  std::optional<std::uint64_t> seed;   // overrides sim.seed when set
};

struct InvariantCheck {
  std::string name;
  bool pass = true;
  std::string detail;
};

struct RunResult {
  int exit_code = kExitOk;
  std::string message;
  std::vector<InvariantCheck> checks;
  std::vector<std::string> files;  // relative to the output directory
};

/// Validates, runs the experiment and writes its outputs, summary.json and
/// manifest.json. Failed checks give kExitInvariant.
RunResult run(const RunConfig& config, const RunOptions& options = {});

std::string sha256_hex(const std::string& bytes);

/// Recomputes the digest of every file listed in dir/manifest.json and
/// returns one message per mismatch or missing file.
std::vector<std::string> verify_manifest(const std::string& dir);

}  // namespace sst
