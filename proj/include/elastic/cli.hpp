#pragma once

// Run configuration for the command-line tool and the self-check suites.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "elastic/trainer.hpp"

namespace elastic::cli {

/// Exit codes shared by all subcommands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitDiverged = 3;

struct RunConfig {
  /// Training defaults, plus a small seeded start perturbation so that
  /// evaluation episodes differ from one another.
  RunConfig() {
    train.car.start_jitter = 0.5;
    train.car.start_heading_jitter = 0.05;
  }

  trainer::TrainConfig train;
  std::string track_path;  // empty: the shipped stadium track
  std::size_t eval_episodes = 30;

  /// Every key in file order with its current value, one `key = value` line
  /// each. The output directory is not part of the listing.
  std::string resolved() const;
  /// FNV-1a 64 of resolved(), as 16 hex digits.
  std::string hash() const;
};

struct ConfigKey {
  std::string name;
  std::string doc;
};

/// All accepted keys with a one-line description.
const std::vector<ConfigKey>& config_keys();

/// Sets one key. Throws ConfigError naming the key on unknown keys or
/// unparsable values.
void set_key(RunConfig& cfg, const std::string& key, const std::string& value);

/// Applies `key = value` lines; `#` starts a comment. Errors carry the
/// source name and line number.
void apply_config(RunConfig& cfg, std::istream& is, const std::string& name = "<config>");
void apply_config_file(RunConfig& cfg, const std::string& path);

envsim::TrackSpec load_run_track(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// Self-check suites. Each prints its result and returns true on success.

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;  // first failing assertion, or a summary
};

SuiteResult gradient_suite(std::size_t nets = 20, std::uint64_t seed = 1);
SuiteResult environment_suite(std::size_t sequences = 20, std::uint64_t seed = 1);
SuiteResult reward_suite();
/// Saves and reloads a network; with `corrupt_magic` the saved file's magic
/// string is damaged first, which must make the suite fail.
SuiteResult checkpoint_suite(bool corrupt_magic = false);

/// Runs every suite, prints one line per suite and returns true iff all pass.
bool run_selfcheck(std::ostream& os);

}  // namespace elastic::cli
