#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include <json.hpp>

#include "flexdti/flexdti_net.hpp"
#include "flexdti/phantom.hpp"

namespace flexdti::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

/// Experiment description shared by the phantom, train and eval subcommands.
struct RunConfig {
  std::uint64_t seed = 0;
  PhantomSpec phantom;
  /// Slice k uses layouts[k % size].
  std::vector<Layout> layouts{Layout::Mixed};
  int scheme_directions = 90;
  double b_value = 1000.0;
  int n_b0 = 1;
  int train_pool = 50;
  NoiseModel noise;
  int train_slices = 8;
  int val_slices = 2;
  int test_slices = 2;
  NetConfig net;
  bool net_seed_set = false;
  /// Absolute, or relative to the config file's directory.
  std::filesystem::path output = "run";

  /// Throws InvalidArgument.
  void validate() const;
};

/// Unknown keys at any level throw InvalidArgument naming the key.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

/// Runs one subcommand. Progress goes to `err`, human-readable results to `out`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace flexdti::cli
