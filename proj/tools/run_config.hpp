#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gsdrag/edit_spec.hpp"

namespace gsdrag::cli {

// Exit codes shared by every command.
inline constexpr int kOk = 0;
inline constexpr int kPipelineFailure = 1;
inline constexpr int kUsage = 2;
inline constexpr int kEnvironment = 3;

struct RunConfig {
  std::string scene;
  std::string cameras;
  std::string spec;
  std::string out;
  std::string guidance;
  std::string resume;
  std::optional<std::uint64_t> seed;
  /// Edit-spec fragment applied on top of the spec file.
  nlohmann::json overrides = nlohmann::json::object();
};

/// Reads a JSON config with the RunConfig keys (scene, cameras, spec, out,
/// seed, guidance, resume, overrides). Relative paths resolve against the
/// config file's directory. Throws ConfigError.
RunConfig load_run_config(const std::filesystem::path& path);

/// Fields set in `flags` win over `file`; override fragments are merged.
RunConfig layer(const RunConfig& file, const RunConfig& flags);

/// Defaults, then the spec file, then the overrides, then the seed.
EditSpec resolve_edit_spec(const RunConfig& cfg);

/// Hyperparameter flags (--iters, --lambda-rr, ...). Call collect() after
/// parsing to turn the given ones into an override fragment.
class HyperparameterFlags {
 public:
  void attach(CLI::App& app);
  nlohmann::json collect() const;

 private:
  struct Flag {
    std::string pointer;
    bool integer = false;
    CLI::Option* option = nullptr;
    double value = 0.0;
  };
  std::vector<Flag> flags_;
  std::vector<int> resolutions_;
  CLI::Option* resolutions_option_ = nullptr;
};

}  // namespace gsdrag::cli
