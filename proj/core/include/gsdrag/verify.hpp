#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gsdrag {

struct CheckResult {
  std::string suite;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// schedules, gradients, routing, oracles, protocol.
std::vector<std::string> verify_suite_names();

/// Runs one suite ("all" runs every suite); nullopt for an unknown name.
std::optional<std::vector<CheckResult>> run_verify_suite(std::string_view name, std::uint64_t seed = 1);

}  // namespace gsdrag
