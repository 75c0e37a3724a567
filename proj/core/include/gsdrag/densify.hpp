#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "gsdrag/scene.hpp"

namespace gsdrag {

struct DensifySettings {
  /// Clone or split when the mean shift-gradient norm exceeds this.
  double grad_threshold = 2e-4;
  /// Prune when sigmoid(opacity) falls below this.
  double min_opacity = 0.05;
  /// Split children get the parent's scale divided by this.
  double split_factor = 1.6;
  /// Primitives whose largest scale exceeds dense_extent * scene extent are
  /// split; smaller ones are cloned.
  double dense_extent = 0.01;
  /// Stage-2 iterations between densify events.
  int interval = 100;
};

struct DensifyReport {
  static constexpr std::size_t kNoParent = std::numeric_limits<std::size_t>::max();

  std::size_t before = 0;
  std::size_t after = 0;
  std::vector<std::size_t> cloned;  ///< indices before the event
  std::vector<std::size_t> split;
  std::vector<std::size_t> pruned;
  /// Indices after the event of every primitive the event created.
  std::vector<std::size_t> created;
  /// For each primitive after the event: its index before the event if it
  /// survived unchanged, kNoParent if it was created.
  std::vector<std::size_t> origin;

  bool changed() const { return before != after || !created.empty(); }
};

/// One densify/prune event over the primitives flagged `eligible`:
///  - opacity below min_opacity: removed;
///  - otherwise, mean gradient norm above grad_threshold: cloned (a copy
///    offset by half a standard deviation along the largest axis) when small,
///    split into two children at +-1 standard deviation along the largest
///    axis with scale / split_factor when large. A split parent is removed.
/// Survivors keep their order; created primitives are appended in parent
/// order and flagged masked. `extent` is the scene size used by the
/// clone/split rule.
DensifyReport densify_and_prune(GaussianScene& scene, std::span<const double> mean_grad_norms,
                                std::span<const std::uint8_t> eligible, double extent,
                                const DensifySettings& settings);

}  // namespace gsdrag
