#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "gsdrag/scene.hpp"

namespace gsdrag {

/// Static 3D k-d tree over a point set.
class KdTree {
 public:
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  explicit KdTree(std::span<const Vec3> points);

  /// The k points nearest to `query` ordered by (squared distance, index),
  /// skipping index `exclude`.
  std::vector<std::size_t> nearest(const Vec3& query, std::size_t k, std::size_t exclude = kNone) const;

 private:
  struct Node {
    std::size_t point;
    int axis;
    int left = -1, right = -1;
  };
  int build(std::vector<std::size_t>& idx, std::size_t lo, std::size_t hi, int depth);

  std::vector<Vec3> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

/// Unmasked primitives among the k nearest neighbors (stored positions) of
/// any masked primitive, sorted and deduplicated.
std::vector<std::size_t> build_soft_group(const GaussianScene& scene, std::size_t k);

}  // namespace gsdrag
