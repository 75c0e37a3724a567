#include "gsdrag/knn.hpp"

#include <algorithm>
#include <queue>
#include <utility>

namespace gsdrag {

KdTree::KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
  std::vector<std::size_t> idx(points_.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  nodes_.reserve(points_.size());
  root_ = build(idx, 0, idx.size(), 0);
}

int KdTree::build(std::vector<std::size_t>& idx, std::size_t lo, std::size_t hi, int depth) {
  if (lo >= hi) return -1;
  const int axis = depth % 3;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::nth_element(idx.begin() + static_cast<std::ptrdiff_t>(lo), idx.begin() + static_cast<std::ptrdiff_t>(mid),
                   idx.begin() + static_cast<std::ptrdiff_t>(hi), [&](std::size_t a, std::size_t b) {
                     return std::pair(points_[a][axis], a) < std::pair(points_[b][axis], b);
                   });
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({idx[mid], axis});
  const int l = build(idx, lo, mid, depth + 1);
  const int r = build(idx, mid + 1, hi, depth + 1);
  nodes_[static_cast<std::size_t>(id)].left = l;
  nodes_[static_cast<std::size_t>(id)].right = r;
  return id;
}

std::vector<std::size_t> KdTree::nearest(const Vec3& query, std::size_t k, std::size_t exclude) const {
  using Entry = std::pair<double, std::size_t>;  // max-heap on (distance^2, index)
  std::priority_queue<Entry> heap;
  if (k == 0) return {};

  auto visit = [&](auto&& self, int node) -> void {
    if (node < 0) return;
    const Node& n = nodes_[static_cast<std::size_t>(node)];
    const Vec3& p = points_[n.point];
    if (n.point != exclude) {
      const Entry e{(p - query).squaredNorm(), n.point};
      if (heap.size() < k) {
        heap.push(e);
      } else if (e < heap.top()) {
        heap.pop();
        heap.push(e);
      }
    }
    const double diff = query[n.axis] - p[n.axis];
    const int near = diff < 0 ? n.left : n.right;
    const int far = diff < 0 ? n.right : n.left;
    self(self, near);
    // Equal distances still need the far side so index tie-breaks stay exact.
    if (heap.size() < k || diff * diff <= heap.top().first) self(self, far);
  };
  visit(visit, root_);

  std::vector<Entry> found;
  while (!heap.empty()) {
    found.push_back(heap.top());
    heap.pop();
  }
  std::sort(found.begin(), found.end());
  std::vector<std::size_t> out;
  for (const auto& e : found) out.push_back(e.second);
  return out;
}

std::vector<std::size_t> build_soft_group(const GaussianScene& scene, std::size_t k) {
  const auto& mask = scene.mask();
  if (k == 0 || scene.empty()) return {};
  const KdTree tree(scene.positions());
  std::vector<std::uint8_t> in_group(scene.size(), 0);
  for (std::size_t i = 0; i < scene.size(); ++i) {
    if (!mask[i]) continue;
    for (std::size_t j : tree.nearest(scene.positions()[i], k, i))
      if (!mask[j]) in_group[j] = 1;
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < in_group.size(); ++i)
    if (in_group[i]) out.push_back(i);
  return out;
}

}  // namespace gsdrag
