#include "gsdrag/scene.hpp"

#include <cmath>

namespace gsdrag {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) { return std::log(p / (1.0 - p)); }

void GaussianScene::reserve(std::size_t n) {
  positions_.reserve(n);
  rotations_.reserve(n);
  log_scales_.reserve(n);
  opacity_logits_.reserve(n);
  colors_.reserve(n);
  mask_.reserve(n);
}

std::size_t GaussianScene::push_back(const GaussianPrimitive& g) {
  positions_.push_back(g.position);
  const double n = g.rotation.norm();
  rotations_.push_back(n > 0.0 ? Vec4(g.rotation / n) : Vec4(1.0, 0.0, 0.0, 0.0));
  log_scales_.push_back(g.log_scale);
  opacity_logits_.push_back(g.opacity_logit);
  colors_.push_back(g.color);
  mask_.push_back(g.masked ? 1 : 0);
  ++generation_;
  return positions_.size() - 1;
}

GaussianPrimitive GaussianScene::primitive(std::size_t i) const {
  GaussianPrimitive g;
  g.position = positions_.at(i);
  g.rotation = rotations_[i];
  g.log_scale = log_scales_[i];
  g.opacity_logit = opacity_logits_[i];
  g.color = colors_[i];
  g.masked = mask_[i] != 0;
  return g;
}

Aabb GaussianScene::bounds() const {
  Aabb box;
  if (positions_.empty()) return box;
  box.min = box.max = positions_.front();
  for (const Vec3& p : positions_) {
    box.min = box.min.cwiseMin(p);
    box.max = box.max.cwiseMax(p);
  }
  return box;
}

Aabb GaussianScene::normalization_box() const {
  Aabb box = bounds();
  for (int a = 0; a < 3; ++a) {
    if (box.max[a] - box.min[a] < 1e-3) {
      box.min[a] -= 1e-3;
      box.max[a] += 1e-3;
    }
  }
  return box;
}

void GaussianScene::retain(std::span<const bool> keep) {
  if (keep.size() != size()) throw std::invalid_argument("retain: flag count does not match scene size");
  std::size_t w = 0;
  for (std::size_t r = 0; r < keep.size(); ++r) {
    if (!keep[r]) continue;
    positions_[w] = positions_[r];
    rotations_[w] = rotations_[r];
    log_scales_[w] = log_scales_[r];
    opacity_logits_[w] = opacity_logits_[r];
    colors_[w] = colors_[r];
    mask_[w] = mask_[r];
    ++w;
  }
  if (w == keep.size()) return;
  positions_.resize(w);
  rotations_.resize(w);
  log_scales_.resize(w);
  opacity_logits_.resize(w);
  colors_.resize(w);
  mask_.resize(w);
  ++generation_;
}

void GaussianScene::normalize_rotations() {
  for (Vec4& q : rotations_) {
    const double n = q.norm();
    q = n > 0.0 ? Vec4(q / n) : Vec4(1.0, 0.0, 0.0, 0.0);
  }
}

bool GaussianScene::operator==(const GaussianScene& o) const {
  return positions_ == o.positions_ && rotations_ == o.rotations_ && log_scales_ == o.log_scales_ &&
         opacity_logits_ == o.opacity_logits_ && colors_ == o.colors_ && mask_ == o.mask_;
}

Partition partition(const GaussianScene& scene) {
  Partition p;
  const auto& mask = scene.mask();
  for (std::size_t i = 0; i < mask.size(); ++i) (mask[i] ? p.masked : p.unmasked).push_back(i);
  return p;
}

MirroredScene mirror(const GaussianScene& scene) { return MirroredScene(scene); }

void mark_new_primitives_masked(GaussianScene& scene, std::span<const std::size_t> new_indices) {
  for (std::size_t i : new_indices) {
    if (i >= scene.size())
      throw std::out_of_range("mark_new_primitives_masked: index " + std::to_string(i) + " out of range");
  }
  for (std::size_t i : new_indices) scene.mask()[i] = 1;
}

}  // namespace gsdrag
