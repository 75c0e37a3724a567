#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "gsdrag/types.hpp"

namespace gsdrag {

/// SH degree-0 constant relating the stored DC coefficient to RGB:
/// color = 0.5 + kShC0 * f_dc.
inline constexpr double kShC0 = 0.28209479177387814;

double sigmoid(double x);
double logit(double p);

/// One anisotropic Gaussian, unpacked from the scene's attribute arrays.
struct GaussianPrimitive {
  Vec3 position = Vec3::Zero();
  /// (w, x, y, z); normalized whenever it enters a scene.
  Vec4 rotation{1.0, 0.0, 0.0, 0.0};
  Vec3 log_scale = Vec3::Zero();
  double opacity_logit = 0.0;
  Vec3 color = Vec3::Zero();
  bool masked = false;

  Vec3 scale() const { return log_scale.array().exp(); }
  double opacity() const { return sigmoid(opacity_logit); }
};

/// Masked Gaussian scene stored as one contiguous array per attribute so that
/// per-group optimizers can step whole arrays at once.
class GaussianScene {
 public:
  GaussianScene() = default;

  std::size_t size() const { return positions_.size(); }
  bool empty() const { return positions_.empty(); }

  void reserve(std::size_t n);
  /// Appends a primitive; the rotation is normalized on the way in.
  std::size_t push_back(const GaussianPrimitive& g);
  GaussianPrimitive primitive(std::size_t i) const;

  std::vector<Vec3>& positions() { return positions_; }
  const std::vector<Vec3>& positions() const { return positions_; }
  std::vector<Vec4>& rotations() { return rotations_; }
  const std::vector<Vec4>& rotations() const { return rotations_; }
  std::vector<Vec3>& log_scales() { return log_scales_; }
  const std::vector<Vec3>& log_scales() const { return log_scales_; }
  std::vector<double>& opacity_logits() { return opacity_logits_; }
  const std::vector<double>& opacity_logits() const { return opacity_logits_; }
  std::vector<Vec3>& colors() { return colors_; }
  const std::vector<Vec3>& colors() const { return colors_; }
  std::vector<std::uint8_t>& mask() { return mask_; }
  const std::vector<std::uint8_t>& mask() const { return mask_; }

  /// Tight bounds of all positions; the degenerate box at the origin when
  /// empty.
  Aabb bounds() const;
  /// Bounds with every degenerate axis widened by 1e-3 on each side, usable
  /// for normalization.
  Aabb normalization_box() const;

  /// Incremented on every structural change (append, removal).
  std::uint64_t generation() const { return generation_; }

  /// Keeps primitives whose flag is true, preserving order.
  void retain(std::span<const bool> keep);
  void normalize_rotations();

  bool operator==(const GaussianScene& other) const;

 private:
  std::vector<Vec3> positions_;
  std::vector<Vec4> rotations_;
  std::vector<Vec3> log_scales_;
  std::vector<double> opacity_logits_;
  std::vector<Vec3> colors_;
  std::vector<std::uint8_t> mask_;
  std::uint64_t generation_ = 0;
};

/// Frozen copy of a scene taken at edit start. Cheap to share between readers.
class MirroredScene {
 public:
  MirroredScene() : scene_(std::make_shared<const GaussianScene>()) {}
  explicit MirroredScene(GaussianScene scene)
      : scene_(std::make_shared<const GaussianScene>(std::move(scene))) {}

  const GaussianScene& scene() const { return *scene_; }
  std::size_t size() const { return scene_->size(); }

 private:
  std::shared_ptr<const GaussianScene> scene_;
};

struct Partition {
  std::vector<std::size_t> masked;
  std::vector<std::size_t> unmasked;
};

Partition partition(const GaussianScene& scene);
MirroredScene mirror(const GaussianScene& scene);
/// Flags every listed primitive as masked. Throws std::out_of_range on an
/// index past the end.
void mark_new_primitives_masked(GaussianScene& scene, std::span<const std::size_t> new_indices);

}  // namespace gsdrag
