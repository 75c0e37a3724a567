#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gsdrag/camera.hpp"
#include "gsdrag/image.hpp"
#include "gsdrag/scene.hpp"

namespace gsdrag {

struct RenderSettings {
  /// Isotropic variance (px^2) added to every projected covariance.
  double covariance_floor = 0.3;
  /// Footprints are truncated outside this Mahalanobis radius.
  double cutoff_sigma = 3.0;
  /// Per-pixel compositing stops once transmittance drops below this.
  double min_transmittance = 1e-4;
  /// Primitives with camera depth at or below this are skipped.
  double near_plane = 0.01;
  Vec3 background = Vec3::Zero();
};

/// Rotation matrix of a (w, x, y, z) quaternion; the quaternion is
/// normalized first.
Mat3 rotation_matrix(const Vec4& q);
/// R diag(s^2) R^T.
Mat3 covariance_3d(const Vec4& rotation, const Vec3& log_scale);

struct ProjectedGaussian {
  bool visible = false;
  Vec2 mean = Vec2::Zero();
  /// EWA-projected covariance including the isotropic floor.
  Mat2 covariance = Mat2::Zero();
  double depth = 0.0;
};

ProjectedGaussian project_gaussian(const Camera& camera, const Vec4& rotation, const Vec3& log_scale,
                                   const Vec3& position, const RenderSettings& settings = {});

struct RenderOutput {
  Image rgb;    ///< H x W x 3
  Image alpha;  ///< H x W x 1, 1 - final transmittance
  /// Camera depth of the primitive at which accumulated alpha first reaches
  /// 0.5; 0 where it never does.
  Image depth;
};

/// Per-primitive screen-space footprint kept between forward and backward.
struct Splat {
  bool visible = false;
  Vec3 cam = Vec3::Zero();
  Vec2 mean = Vec2::Zero();
  /// Inverse of the floored 2D covariance: [[a, b], [b, c]].
  double conic_a = 0.0, conic_b = 0.0, conic_c = 0.0;
  double alpha = 0.0;
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
};

/// Forward-pass state consumed by render_backward. Only valid for the exact
/// inputs that produced it.
struct RenderTape {
  int width = 0;
  int height = 0;
  std::size_t primitive_count = 0;
  std::uint64_t generation = 0;
  RenderSettings settings;
  std::vector<Splat> splats;
  /// Candidate primitives per pixel in compositing order (CSR layout).
  std::vector<std::uint32_t> pixel_offsets;
  std::vector<std::uint32_t> pixel_candidates;
};

RenderOutput render(const GaussianScene& scene, std::span<const Vec3> shifts, const Camera& camera,
                    const RenderSettings& settings = {}, RenderTape* tape = nullptr);

/// Renders the scene with per-primitive colors replaced by `colors`.
RenderOutput render_with_colors(const GaussianScene& scene, std::span<const Vec3> shifts,
                                std::span<const Vec3> colors, const Camera& camera,
                                const RenderSettings& settings = {}, RenderTape* tape = nullptr);

struct RenderGradients {
  std::vector<Vec3> shift;
  std::vector<double> opacity_logit;
  std::vector<Vec3> color;
  std::vector<Vec3> log_scale;
  /// Gradient with respect to the stored (unnormalized) quaternion.
  std::vector<Vec4> rotation;

  explicit RenderGradients(std::size_t n = 0) { resize(n); }
  std::size_t size() const { return shift.size(); }
  void resize(std::size_t n);
  void set_zero();
  RenderGradients& operator+=(const RenderGradients& other);
};

/// Reverse-mode gradients of the rgb image for upstream gradient `d_rgb`
/// (H x W x 3). Throws std::logic_error when the tape does not belong to
/// these inputs or the image size differs.
RenderGradients render_backward(const RenderTape& tape, const GaussianScene& scene, std::span<const Vec3> shifts,
                                const Camera& camera, const Image& d_rgb);
/// Convenience overload that re-runs the forward pass.
RenderGradients render_backward(const GaussianScene& scene, std::span<const Vec3> shifts, const Camera& camera,
                                const Image& d_rgb, const RenderSettings& settings = {});

/// Smallest distance of the forward pass to one of its discontinuities: the
/// footprint cutoff (in squared Mahalanobis units) and the transmittance
/// cutoff (in log units). Finite-difference checks are only meaningful away
/// from both.
struct DiscontinuityMargin {
  double footprint = 0.0;
  double transmittance = 0.0;
};
DiscontinuityMargin discontinuity_margin(const GaussianScene& scene, std::span<const Vec3> shifts,
                                         const Camera& camera, const RenderSettings& settings = {});

struct Mask2D {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Mask2D() = default;
  Mask2D(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0) {}
  std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;
  Image to_image() const;
  bool operator==(const Mask2D&) const = default;
};

/// Composites the mask flag as a scalar color and thresholds it: a pixel is
/// set iff the composited value exceeds `threshold`.
Mask2D render_mask(const MirroredScene& mirrored, const Camera& camera, double threshold = 0.5,
                   const RenderSettings& settings = {});
Mask2D render_mask(const GaussianScene& scene, std::span<const Vec3> shifts, const Camera& camera,
                   double threshold = 0.5, const RenderSettings& settings = {});

/// Dilation with a (2 r + 1)^2 square structuring element.
Mask2D dilate_mask(const Mask2D& mask, int radius);
/// 10 px at a 512 px wide render, scaled proportionally.
int default_dilation_radius(int width);

}  // namespace gsdrag
