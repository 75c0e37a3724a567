#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "gsdrag/mlp.hpp"
#include "gsdrag/scene.hpp"
#include "gsdrag/types.hpp"

namespace gsdrag {

struct TriplaneConfig {
  std::vector<int> resolutions{32, 64, 128};
  int feature_dim = 16;
  int fusion_width = 64;
  int fusion_hidden_layers = 2;
  int decoder_width = 64;
  int decoder_hidden_layers = 2;
  /// Plane features start uniform in [-plane_init, plane_init].
  double plane_init = 1e-4;
};

enum class PlaneAxis : int { XY = 0, XZ = 1, YZ = 2 };

/// Affine map of `box` onto [-1, 1]^3; coordinates outside the box clamp to
/// +-1.
Vec3 normalize_position(const Vec3& p, const Aabb& box);

/// Coordinate pair a normalized point projects to on one plane.
Vec2 project_to_plane(const Vec3& normalized, PlaneAxis plane);

/// The four grid cells (row-major cell index) and weights a bilinear sample
/// touches. Align-corners convention: uv = -1 / +1 hit the first / last cell
/// centers exactly; out-of-range uv is clamped.
struct BilinearTaps {
  std::array<int, 4> cell{};
  std::array<double, 4> weight{};
};
BilinearTaps bilinear_taps(int resolution, const Vec2& uv);

/// Bilinear sample of a resolution x resolution x F grid (row = v, column =
/// u, features innermost).
void sample_plane(std::span<const double> grid, int resolution, int feature_dim, const Vec2& uv,
                  std::span<double> out);

/// Three orthogonal feature planes per scale.
class TriplaneField {
 public:
  TriplaneField() = default;
  TriplaneField(std::vector<int> resolutions, int feature_dim);

  const std::vector<int>& resolutions() const { return resolutions_; }
  int feature_dim() const { return feature_dim_; }
  std::size_t scale_count() const { return resolutions_.size(); }

  /// All planes in one buffer, ordered scale-major then XY, XZ, YZ.
  std::span<double> parameters() { return data_; }
  std::span<const double> parameters() const { return data_; }
  std::size_t plane_offset(std::size_t scale, PlaneAxis plane) const;
  std::span<double> plane(std::size_t scale, PlaneAxis plane);
  std::span<const double> plane(std::size_t scale, PlaneAxis plane) const;

 private:
  std::vector<int> resolutions_;
  int feature_dim_ = 0;
  std::vector<std::size_t> scale_offsets_;
  std::vector<double> data_;
};

/// Gradient buffers laid out exactly like DeformationModel's parameters.
struct ModelGradients {
  std::vector<double> planes;
  std::vector<double> fusion;
  std::vector<double> masked_decoder;
  std::vector<double> unmasked_decoder;

  void set_zero();
};

/// Forward activations kept for DeformationModel::backward.
struct DeformTape {
  std::size_t count = 0;
  std::vector<std::uint8_t> masked;
  std::vector<int> masked_rows;
  std::vector<int> unmasked_rows;
  /// Per primitive, per scale, per plane: the bilinear taps and the sampled
  /// feature vector.
  std::vector<BilinearTaps> taps;
  std::vector<double> samples;
  MlpTape fusion;
  MlpTape masked_decoder;
  MlpTape unmasked_decoder;
};

/// Triplane positional encoder plus the two region-specific shift decoders.
///
/// Masked primitives get shift N1(f), with gradients reaching N1, the fusion
/// network and the planes. Unmasked primitives get sg(N1(f)) + N2(sg(f)):
/// their gradients reach N2 only.
class DeformationModel {
 public:
  DeformationModel() = default;
  DeformationModel(const TriplaneConfig& config, const Aabb& box, std::uint64_t seed);

  const TriplaneConfig& config() const { return config_; }
  const Aabb& box() const { return box_; }
  int encoding_width() const { return static_cast<int>(field_.scale_count()) * field_.feature_dim(); }
  int feature_width() const { return fusion_.output_width(); }

  TriplaneField& field() { return field_; }
  const TriplaneField& field() const { return field_; }
  Mlp& fusion() { return fusion_; }
  const Mlp& fusion() const { return fusion_; }
  Mlp& masked_decoder() { return masked_decoder_; }
  const Mlp& masked_decoder() const { return masked_decoder_; }
  Mlp& unmasked_decoder() { return unmasked_decoder_; }
  const Mlp& unmasked_decoder() const { return unmasked_decoder_; }

  /// Concatenation over scales of the Hadamard product of the three plane
  /// samples at the normalized point.
  Eigen::VectorXd multiscale_features(const Vec3& normalized) const;
  /// Fused feature f for a world-space point.
  Eigen::VectorXd encode(const Vec3& p) const;
  /// The decoders work in the encoder's normalized frame; their outputs are
  /// multiplied by this (half the longest box side) to get world units.
  double shift_scale() const;
  /// Forward value of the routed decoder for one feature vector.
  Vec3 decode_shift(const Eigen::VectorXd& f, bool masked) const;

  /// One shift per position, routed by the mask flag.
  std::vector<Vec3> deform(std::span<const Vec3> positions, std::span<const std::uint8_t> mask,
                           DeformTape* tape = nullptr) const;
  std::vector<Vec3> deform(const GaussianScene& scene, DeformTape* tape = nullptr) const {
    return deform(scene.positions(), scene.mask(), tape);
  }

  ModelGradients zero_gradients() const;
  /// Accumulates gradients for upstream d(loss)/d(shift) into `grads`.
  void backward(const DeformTape& tape, std::span<const Vec3> d_shifts, ModelGradients& grads) const;

  void save(const std::filesystem::path& path) const;
  static DeformationModel load(const std::filesystem::path& path);
  void write(std::ostream& out) const;
  static DeformationModel read(std::istream& in);

 private:
  TriplaneConfig config_;
  Aabb box_;
  TriplaneField field_;
  Mlp fusion_;
  Mlp masked_decoder_;
  Mlp unmasked_decoder_;
};

std::vector<Vec3> deform_scene(const GaussianScene& scene, const DeformationModel& model);

/// Mean L2 norm of the shifts; 0 for an empty set.
double region_reg_loss(std::span<const Vec3> unmasked_shifts);
/// d(region_reg_loss)/d(shift), taking 0 at a zero shift.
std::vector<Vec3> region_reg_gradient(std::span<const Vec3> unmasked_shifts);

}  // namespace gsdrag
