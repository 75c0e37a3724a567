#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gsdrag/camera.hpp"
#include "gsdrag/codec.hpp"
#include "gsdrag/image.hpp"
#include "gsdrag/scene.hpp"

namespace gsdrag {

struct ControlPair2D {
  Vec2 handle = Vec2::Zero();
  Vec2 target = Vec2::Zero();
  /// False when either point projects behind the camera or outside the image.
  bool on_screen = true;
};

/// Everything a drag-conditioned diffusion model needs for one view.
struct GuidanceRequest {
  int camera = 0;
  Image image;       ///< current render, H x W x 3
  Image init_image;  ///< mirror render, H x W x 3
  Image mask;        ///< dilated mirror mask, H x W x 1 in {0, 1}
  std::vector<ControlPair2D> points;
  int step = 0;
  double alpha_bar = 1.0;
  Latent noise;  ///< eps, latent-shaped
  double cfg = 1.0;
  double epoch_ratio = 0.0;
  std::uint64_t seed = 0;
};

struct GuidanceResponse {
  Latent eps_tgt;
  Latent eps_src;
};

/// Source noise predictor. The base prediction is an exact denoiser of the
/// render it is conditioned on (latent z); a learnable residual sits on top of
/// it, one latent offset per camera plus one embedding value per channel shared
/// by all cameras, both starting at zero:
///   eps_phi = (z_t - sqrt(abar) (z + o_cam + y)) / sqrt(1 - abar).
class SourceEstimator {
 public:
  SourceEstimator() = default;
  SourceEstimator(int cameras, int latent_height, int latent_width, int channels);

  int camera_count() const { return cameras_; }
  int latent_height() const { return height_; }
  int latent_width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t offset_size() const { return static_cast<std::size_t>(height_) * width_ * channels_; }

  /// z + o_cam + y.
  Latent mean(int camera, const Latent& z) const;
  Latent predict_noise(int camera, const Latent& z, const Latent& z_t, double alpha_bar) const;

  std::span<double> offsets() { return offsets_; }
  std::span<const double> offsets() const { return offsets_; }
  std::span<double> embedding() { return embedding_; }
  std::span<const double> embedding() const { return embedding_; }

  void write(std::ostream& out) const;
  static SourceEstimator read(std::istream& in);
  bool operator==(const SourceEstimator&) const = default;

 private:
  void check(int camera, const Latent& z) const;

  int cameras_ = 0, height_ = 0, width_ = 0, channels_ = 0;
  std::vector<double> offsets_;
  std::vector<double> embedding_;
};

struct SourceEstimatorGradients {
  std::vector<double> offsets;
  std::vector<double> embedding;

  explicit SourceEstimatorGradients(const SourceEstimator& e)
      : offsets(e.offsets().size(), 0.0), embedding(e.embedding().size(), 0.0) {}
  void set_zero();
};

/// Mean-square error between the estimator's noise prediction at z_t and the
/// true noise; gradients (if requested) accumulate on estimator parameters
/// only. `z` is the render latent the estimator is conditioned on.
double source_estimator_loss(const SourceEstimator& est, int camera, const Latent& z, const Latent& z_t,
                             double alpha_bar, const Latent& eps, SourceEstimatorGradients* grads = nullptr);
/// Same loss for z_t = add_noise(z, abar, eps), evaluated without the noise:
/// the residual is -sqrt(abar) / sqrt(1 - abar) (o_cam + y).
double source_estimator_loss_clean(const SourceEstimator& est, int camera, const Latent& z, double alpha_bar,
                                   SourceEstimatorGradients* grads = nullptr);

/// Provider of (eps_tgt, eps_src) for a request. Implementations may be
/// called concurrently for different cameras.
class GuidanceOracle {
 public:
  virtual ~GuidanceOracle() = default;
  virtual GuidanceResponse predict(const GuidanceRequest& request, const SourceEstimator& estimator) const = 0;
  virtual std::string describe() const = 0;
};

/// Desk-scale stand-in for a drag LDM: the conditional branch denoises
/// toward a known target render of the request's camera, the unconditional
/// branch toward the current render. eps_src comes from the estimator.
class SyntheticOracle final : public GuidanceOracle {
 public:
  /// One target render per camera index.
  explicit SyntheticOracle(std::vector<Image> targets);
  /// Renders the target scene (no shifts) from every camera.
  static SyntheticOracle from_scene(const GaussianScene& target, std::span<const Camera> cameras);

  GuidanceResponse predict(const GuidanceRequest& request, const SourceEstimator& estimator) const override;
  std::string describe() const override { return "synthetic"; }
  const std::vector<Image>& targets() const { return targets_; }

 private:
  std::vector<Image> targets_;
  std::vector<Latent> target_latents_;
  LatentCodec codec_;
};

struct LossWeights {
  double latent = 1.0;
  double image = 0.1;
  double source = 1.0;
  double drag_sds = 1.0;
  double region = 2500.0;
};

struct DragSdsTerms {
  double latent = 0.0;
  double image = 0.0;
  Latent grad_latent;  ///< d(latent)/dz
  Image grad_image;    ///< d(image)/dx
};

/// L_lat = w sqrt(abar)/sqrt(1-abar) ||z - z_hat||^2 and the same weighting
/// of ||x - x_hat||^2. z_hat and x_hat are constants. Throws std::logic_error
/// on a shape mismatch.
DragSdsTerms drag_sds_losses(const Latent& z, const Image& x, const Latent& z_hat, const Image& x_hat,
                             double alpha_bar, double weight = 1.0);

}  // namespace gsdrag
