#include "gsdrag/guidance.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "gsdrag/binary_io.hpp"
#include "gsdrag/render.hpp"
#include "gsdrag/schedule.hpp"

namespace gsdrag {
namespace {

constexpr std::string_view kEstimatorMagic = "GSDSRCE";
constexpr std::uint32_t kEstimatorVersion = 1;

void require_shape(const Tensor3& a, const Tensor3& b, const char* what) {
  if (!a.same_shape(b)) throw std::logic_error(std::string(what) + ": shape mismatch");
}

}  // namespace

SourceEstimator::SourceEstimator(int cameras, int latent_height, int latent_width, int channels)
    : cameras_(cameras), height_(latent_height), width_(latent_width), channels_(channels) {
  if (cameras < 1 || latent_height < 1 || latent_width < 1 || channels < 1)
    throw ConfigError("source estimator: dimensions must be positive");
  offsets_.assign(static_cast<std::size_t>(cameras) * offset_size(), 0.0);
  embedding_.assign(static_cast<std::size_t>(channels), 0.0);
}

void SourceEstimator::check(int camera, const Latent& z) const {
  if (camera < 0 || camera >= cameras_)
    throw std::out_of_range("source estimator: camera " + std::to_string(camera) + " out of range");
  if (z.height != height_ || z.width != width_ || z.channels != channels_)
    throw std::logic_error("source estimator: latent shape mismatch");
}

Latent SourceEstimator::mean(int camera, const Latent& z) const {
  check(camera, z);
  Latent m = z;
  const double* o = offsets_.data() + camera * offset_size();
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] += o[i] + embedding_[i % channels_];
  return m;
}

Latent SourceEstimator::predict_noise(int camera, const Latent& z, const Latent& z_t, double alpha_bar) const {
  Latent m = mean(camera, z);
  require_shape(m, z_t, "source estimator");
  const double a = std::sqrt(alpha_bar), b = std::sqrt(1.0 - alpha_bar);
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = (z_t.data[i] - a * m.data[i]) / b;
  return m;
}

void SourceEstimator::write(std::ostream& out) const {
  bin::write_magic(out, kEstimatorMagic, kEstimatorVersion);
  for (int v : {cameras_, height_, width_, channels_}) bin::write_u32(out, static_cast<std::uint32_t>(v));
  bin::write_f64s(out, offsets_);
  bin::write_f64s(out, embedding_);
}

SourceEstimator SourceEstimator::read(std::istream& in) {
  bin::read_magic(in, kEstimatorMagic, kEstimatorVersion);
  int dims[4];
  for (int& d : dims) d = static_cast<int>(bin::read_u32(in));
  SourceEstimator e;
  try {
    e = SourceEstimator(dims[0], dims[1], dims[2], dims[3]);
  } catch (const ConfigError& err) {
    throw FormatError(std::string("estimator checkpoint: ") + err.what());
  }
  auto offsets = bin::read_f64s(in);
  auto embedding = bin::read_f64s(in);
  if (offsets.size() != e.offsets_.size() || embedding.size() != e.embedding_.size())
    throw FormatError("estimator checkpoint: size mismatch");
  e.offsets_ = std::move(offsets);
  e.embedding_ = std::move(embedding);
  return e;
}

void SourceEstimatorGradients::set_zero() {
  std::fill(offsets.begin(), offsets.end(), 0.0);
  std::fill(embedding.begin(), embedding.end(), 0.0);
}

namespace {

// Shared tail of both loss forms: `residual` is eps_phi - eps.
double accumulate_source_loss(const SourceEstimator& est, int camera, const std::vector<double>& residual,
                              double alpha_bar, SourceEstimatorGradients* grads) {
  const double n = static_cast<double>(residual.size());
  double loss = 0.0;
  for (double r : residual) loss += r * r;
  loss /= n;
  if (grads) {
    if (grads->offsets.size() != est.offsets().size() || grads->embedding.size() != est.embedding().size())
      throw std::invalid_argument("source estimator gradients: buffer size");
    // d eps_phi / d mean = -sqrt(abar) / sqrt(1 - abar)
    const double k = -std::sqrt(alpha_bar) / std::sqrt(1.0 - alpha_bar);
    double* d_mu = grads->offsets.data() + camera * est.offset_size();
    const auto channels = static_cast<std::size_t>(est.channels());
    for (std::size_t i = 0; i < residual.size(); ++i) {
      const double g = 2.0 * residual[i] / n * k;
      d_mu[i] += g;
      grads->embedding[i % channels] += g;
    }
  }
  return loss;
}

}  // namespace

double source_estimator_loss(const SourceEstimator& est, int camera, const Latent& z, const Latent& z_t,
                             double alpha_bar, const Latent& eps, SourceEstimatorGradients* grads) {
  const Latent pred = est.predict_noise(camera, z, z_t, alpha_bar);
  require_shape(pred, eps, "source_estimator_loss");
  std::vector<double> residual(pred.data.size());
  for (std::size_t i = 0; i < residual.size(); ++i) residual[i] = pred.data[i] - eps.data[i];
  return accumulate_source_loss(est, camera, residual, alpha_bar, grads);
}

double source_estimator_loss_clean(const SourceEstimator& est, int camera, const Latent& z, double alpha_bar,
                                   SourceEstimatorGradients* grads) {
  const Latent m = est.mean(camera, z);
  const double k = std::sqrt(alpha_bar) / std::sqrt(1.0 - alpha_bar);
  std::vector<double> residual(m.data.size());
  for (std::size_t i = 0; i < residual.size(); ++i) residual[i] = k * (z.data[i] - m.data[i]);
  return accumulate_source_loss(est, camera, residual, alpha_bar, grads);
}

SyntheticOracle::SyntheticOracle(std::vector<Image> targets) : targets_(std::move(targets)) {
  target_latents_.reserve(targets_.size());
  for (const auto& t : targets_) target_latents_.push_back(codec_.encode(t));
}

SyntheticOracle SyntheticOracle::from_scene(const GaussianScene& target, std::span<const Camera> cameras) {
  std::vector<Image> images;
  const std::vector<Vec3> zero(target.size(), Vec3::Zero());
  for (const auto& cam : cameras) images.push_back(render(target, zero, cam).rgb);
  return SyntheticOracle(std::move(images));
}

GuidanceResponse SyntheticOracle::predict(const GuidanceRequest& req, const SourceEstimator& estimator) const {
  if (req.camera < 0 || static_cast<std::size_t>(req.camera) >= targets_.size())
    throw ConfigError("synthetic guidance: no target view for camera " + std::to_string(req.camera));
  const Image& target = targets_[static_cast<std::size_t>(req.camera)];
  if (!target.same_shape(req.image))
    throw ConfigError("synthetic guidance: target view " + std::to_string(req.camera) + " has a different size");
  const Latent z = codec_.encode(req.image);
  const Latent z_t = add_noise(z, req.alpha_bar, req.noise);
  const Latent& z_tgt = target_latents_[static_cast<std::size_t>(req.camera)];

  const double a = std::sqrt(req.alpha_bar), b = std::sqrt(1.0 - req.alpha_bar);
  GuidanceResponse out{z_t, z_t};
  for (std::size_t i = 0; i < z_t.data.size(); ++i) {
    const double eps_c = (z_t.data[i] - a * z_tgt.data[i]) / b;
    const double eps_u = (z_t.data[i] - a * z.data[i]) / b;
    out.eps_tgt.data[i] = req.cfg * (eps_c - eps_u) + eps_u;
  }
  out.eps_src = estimator.predict_noise(req.camera, z, z_t, req.alpha_bar);
  return out;
}

DragSdsTerms drag_sds_losses(const Latent& z, const Image& x, const Latent& z_hat, const Image& x_hat,
                             double alpha_bar, double weight) {
  require_shape(z, z_hat, "drag_sds_losses (latent)");
  require_shape(x, x_hat, "drag_sds_losses (image)");
  const double k = weight * std::sqrt(alpha_bar) / std::sqrt(1.0 - alpha_bar);
  DragSdsTerms out{0.0, 0.0, Latent(z.height, z.width, z.channels), Image(x.height, x.width, x.channels)};
  for (std::size_t i = 0; i < z.data.size(); ++i) {
    const double d = z.data[i] - z_hat.data[i];
    out.latent += d * d;
    out.grad_latent.data[i] = 2.0 * k * d;
  }
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double d = x.data[i] - x_hat.data[i];
    out.image += d * d;
    out.grad_image.data[i] = 2.0 * k * d;
  }
  out.latent *= k;
  out.image *= k;
  return out;
}

}  // namespace gsdrag
