#include "gsdrag/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "gsdrag/log.hpp"

namespace gsdrag {
namespace {

void require_same(const Latent& a, const Latent& b, const char* what) {
  if (!a.same_shape(b)) throw std::logic_error(std::string(what) + ": shape mismatch");
}

double clamp_ratio(double s, const char* what) {
  if (!(s >= 0.0 && s <= 1.0)) {
    warn(std::string(what) + ": epoch ratio " + std::to_string(s) + " clamped to [0, 1]");
    return std::isnan(s) ? 0.0 : std::clamp(s, 0.0, 1.0);
  }
  return s;
}

}  // namespace

DiffusionSchedule::DiffusionSchedule(int steps, double beta_start, double beta_end) {
  if (steps < 2) throw ConfigError("diffusion schedule needs at least 2 steps");
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end))
    throw ConfigError("diffusion schedule: betas must satisfy 0 < start <= end < 1");
  alpha_bar_.resize(static_cast<std::size_t>(steps));
  double prod = 1.0;
  for (int t = 0; t < steps; ++t) {
    const double beta = beta_start + (beta_end - beta_start) * t / (steps - 1);
    prod *= 1.0 - beta;
    alpha_bar_[static_cast<std::size_t>(t)] = prod;
  }
}

int DiffusionSchedule::step_for(double fraction) const {
  const long t = std::lround(fraction * steps());
  return static_cast<int>(std::clamp<long>(t, 0, steps() - 1));
}

double timestep_schedule(double s) {
  s = clamp_ratio(s, "timestep_schedule");
  if (s == 0.0) return kTimestepMax;
  if (s == 1.0) return kTimestepMin;
  return 0.5 * (kTimestepMax - kTimestepMin) * (1.0 + std::cos(std::numbers::pi * s)) + kTimestepMin;
}

double cfg_scale(double s) {
  s = clamp_ratio(s, "cfg_scale");
  return (kCfgMax - 1.0) * (1.0 - s) * (1.0 - s) + 1.0;
}

Latent add_noise(const Latent& z, double alpha_bar, const Latent& eps) {
  require_same(z, eps, "add_noise");
  const double a = std::sqrt(alpha_bar), b = std::sqrt(1.0 - alpha_bar);
  Latent out = z;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a * z.data[i] + b * eps.data[i];
  return out;
}

Latent denoised_estimate(const Latent& z_t, const Latent& eps_hat, double alpha_bar) {
  require_same(z_t, eps_hat, "denoised_estimate");
  if (!(alpha_bar > 0.0)) throw std::logic_error("denoised_estimate: alpha_bar must be positive");
  const double a = std::sqrt(alpha_bar), b = std::sqrt(1.0 - alpha_bar);
  Latent out = z_t;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = (z_t.data[i] - b * eps_hat.data[i]) / a;
  return out;
}

Latent composite_noise(const Latent& eps_tgt, const Latent& eps_src, const Latent& eps) {
  require_same(eps_tgt, eps_src, "composite_noise");
  require_same(eps_tgt, eps, "composite_noise");
  Latent out = eps;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = eps_tgt.data[i] - eps_src.data[i] + eps.data[i];
  return out;
}

Latent guided_estimate(const Latent& z, const Latent& eps_tgt, const Latent& eps_src, double alpha_bar) {
  require_same(z, eps_tgt, "guided_estimate");
  require_same(z, eps_src, "guided_estimate");
  if (!(alpha_bar > 0.0)) throw std::logic_error("guided_estimate: alpha_bar must be positive");
  const double k = std::sqrt(1.0 - alpha_bar) / std::sqrt(alpha_bar);
  Latent out = z;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = z.data[i] - k * (eps_tgt.data[i] - eps_src.data[i]);
  return out;
}

Latent standard_normal(int height, int width, int channels, std::uint64_t seed) {
  Latent out(height, width, channels);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : out.data) v = n(rng);
  return out;
}

}  // namespace gsdrag
