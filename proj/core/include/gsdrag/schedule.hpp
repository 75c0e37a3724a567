#pragma once

#include <cstdint>
#include <vector>

#include "gsdrag/image.hpp"
#include "gsdrag/types.hpp"

namespace gsdrag {

/// Discrete DDPM schedule with linearly spaced betas.
class DiffusionSchedule {
 public:
  explicit DiffusionSchedule(int steps = 1000, double beta_start = 1e-4, double beta_end = 2e-2);

  int steps() const { return static_cast<int>(alpha_bar_.size()); }
  double alpha_bar(int t) const { return alpha_bar_.at(static_cast<std::size_t>(t)); }
  /// Uniform: the loss weighting is carried by the explicit sqrt(abar) /
  /// sqrt(1 - abar) factor instead.
  double weight(int /*t*/) const { return 1.0; }
  /// round(fraction * T) clamped to a valid step.
  int step_for(double fraction) const;

 private:
  std::vector<double> alpha_bar_;
};

inline constexpr double kTimestepMax = 0.98;
inline constexpr double kTimestepMin = 0.02;
inline constexpr double kCfgMax = 4.0;

/// Cosine annealing of the timestep fraction over the epoch ratio s. Values
/// of s outside [0, 1] are clamped with a warning.
double timestep_schedule(double s);
/// Inverse-square CFG annealing, from kCfgMax at s = 0 down to 1 at s = 1.
double cfg_scale(double s);

Latent add_noise(const Latent& z, double alpha_bar, const Latent& eps);
Latent denoised_estimate(const Latent& z_t, const Latent& eps_hat, double alpha_bar);
/// eps_tgt - eps_src + eps.
Latent composite_noise(const Latent& eps_tgt, const Latent& eps_src, const Latent& eps);

/// Denoised estimate for z_t = add_noise(z, abar, eps) and the composite
/// noise built from (eps_tgt, eps_src, eps), written as
/// z - sqrt(1 - abar) / sqrt(abar) * (eps_tgt - eps_src). Algebraically the
/// same as denoised_estimate(z_t, composite_noise(...)), but exactly z when
/// the two predictions agree.
Latent guided_estimate(const Latent& z, const Latent& eps_tgt, const Latent& eps_src, double alpha_bar);

/// Standard-normal tensor drawn from a counter-seeded stream.
Latent standard_normal(int height, int width, int channels, std::uint64_t seed);

}  // namespace gsdrag
