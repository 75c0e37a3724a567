#include "gsdrag/codec.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gsdrag {
namespace {

constexpr int F = LatentCodec::kFactor;

/// Source taps along one axis for output index i at 8x upsampling.
struct AxisTap {
  int i0, i1;
  double w1;
};

AxisTap axis_tap(int i, int n) {
  const double src = std::clamp((i + 0.5) / F - 0.5, 0.0, static_cast<double>(n - 1));
  const int i0 = static_cast<int>(std::floor(src));
  const int i1 = std::min(i0 + 1, n - 1);
  return {i0, i1, src - i0};
}

}  // namespace

Latent LatentCodec::encode(const Image& image) const {
  if (image.height % F != 0 || image.width % F != 0 || image.height == 0 || image.width == 0)
    throw ConfigError("latent codec: image size " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                      " is not a positive multiple of 8");
  Latent z(image.height / F, image.width / F, image.channels);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < image.channels; ++c) z(y / F, x / F, c) += image(y, x, c);
  for (double& v : z.data) v /= F * F;
  return z;
}

Image LatentCodec::decode(const Latent& z) const {
  Image out(z.height * F, z.width * F, z.channels);
  for (int y = 0; y < out.height; ++y) {
    const AxisTap ty = axis_tap(y, z.height);
    for (int x = 0; x < out.width; ++x) {
      const AxisTap tx = axis_tap(x, z.width);
      for (int c = 0; c < z.channels; ++c) {
        const double top = (1 - tx.w1) * z(ty.i0, tx.i0, c) + tx.w1 * z(ty.i0, tx.i1, c);
        const double bottom = (1 - tx.w1) * z(ty.i1, tx.i0, c) + tx.w1 * z(ty.i1, tx.i1, c);
        out(y, x, c) = (1 - ty.w1) * top + ty.w1 * bottom;
      }
    }
  }
  return out;
}

Image LatentCodec::encode_adjoint(const Latent& d) const {
  Image out(d.height * F, d.width * F, d.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < d.channels; ++c) out(y, x, c) = d(y / F, x / F, c) / (F * F);
  return out;
}

Latent LatentCodec::decode_adjoint(const Image& d) const {
  if (d.height % F != 0 || d.width % F != 0) throw ConfigError("latent codec: image size is not a multiple of 8");
  Latent out(d.height / F, d.width / F, d.channels);
  for (int y = 0; y < d.height; ++y) {
    const AxisTap ty = axis_tap(y, out.height);
    for (int x = 0; x < d.width; ++x) {
      const AxisTap tx = axis_tap(x, out.width);
      for (int c = 0; c < d.channels; ++c) {
        const double g = d(y, x, c);
        out(ty.i0, tx.i0, c) += (1 - ty.w1) * (1 - tx.w1) * g;
        out(ty.i0, tx.i1, c) += (1 - ty.w1) * tx.w1 * g;
        out(ty.i1, tx.i0, c) += ty.w1 * (1 - tx.w1) * g;
        out(ty.i1, tx.i1, c) += ty.w1 * tx.w1 * g;
      }
    }
  }
  return out;
}

}  // namespace gsdrag
