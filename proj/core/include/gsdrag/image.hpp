#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace gsdrag {

/// Dense H x W x C tensor of doubles, row-major with channels innermost. Used
/// for rendered images, gradients and diffusion latents alike.
struct Tensor3 {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

  std::size_t size() const { return data.size(); }
  bool same_shape(const Tensor3& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  std::size_t index(int y, int x, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  double& operator()(int y, int x, int c = 0) { return data[index(y, x, c)]; }
  double operator()(int y, int x, int c = 0) const { return data[index(y, x, c)]; }

  bool operator==(const Tensor3&) const = default;
};

using Image = Tensor3;
using Latent = Tensor3;

/// 8-bit PNG encoding of a 1- or 3-channel image with values clamped to
/// [0, 1].
std::vector<std::uint8_t> encode_png(const Image& image);
void write_png(const Image& image, const std::filesystem::path& path);
/// Reads an 8-bit gray/RGB(A) PNG into a 3-channel image in [0, 1].
Image read_png(const std::filesystem::path& path);

}  // namespace gsdrag
