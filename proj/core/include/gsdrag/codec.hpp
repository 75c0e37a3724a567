#pragma once

#include "gsdrag/image.hpp"
#include "gsdrag/types.hpp"

namespace gsdrag {

/// Deterministic linear stand-in for an LDM autoencoder: 8x8 average pooling
/// down, bilinear upsampling (half-pixel centers, edge clamp) back up.
class LatentCodec {
 public:
  static constexpr int kFactor = 8;

  /// Throws ConfigError unless both image dimensions are multiples of 8.
  Latent encode(const Image& image) const;
  Image decode(const Latent& latent) const;
  /// Transpose of encode: spreads each latent gradient evenly over its block.
  Image encode_adjoint(const Latent& d_latent) const;
  /// Transpose of decode.
  Latent decode_adjoint(const Image& d_image) const;
};

}  // namespace gsdrag
