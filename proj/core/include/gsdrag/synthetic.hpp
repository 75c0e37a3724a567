#pragma once

#include <cstdint>
#include <vector>

#include "gsdrag/camera.hpp"
#include "gsdrag/scene.hpp"

namespace gsdrag {

struct TwoBlobOptions {
  std::size_t per_blob = 1000;
  double radius = 0.2;
  double scale = 0.04;
  double opacity = 0.8;
  Vec3 masked_center{-0.3, 0.17, 0.0};
  Vec3 other_center{0.3, -0.17, 0.0};
  Vec3 masked_color{0.9, 0.25, 0.15};
  Vec3 other_color{0.15, 0.35, 0.9};
  /// Translation applied to the masked blob in the target scene.
  Vec3 drag{0.3, 0.0, 0.0};
  std::uint64_t seed = 7;
};

/// Demo/test scene: two Gaussian blobs, one of them masked, plus the target
/// scene in which the masked blob is translated by `drag`.
struct TwoBlobScene {
  GaussianScene scene;
  GaussianScene target;
  Vec3 handle;  ///< masked blob center
  Vec3 drag;
};

TwoBlobScene make_two_blob_scene(const TwoBlobOptions& options = {});

/// `count` cameras on a circle of radius `distance` around `center` in the
/// x-z plane, alternating between +-`elevation_deg`, looking at the center.
std::vector<Camera> orbit_cameras(std::size_t count, double distance, double fx, int width, int height,
                                  double elevation_deg = 20.0, const Vec3& center = Vec3::Zero());

}  // namespace gsdrag
