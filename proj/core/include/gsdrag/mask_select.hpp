#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gsdrag/camera.hpp"
#include "gsdrag/scene.hpp"

namespace gsdrag {

/// Selection rectangle in pixel-edge coordinates of one camera: it covers
/// projected centers with x0 <= u + 0.5 < x1 and y0 <= v + 0.5 < y1, so
/// {0, 0, width, height} is the whole image.
struct ViewRect {
  int camera = 0;
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
};

/// Flags primitives whose projected center lies inside the rectangle of every
/// view; primitives behind any of the cameras are excluded. Throws
/// ConfigError for no views, a bad camera index or a rectangle outside the
/// image, and EmptyMaskError when nothing is selected.
std::vector<std::uint8_t> select_mask_frustum(const GaussianScene& scene, std::span<const Camera> cameras,
                                              std::span<const ViewRect> views);

}  // namespace gsdrag
