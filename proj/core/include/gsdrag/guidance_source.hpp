#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "gsdrag/camera.hpp"
#include "gsdrag/guidance.hpp"
#include "gsdrag/scene.hpp"

namespace gsdrag {

/// Builds the oracle for a run on `scene` seen by `cameras`. Throws
/// GuidanceUnavailable or ConfigError when it cannot.
using GuidanceFactory = std::function<std::shared_ptr<const GuidanceOracle>(const GaussianScene& scene,
                                                                           const std::vector<Camera>& cameras)>;

/// Parses a guidance mode:
///   synthetic:<file.ply>   target scene, rendered from the run's cameras
///   synthetic:<directory>  one target PNG per camera, taken in name order
///   http:<url>             external process (http://host:port/path)
/// Files are read here; a missing path or unknown mode raises ConfigError.
GuidanceFactory parse_guidance(std::string_view mode);

/// Target PNGs in `dir` (sorted by file name), checked against the cameras.
std::vector<Image> load_target_images(const std::string& dir, const std::vector<Camera>& cameras);

}  // namespace gsdrag
