#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gsdrag/types.hpp"

namespace gsdrag {

/// Pinhole camera. Camera frame: x right, y down, z forward. Pixel (i, j)
/// samples the image plane at u = j, v = i.
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;
  /// World-to-camera rotation.
  Mat3 rotation = Mat3::Identity();
  /// World-to-camera translation.
  Vec3 translation = Vec3::Zero();

  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
  Vec3 center() const { return -rotation.transpose() * translation; }
  /// Same pose with intrinsics rescaled to a new image width (aspect kept).
  Camera resized(int new_width) const;
};

/// Throws ConfigError when intrinsics, size or rotation are invalid.
void validate(const Camera& camera);

/// Camera looking from `eye` toward `target`.
Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy, int width, int height);

struct PixelProjection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

/// Throws BehindCameraError when the camera-space depth is not positive.
PixelProjection project_point(const Camera& camera, const Vec3& p);
std::optional<PixelProjection> try_project_point(const Camera& camera, const Vec3& p);
/// Lifts pixel (u, v) at camera-space depth `depth` back to world space.
Vec3 unproject_pixel(const Camera& camera, double u, double v, double depth);

nlohmann::json camera_to_json(const Camera& camera);
Camera camera_from_json(const nlohmann::json& j);

/// Camera file: {"cameras": [{fx, fy, cx, cy, width, height, rotation[9],
/// translation[3]}, ...]}. A bare top-level array is accepted on load.
std::vector<Camera> load_cameras(const std::filesystem::path& path);
void save_cameras(const std::vector<Camera>& cameras, const std::filesystem::path& path);
std::vector<Camera> cameras_from_json(const nlohmann::json& j);
nlohmann::json cameras_to_json(const std::vector<Camera>& cameras);

}  // namespace gsdrag
