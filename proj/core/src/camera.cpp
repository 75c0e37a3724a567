#include "gsdrag/camera.hpp"

#include <cmath>
#include <fstream>

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

namespace gsdrag {

Camera Camera::resized(int new_width) const {
  Camera c = *this;
  const double k = static_cast<double>(new_width) / width;
  c.width = new_width;
  c.height = std::max(1, static_cast<int>(std::lround(height * k)));
  c.fx *= k;
  c.fy *= k;
  c.cx *= k;
  c.cy *= k;
  return c;
}

void validate(const Camera& c) {
  if (!(c.fx > 0.0) || !(c.fy > 0.0)) throw ConfigError("camera: focal lengths must be positive");
  if (c.width < 1 || c.height < 1) throw ConfigError("camera: image size must be at least 1x1");
  if (!c.rotation.allFinite() || !c.translation.allFinite()) throw ConfigError("camera: non-finite pose");
  const double ortho = (c.rotation * c.rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho > 1e-6 || std::abs(c.rotation.determinant() - 1.0) > 1e-6)
    throw ConfigError("camera: rotation is not a proper orthonormal matrix");
}

Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy, int width, int height) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-12) right = forward.unitOrthogonal();
  right.normalize();
  const Vec3 down = forward.cross(right);
  Camera c;
  c.fx = fx;
  c.fy = fy;
  c.width = width;
  c.height = height;
  c.cx = 0.5 * (width - 1);
  c.cy = 0.5 * (height - 1);
  c.rotation.row(0) = right.transpose();
  c.rotation.row(1) = down.transpose();
  c.rotation.row(2) = forward.transpose();
  c.translation = -c.rotation * eye;
  return c;
}

std::optional<PixelProjection> try_project_point(const Camera& camera, const Vec3& p) {
  const Vec3 t = camera.to_camera(p);
  if (!(t.z() > 0.0)) return std::nullopt;
  return PixelProjection{camera.cx + camera.fx * t.x() / t.z(), camera.cy + camera.fy * t.y() / t.z(), t.z()};
}

PixelProjection project_point(const Camera& camera, const Vec3& p) {
  auto r = try_project_point(camera, p);
  if (!r) throw BehindCameraError("project_point: point is behind the camera");
  return *r;
}

Vec3 unproject_pixel(const Camera& camera, double u, double v, double depth) {
  const Vec3 t((u - camera.cx) / camera.fx * depth, (v - camera.cy) / camera.fy * depth, depth);
  return camera.rotation.transpose() * (t - camera.translation);
}

nlohmann::json camera_to_json(const Camera& c) {
  nlohmann::json j;
  j["fx"] = c.fx;
  j["fy"] = c.fy;
  j["cx"] = c.cx;
  j["cy"] = c.cy;
  j["width"] = c.width;
  j["height"] = c.height;
  std::vector<double> r(9), t(3);
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) r[3 * i + k] = c.rotation(i, k);
    t[i] = c.translation[i];
  }
  j["rotation"] = r;
  j["translation"] = t;
  return j;
}

Camera camera_from_json(const nlohmann::json& j) {
  Camera c;
  try {
    c.fx = j.at("fx").get<double>();
    c.fy = j.at("fy").get<double>();
    c.cx = j.at("cx").get<double>();
    c.cy = j.at("cy").get<double>();
    c.width = j.at("width").get<int>();
    c.height = j.at("height").get<int>();
    const auto r = j.at("rotation").get<std::vector<double>>();
    const auto t = j.at("translation").get<std::vector<double>>();
    if (r.size() != 9 || t.size() != 3) throw ConfigError("camera: rotation needs 9 numbers, translation 3");
    for (int i = 0; i < 3; ++i) {
      for (int k = 0; k < 3; ++k) c.rotation(i, k) = r[3 * i + k];
      c.translation[i] = t[i];
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("camera: ") + e.what());
  }
  validate(c);
  return c;
}

std::vector<Camera> cameras_from_json(const nlohmann::json& j) {
  const nlohmann::json& list = j.is_array() ? j : j.at("cameras");
  std::vector<Camera> cams;
  for (const auto& item : list) cams.push_back(camera_from_json(item));
  return cams;
}

nlohmann::json cameras_to_json(const std::vector<Camera>& cameras) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& c : cameras) list.push_back(camera_to_json(c));
  return {{"cameras", list}};
}

std::vector<Camera> load_cameras(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open camera file '" + path.string() + "'");
  try {
    return cameras_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void save_cameras(const std::vector<Camera>& cameras, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << cameras_to_json(cameras).dump(2) << "\n";
}

}  // namespace gsdrag
