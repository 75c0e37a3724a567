#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "gsdrag/camera.hpp"
#include "gsdrag/scene.hpp"

namespace testutil {

using gsdrag::Vec3;
using gsdrag::Vec4;

inline gsdrag::GaussianScene random_scene(std::mt19937_64& rng, std::size_t n, double extent = 1.0,
                                          double mask_probability = 0.5) {
  std::uniform_real_distribution<double> pos(-0.5 * extent, 0.5 * extent), unit(-1.0, 1.0), c01(0.0, 1.0);
  std::uniform_real_distribution<double> ls(-4.0, -2.5), op(-1.0, 3.0);
  std::bernoulli_distribution flag(mask_probability);
  gsdrag::GaussianScene s;
  for (std::size_t i = 0; i < n; ++i) {
    gsdrag::GaussianPrimitive g;
    g.position = {pos(rng), pos(rng), pos(rng)};
    g.rotation = Vec4(unit(rng), unit(rng), unit(rng), unit(rng));
    if (g.rotation.norm() < 1e-3) g.rotation = {1, 0, 0, 0};
    g.log_scale = {ls(rng), ls(rng), ls(rng)};
    g.opacity_logit = op(rng);
    g.color = {c01(rng), c01(rng), c01(rng)};
    g.masked = flag(rng);
    s.push_back(g);
  }
  return s;
}

/// Isotropic primitive with the given world-space standard deviation.
inline gsdrag::GaussianPrimitive blob(const Vec3& p, double sigma, double opacity, const Vec3& color,
                                      bool masked = false) {
  gsdrag::GaussianPrimitive g;
  g.position = p;
  g.log_scale = Vec3::Constant(std::log(sigma));
  g.opacity_logit = gsdrag::logit(opacity);
  g.color = color;
  g.masked = masked;
  return g;
}

/// Camera at the origin looking down +z.
inline gsdrag::Camera axis_camera(int w, int h, double f) {
  gsdrag::Camera c;
  c.fx = c.fy = f;
  c.cx = 0.5 * (w - 1);
  c.cy = 0.5 * (h - 1);
  c.width = w;
  c.height = h;
  return c;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("gsdrag-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace testutil
