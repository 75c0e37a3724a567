#include "gsdrag/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace gsdrag {
namespace {

Vec3 uniform_in_ball(std::mt19937_64& rng, double radius) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (;;) {
    const Vec3 p(u(rng), u(rng), u(rng));
    if (p.squaredNorm() <= 1.0) return p * radius;
  }
}

Vec4 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec4 q(n(rng), n(rng), n(rng), n(rng));
  return q / q.norm();
}

}  // namespace

TwoBlobScene make_two_blob_scene(const TwoBlobOptions& o) {
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> jitter(0.8, 1.25);
  TwoBlobScene out;
  out.handle = o.masked_center;
  out.drag = o.drag;
  out.scene.reserve(2 * o.per_blob);
  out.target.reserve(2 * o.per_blob);
  for (int blob = 0; blob < 2; ++blob) {
    const bool masked = blob == 0;
    for (std::size_t i = 0; i < o.per_blob; ++i) {
      GaussianPrimitive g;
      g.position = (masked ? o.masked_center : o.other_center) + uniform_in_ball(rng, o.radius);
      g.rotation = random_rotation(rng);
      for (int k = 0; k < 3; ++k) g.log_scale[k] = std::log(o.scale * jitter(rng));
      g.opacity_logit = logit(o.opacity);
      g.color = masked ? o.masked_color : o.other_color;
      g.masked = masked;
      out.scene.push_back(g);
      if (masked) g.position += o.drag;
      out.target.push_back(g);
    }
  }
  return out;
}

std::vector<Camera> orbit_cameras(std::size_t count, double distance, double fx, int width, int height,
                                  double elevation_deg, const Vec3& center) {
  std::vector<Camera> cams;
  for (std::size_t i = 0; i < count; ++i) {
    const double az = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(count);
    const double el = (i % 2 == 0 ? 1.0 : -1.0) * elevation_deg * std::numbers::pi / 180.0;
    const Vec3 eye = center + distance * Vec3(std::sin(az) * std::cos(el), std::sin(el), -std::cos(az) * std::cos(el));
    cams.push_back(look_at(eye, center, Vec3(0.0, -1.0, 0.0), fx, fx, width, height));
  }
  return cams;
}

}  // namespace gsdrag
