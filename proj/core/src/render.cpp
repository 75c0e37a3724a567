#include "gsdrag/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <Eigen/LU>

namespace gsdrag {
namespace {

using Mat23 = Eigen::Matrix<double, 2, 3>;

/// Everything the projection chain needs in both directions.
struct Geometry {
  Vec3 cam;
  Mat23 jacobian;
  Mat23 jw;  // jacobian * camera rotation
  Vec4 qhat;
  double qnorm = 1.0;
  Mat3 rot;
  Vec3 scale;
  Mat3 rs;  // rot * diag(scale)
  Mat3 sigma3;
  Mat2 cov2;
  Vec2 mean;
};

Mat3 rotation_from_unit(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Geometry compute_geometry(const Camera& camera, const Vec3& world, const Vec4& q, const Vec3& log_scale,
                          double floor) {
  Geometry g;
  g.cam = camera.to_camera(world);
  const double x = g.cam.x(), y = g.cam.y(), z = g.cam.z();
  g.jacobian << camera.fx / z, 0.0, -camera.fx * x / (z * z),
                0.0, camera.fy / z, -camera.fy * y / (z * z);
  g.jw = g.jacobian * camera.rotation;
  g.qnorm = q.norm();
  g.qhat = q / g.qnorm;
  g.rot = rotation_from_unit(g.qhat);
  g.scale = log_scale.array().exp();
  g.rs = g.rot * g.scale.asDiagonal();
  g.sigma3 = g.rs * g.rs.transpose();
  g.cov2 = g.jw * g.sigma3 * g.jw.transpose();
  g.cov2(0, 0) += floor;
  g.cov2(1, 1) += floor;
  g.mean = Vec2(camera.fx * x / z + camera.cx, camera.fy * y / z + camera.cy);
  return g;
}

/// Pulls gradients on the 2D mean and (symmetric) 2D covariance back to the
/// world position, the raw quaternion and the log-scale.
void geometry_backward(const Geometry& g, const Camera& camera, const Vec2& d_mean, const Mat2& d_cov2,
                       Vec3& d_world, Vec4& d_q, Vec3& d_log_scale) {
  const double x = g.cam.x(), y = g.cam.y(), z = g.cam.z();
  const double fx = camera.fx, fy = camera.fy;
  const double z2 = z * z, z3 = z2 * z;

  const Mat23 d_jw = 2.0 * d_cov2 * g.jw * g.sigma3;
  const Mat3 d_sigma3 = g.jw.transpose() * d_cov2 * g.jw;
  const Mat23 d_j = d_jw * camera.rotation.transpose();

  Vec3 d_cam;
  d_cam.x() = d_j(0, 2) * (-fx / z2) + d_mean.x() * fx / z;
  d_cam.y() = d_j(1, 2) * (-fy / z2) + d_mean.y() * fy / z;
  d_cam.z() = d_j(0, 0) * (-fx / z2) + d_j(0, 2) * (2.0 * fx * x / z3) + d_j(1, 1) * (-fy / z2) +
              d_j(1, 2) * (2.0 * fy * y / z3) - d_mean.x() * fx * x / z2 - d_mean.y() * fy * y / z2;
  d_world = camera.rotation.transpose() * d_cam;

  const Mat3 d_rs = 2.0 * d_sigma3 * g.rs;
  for (int j = 0; j < 3; ++j) d_log_scale[j] = d_rs.col(j).dot(g.rot.col(j)) * g.scale[j];
  const Mat3 d_rot = d_rs * g.scale.asDiagonal();

  const double w = g.qhat[0], qx = g.qhat[1], qy = g.qhat[2], qz = g.qhat[3];
  Mat3 dw, dx, dy, dz;
  dw << 0, -2 * qz, 2 * qy,
        2 * qz, 0, -2 * qx,
        -2 * qy, 2 * qx, 0;
  dx << 0, 2 * qy, 2 * qz,
        2 * qy, -4 * qx, -2 * w,
        2 * qz, 2 * w, -4 * qx;
  dy << -4 * qy, 2 * qx, 2 * w,
        2 * qx, 0, 2 * qz,
        -2 * w, 2 * qz, -4 * qy;
  dz << -4 * qz, -2 * w, 2 * qx,
        2 * w, -4 * qz, 2 * qy,
        2 * qx, 2 * qy, 0;
  const Vec4 d_qhat((d_rot.cwiseProduct(dw)).sum(), (d_rot.cwiseProduct(dx)).sum(),
                    (d_rot.cwiseProduct(dy)).sum(), (d_rot.cwiseProduct(dz)).sum());
  d_q = (d_qhat - g.qhat * g.qhat.dot(d_qhat)) / g.qnorm;
}

void check_shifts(const GaussianScene& scene, std::span<const Vec3> shifts) {
  if (!shifts.empty() && shifts.size() != scene.size())
    throw std::invalid_argument("render: shift count does not match primitive count");
}

Vec3 shifted(const GaussianScene& scene, std::span<const Vec3> shifts, std::size_t i) {
  return shifts.empty() ? scene.positions()[i] : Vec3(scene.positions()[i] + shifts[i]);
}

/// Projects every primitive and bins it into the pixels its footprint box
/// covers, in compositing order.
void build_tape(const GaussianScene& scene, std::span<const Vec3> shifts, const Camera& camera,
                const RenderSettings& settings, RenderTape& tape) {
  const std::size_t n = scene.size();
  tape.width = camera.width;
  tape.height = camera.height;
  tape.primitive_count = n;
  tape.generation = scene.generation();
  tape.settings = settings;
  tape.splats.assign(n, Splat{});

  std::vector<std::uint32_t> order;
  order.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 world = shifted(scene, shifts, i);
    Splat& s = tape.splats[i];
    s.cam = camera.to_camera(world);
    if (!(s.cam.z() > settings.near_plane)) continue;
    const Geometry g =
        compute_geometry(camera, world, scene.rotations()[i], scene.log_scales()[i], settings.covariance_floor);
    const double det = g.cov2.determinant();
    if (!(det > 0.0) || !std::isfinite(det)) continue;
    s.conic_a = g.cov2(1, 1) / det;
    s.conic_b = -g.cov2(0, 1) / det;
    s.conic_c = g.cov2(0, 0) / det;
    s.mean = g.mean;
    s.alpha = sigmoid(scene.opacity_logits()[i]);
    const double mid = 0.5 * (g.cov2(0, 0) + g.cov2(1, 1));
    const double half = 0.5 * (g.cov2(0, 0) - g.cov2(1, 1));
    const double lambda_max = mid + std::sqrt(half * half + g.cov2(0, 1) * g.cov2(0, 1));
    const double radius = settings.cutoff_sigma * std::sqrt(lambda_max);
    const double fx0 = std::ceil(s.mean.x() - radius), fx1 = std::floor(s.mean.x() + radius);
    const double fy0 = std::ceil(s.mean.y() - radius), fy1 = std::floor(s.mean.y() + radius);
    if (!std::isfinite(fx0 + fx1 + fy0 + fy1)) continue;
    if (fx1 < 0 || fy1 < 0 || fx0 > camera.width - 1 || fy0 > camera.height - 1) continue;
    s.x0 = static_cast<int>(std::max(0.0, fx0));
    s.x1 = static_cast<int>(std::min<double>(camera.width - 1, fx1));
    s.y0 = static_cast<int>(std::max(0.0, fy0));
    s.y1 = static_cast<int>(std::min<double>(camera.height - 1, fy1));
    if (s.x0 > s.x1 || s.y0 > s.y1) continue;
    s.visible = true;
    order.push_back(static_cast<std::uint32_t>(i));
  }
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    const double da = tape.splats[a].cam.z(), db = tape.splats[b].cam.z();
    return da != db ? da < db : a < b;
  });

  const std::size_t pixels = static_cast<std::size_t>(camera.width) * camera.height;
  tape.pixel_offsets.assign(pixels + 1, 0);
  for (std::uint32_t i : order) {
    const Splat& s = tape.splats[i];
    for (int y = s.y0; y <= s.y1; ++y)
      for (int x = s.x0; x <= s.x1; ++x) ++tape.pixel_offsets[static_cast<std::size_t>(y) * camera.width + x + 1];
  }
  std::partial_sum(tape.pixel_offsets.begin(), tape.pixel_offsets.end(), tape.pixel_offsets.begin());
  tape.pixel_candidates.assign(tape.pixel_offsets.back(), 0);
  std::vector<std::uint32_t> cursor(tape.pixel_offsets.begin(), tape.pixel_offsets.end() - 1);
  for (std::uint32_t i : order) {
    const Splat& s = tape.splats[i];
    for (int y = s.y0; y <= s.y1; ++y)
      for (int x = s.x0; x <= s.x1; ++x) tape.pixel_candidates[cursor[static_cast<std::size_t>(y) * camera.width + x]++] = i;
  }
}

struct Contribution {
  std::uint32_t index;
  double dx, dy;
  double gauss;
  double a;
  double transmittance;  // before this contribution
};

/// Walks one pixel's candidates front to back, calling `visit` for every
/// contribution that is composited. Returns the final transmittance.
template <typename Visit>
double composite_pixel(const RenderTape& tape, int px, int py, Visit&& visit) {
  const std::size_t p = static_cast<std::size_t>(py) * tape.width + px;
  const double cutoff2 = tape.settings.cutoff_sigma * tape.settings.cutoff_sigma;
  double t = 1.0;
  for (std::uint32_t k = tape.pixel_offsets[p]; k < tape.pixel_offsets[p + 1]; ++k) {
    const std::uint32_t i = tape.pixel_candidates[k];
    const Splat& s = tape.splats[i];
    const double dx = px - s.mean.x(), dy = py - s.mean.y();
    const double m2 = s.conic_a * dx * dx + 2.0 * s.conic_b * dx * dy + s.conic_c * dy * dy;
    if (m2 > cutoff2) continue;
    const double gauss = std::exp(-0.5 * m2);
    const double a = s.alpha * gauss;
    visit(Contribution{i, dx, dy, gauss, a, t});
    t *= 1.0 - a;
    if (t < tape.settings.min_transmittance) break;
  }
  return t;
}

RenderOutput rasterize(const RenderTape& tape, std::span<const Vec3> colors) {
  RenderOutput out;
  out.rgb = Image(tape.height, tape.width, 3);
  out.alpha = Image(tape.height, tape.width, 1);
  out.depth = Image(tape.height, tape.width, 1);
  const Vec3& bg = tape.settings.background;
  for (int y = 0; y < tape.height; ++y) {
    for (int x = 0; x < tape.width; ++x) {
      Vec3 c = Vec3::Zero();
      double depth = 0.0;
      bool depth_set = false;
      const double t = composite_pixel(tape, x, y, [&](const Contribution& k) {
        c += colors[k.index] * (k.a * k.transmittance);
        if (!depth_set && 1.0 - k.transmittance * (1.0 - k.a) >= 0.5) {
          depth = tape.splats[k.index].cam.z();
          depth_set = true;
        }
      });
      c += t * bg;
      for (int ch = 0; ch < 3; ++ch) out.rgb(y, x, ch) = c[ch];
      out.alpha(y, x) = 1.0 - t;
      out.depth(y, x) = depth;
    }
  }
  return out;
}

}  // namespace

Mat3 rotation_matrix(const Vec4& q) { return rotation_from_unit(q / q.norm()); }

Mat3 covariance_3d(const Vec4& rotation, const Vec3& log_scale) {
  const Mat3 rs = rotation_matrix(rotation) * log_scale.array().exp().matrix().asDiagonal();
  return rs * rs.transpose();
}

ProjectedGaussian project_gaussian(const Camera& camera, const Vec4& rotation, const Vec3& log_scale,
                                   const Vec3& position, const RenderSettings& settings) {
  ProjectedGaussian out;
  const Vec3 cam = camera.to_camera(position);
  out.depth = cam.z();
  if (!(cam.z() > settings.near_plane)) return out;
  const Geometry g = compute_geometry(camera, position, rotation, log_scale, settings.covariance_floor);
  out.visible = true;
  out.mean = g.mean;
  out.covariance = g.cov2;
  return out;
}

void RenderGradients::resize(std::size_t n) {
  shift.resize(n, Vec3::Zero());
  opacity_logit.resize(n, 0.0);
  color.resize(n, Vec3::Zero());
  log_scale.resize(n, Vec3::Zero());
  rotation.resize(n, Vec4::Zero());
}

void RenderGradients::set_zero() {
  std::fill(shift.begin(), shift.end(), Vec3::Zero());
  std::fill(opacity_logit.begin(), opacity_logit.end(), 0.0);
  std::fill(color.begin(), color.end(), Vec3::Zero());
  std::fill(log_scale.begin(), log_scale.end(), Vec3::Zero());
  std::fill(rotation.begin(), rotation.end(), Vec4::Zero());
}

RenderGradients& RenderGradients::operator+=(const RenderGradients& o) {
  if (o.size() != size()) throw std::invalid_argument("RenderGradients: size mismatch");
  for (std::size_t i = 0; i < size(); ++i) {
    shift[i] += o.shift[i];
    opacity_logit[i] += o.opacity_logit[i];
    color[i] += o.color[i];
    log_scale[i] += o.log_scale[i];
    rotation[i] += o.rotation[i];
  }
  return *this;
}

RenderOutput render_with_colors(const GaussianScene& scene, std::span<const Vec3> shifts,
                                std::span<const Vec3> colors, const Camera& camera, const RenderSettings& settings,
                                RenderTape* tape) {
  check_shifts(scene, shifts);
  if (colors.size() != scene.size()) throw std::invalid_argument("render: color count does not match scene");
  RenderTape local;
  RenderTape& t = tape ? *tape : local;
  build_tape(scene, shifts, camera, settings, t);
  return rasterize(t, colors);
}

RenderOutput render(const GaussianScene& scene, std::span<const Vec3> shifts, const Camera& camera,
                    const RenderSettings& settings, RenderTape* tape) {
  return render_with_colors(scene, shifts, scene.colors(), camera, settings, tape);
}

RenderGradients render_backward(const RenderTape& tape, const GaussianScene& scene, std::span<const Vec3> shifts,
                                const Camera& camera, const Image& d_rgb) {
  check_shifts(scene, shifts);
  if (tape.primitive_count != scene.size() || tape.generation != scene.generation() ||
      tape.width != camera.width || tape.height != camera.height)
    throw std::logic_error("render_backward: tape does not match the forward inputs");
  if (d_rgb.width != camera.width || d_rgb.height != camera.height || d_rgb.channels != 3)
    throw std::logic_error("render_backward: upstream gradient has the wrong image size");

  const std::size_t n = scene.size();
  std::vector<Vec2> d_mean(n, Vec2::Zero());
  std::vector<Vec3> d_conic(n, Vec3::Zero());  // (a, b, c) with b counted once
  std::vector<double> d_alpha(n, 0.0);
  RenderGradients grads(n);
  const auto& colors = scene.colors();
  std::vector<Contribution> chain;

  for (int y = 0; y < tape.height; ++y) {
    for (int x = 0; x < tape.width; ++x) {
      const Vec3 d_pix(d_rgb(y, x, 0), d_rgb(y, x, 1), d_rgb(y, x, 2));
      if (d_pix.isZero(0.0)) continue;
      chain.clear();
      composite_pixel(tape, x, y, [&](const Contribution& k) { chain.push_back(k); });
      // rest = color of everything behind the current contribution, divided by
      // the transmittance just behind it.
      Vec3 rest = tape.settings.background;
      for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
        const Contribution& k = *it;
        const std::uint32_t i = k.index;
        const Vec3& c = colors[i];
        grads.color[i] += d_pix * (k.a * k.transmittance);
        const double d_a = k.transmittance * d_pix.dot(c - rest);
        rest = c * k.a + (1.0 - k.a) * rest;

        const Splat& s = tape.splats[i];
        d_alpha[i] += d_a * k.gauss;
        const double d_m2 = d_a * s.alpha * (-0.5 * k.gauss);
        d_mean[i].x() += d_m2 * -2.0 * (s.conic_a * k.dx + s.conic_b * k.dy);
        d_mean[i].y() += d_m2 * -2.0 * (s.conic_b * k.dx + s.conic_c * k.dy);
        d_conic[i] += d_m2 * Vec3(k.dx * k.dx, 2.0 * k.dx * k.dy, k.dy * k.dy);
      }
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    const Splat& s = tape.splats[i];
    if (!s.visible) continue;
    const double alpha = s.alpha;
    grads.opacity_logit[i] = d_alpha[i] * alpha * (1.0 - alpha);
    if (d_mean[i].isZero(0.0) && d_conic[i].isZero(0.0)) continue;
    const Vec3 world = shifted(scene, shifts, i);
    const Geometry g = compute_geometry(camera, world, scene.rotations()[i], scene.log_scales()[i],
                                        tape.settings.covariance_floor);
    Mat2 q;
    q << s.conic_a, s.conic_b, s.conic_b, s.conic_c;
    Mat2 g_conic;
    g_conic << d_conic[i][0], 0.5 * d_conic[i][1], 0.5 * d_conic[i][1], d_conic[i][2];
    const Mat2 d_cov2 = -q * g_conic * q;
    geometry_backward(g, camera, d_mean[i], d_cov2, grads.shift[i], grads.rotation[i], grads.log_scale[i]);
  }
  return grads;
}

RenderGradients render_backward(const GaussianScene& scene, std::span<const Vec3> shifts, const Camera& camera,
                                const Image& d_rgb, const RenderSettings& settings) {
  RenderTape tape;
  render(scene, shifts, camera, settings, &tape);
  return render_backward(tape, scene, shifts, camera, d_rgb);
}

DiscontinuityMargin discontinuity_margin(const GaussianScene& scene, std::span<const Vec3> shifts,
                                         const Camera& camera, const RenderSettings& settings) {
  RenderTape tape;
  render(scene, shifts, camera, settings, &tape);
  DiscontinuityMargin m{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  const double cutoff2 = settings.cutoff_sigma * settings.cutoff_sigma;
  const double log_tmin = std::log(settings.min_transmittance);
  for (int y = 0; y < tape.height; ++y) {
    for (int x = 0; x < tape.width; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * tape.width + x;
      for (std::uint32_t k = tape.pixel_offsets[p]; k < tape.pixel_offsets[p + 1]; ++k) {
        const Splat& s = tape.splats[tape.pixel_candidates[k]];
        const double dx = x - s.mean.x(), dy = y - s.mean.y();
        const double m2 = s.conic_a * dx * dx + 2.0 * s.conic_b * dx * dy + s.conic_c * dy * dy;
        m.footprint = std::min(m.footprint, std::abs(m2 - cutoff2));
      }
      composite_pixel(tape, x, y, [&](const Contribution& k) {
        const double t_after = k.transmittance * (1.0 - k.a);
        m.transmittance = std::min(m.transmittance, std::abs(std::log(t_after) - log_tmin));
      });
    }
  }
  return m;
}

std::size_t Mask2D::count() const {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
}

Image Mask2D::to_image() const {
  Image img(height, width, 1);
  for (std::size_t i = 0; i < data.size(); ++i) img.data[i] = data[i] ? 1.0 : 0.0;
  return img;
}

Mask2D render_mask(const GaussianScene& scene, std::span<const Vec3> shifts, const Camera& camera, double threshold,
                   const RenderSettings& settings) {
  std::vector<Vec3> flags(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) flags[i] = Vec3::Constant(scene.mask()[i] ? 1.0 : 0.0);
  RenderSettings s = settings;
  s.background = Vec3::Zero();
  const RenderOutput out = render_with_colors(scene, shifts, flags, camera, s);
  Mask2D mask(camera.width, camera.height);
  for (int y = 0; y < camera.height; ++y)
    for (int x = 0; x < camera.width; ++x) mask.at(x, y) = out.rgb(y, x, 0) > threshold ? 1 : 0;
  return mask;
}

Mask2D render_mask(const MirroredScene& mirrored, const Camera& camera, double threshold,
                   const RenderSettings& settings) {
  return render_mask(mirrored.scene(), {}, camera, threshold, settings);
}

Mask2D dilate_mask(const Mask2D& mask, int radius) {
  if (radius < 0) throw std::invalid_argument("dilate_mask: negative radius");
  if (radius == 0) return mask;
  // Separable max filter: rows, then columns.
  Mask2D rows(mask.width, mask.height);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      std::uint8_t v = 0;
      for (int k = std::max(0, x - radius); k <= std::min(mask.width - 1, x + radius) && !v; ++k) v = mask.at(k, y);
      rows.at(x, y) = v;
    }
  }
  Mask2D out(mask.width, mask.height);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      std::uint8_t v = 0;
      for (int k = std::max(0, y - radius); k <= std::min(mask.height - 1, y + radius) && !v; ++k) v = rows.at(x, k);
      out.at(x, y) = v;
    }
  }
  return out;
}

int default_dilation_radius(int width) { return static_cast<int>(std::lround(10.0 * width / 512.0)); }

}  // namespace gsdrag
