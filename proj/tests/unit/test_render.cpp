#include <doctest.h>

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include "gsdrag/render.hpp"
#include "helpers.hpp"

using namespace gsdrag;
using testutil::axis_camera;
using testutil::blob;

namespace {

Camera random_camera(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Vec3 eye(3 * u(rng), 3 * u(rng), -4.0 + u(rng));
  return look_at(eye, Vec3(0.1 * u(rng), 0.1 * u(rng), 0.0), Vec3(0, -1, 0), 80 + 20 * u(rng), 80 + 20 * u(rng),
                 64, 48);
}

// Homogeneous 3x4 pipeline: K [R | t] x, then divide.
Eigen::Vector3d homogeneous(const Camera& c, const Vec3& p) {
  Eigen::Matrix<double, 3, 4> rt;
  rt << c.rotation, c.translation;
  Eigen::Matrix3d k;
  k << c.fx, 0, c.cx, 0, c.fy, c.cy, 0, 0, 1;
  const Eigen::Vector3d h = k * rt * p.homogeneous();
  return {h.x() / h.z(), h.y() / h.z(), h.z()};
}

}  // namespace

TEST_CASE("projection basics") {
  Camera c = axis_camera(101, 101, 100);
  c.cx = 50;
  const auto a = project_point(c, {0, 0, 1});
  CHECK(a.u == 50);
  CHECK(a.v == 50);
  CHECK(a.depth == 1);
  CHECK(project_point(c, {1, 0, 1}).u == 150);
  CHECK_THROWS_AS(project_point(c, {0, 0, -1}), BehindCameraError);
  CHECK_FALSE(try_project_point(c, {0, 0, 0}).has_value());
}

TEST_CASE("projection matches the homogeneous pipeline") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int rep = 0; rep < 200; ++rep) {
    const Camera c = random_camera(rng);
    const Vec3 p(u(rng), u(rng), u(rng));
    const auto a = project_point(c, p);
    const auto b = homogeneous(c, p);
    CHECK(std::abs(a.u - b.x()) < 1e-6);
    CHECK(std::abs(a.v - b.y()) < 1e-6);
    CHECK(std::abs(a.depth - b.z()) < 1e-9);
    const Vec3 back = unproject_pixel(c, a.u, a.v, a.depth);
    CHECK((back - p).norm() < 1e-9);
  }
}

TEST_CASE("projected covariance") {
  const Camera c = axis_camera(64, 64, 100);
  RenderSettings rs;
  const Vec4 q(1, 0, 0, 0);
  const double s = 0.01;
  const auto g = project_gaussian(c, q, Vec3::Constant(std::log(s)), {0, 0, 1}, rs);
  CHECK(g.covariance(0, 0) == doctest::Approx(100.0 * 100.0 * s * s + rs.covariance_floor));
  CHECK(g.covariance(1, 1) == doctest::Approx(g.covariance(0, 0)));
  CHECK(std::abs(g.covariance(0, 1)) < 1e-12);
  const auto far = project_gaussian(c, q, Vec3::Constant(std::log(s)), {0, 0, 2}, rs);
  CHECK(far.covariance(0, 0) - rs.covariance_floor ==
        doctest::Approx((g.covariance(0, 0) - rs.covariance_floor) / 4.0));
}

TEST_CASE("projected covariance matches a numeric Jacobian") {
  // Push-forward of the 3D covariance through the numerically differentiated
  // pixel map.
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(-1.0, 1.0), p(-0.3, 0.3), ls(-3.5, -2.0);
  RenderSettings rs;
  for (int rep = 0; rep < 50; ++rep) {
    const Camera c = random_camera(rng);
    const Vec4 q(u(rng), u(rng), u(rng), u(rng));
    const Vec3 log_scale(ls(rng), ls(rng), ls(rng));
    const Vec3 x(p(rng), p(rng), p(rng));
    Eigen::Matrix<double, 2, 3> j;
    const double h = 1e-6;
    for (int k = 0; k < 3; ++k) {
      Vec3 a = x, b = x;
      a[k] += h;
      b[k] -= h;
      const auto pa = project_point(c, a), pb = project_point(c, b);
      j(0, k) = (pa.u - pb.u) / (2 * h);
      j(1, k) = (pa.v - pb.v) / (2 * h);
    }
    const Mat2 expect = j * covariance_3d(q, log_scale) * j.transpose() + rs.covariance_floor * Mat2::Identity();
    const auto g = project_gaussian(c, q, log_scale, x, rs);
    REQUIRE(g.visible);
    const double rel = (g.covariance - expect).norm() / expect.norm();
    CHECK(rel < 1e-4);
    const auto m = project_point(c, x);
    CHECK(std::abs(g.mean.x() - m.u) < 1e-9);
  }
}

TEST_CASE("empty scene renders background") {
  const auto out = render(GaussianScene{}, {}, axis_camera(16, 12, 20));
  CHECK(out.rgb.height == 12);
  for (double v : out.rgb.data) CHECK(v == 0.0);
  for (double v : out.alpha.data) CHECK(v == 0.0);
}

TEST_CASE("opaque splat on a pixel center") {
  const Camera c = axis_camera(33, 33, 40);
  GaussianScene s;
  s.push_back(blob({0, 0, 2}, 0.05, 1.0 - 1e-12, {0.2, 0.6, 0.9}));
  const auto out = render(s, {}, c);
  CHECK(std::abs(out.rgb(16, 16, 0) - 0.2) < 1e-3);
  CHECK(std::abs(out.rgb(16, 16, 1) - 0.6) < 1e-3);
  CHECK(std::abs(out.rgb(16, 16, 2) - 0.9) < 1e-3);
  CHECK(out.depth(16, 16) == doctest::Approx(2.0));
  CHECK(out.depth(0, 0) == 0.0);
}

TEST_CASE("two-term compositing") {
  const Camera c = axis_camera(21, 21, 30);
  RenderSettings rs;
  GaussianScene s;
  // Listed back first to exercise the depth sort.
  s.push_back(blob({0.02, 0.01, 3}, 0.08, 0.7, {0, 0, 1}));
  s.push_back(blob({-0.01, 0, 2}, 0.05, 0.6, {1, 0.5, 0}));
  const auto out = render(s, {}, c, rs);
  auto weight = [&](std::size_t i, int x, int y) {
    const auto g = project_gaussian(c, s.rotations()[i], s.log_scales()[i], s.positions()[i], rs);
    const Vec2 d(x - g.mean.x(), y - g.mean.y());
    return s.primitive(i).opacity() * std::exp(-0.5 * d.dot(g.covariance.inverse() * d));
  };
  for (auto [x, y] : {std::pair{10, 10}, {11, 9}, {9, 12}}) {
    const double af = weight(1, x, y), ab = weight(0, x, y);
    const Vec3 expect = af * s.colors()[1] + (1 - af) * ab * s.colors()[0];
    for (int ch = 0; ch < 3; ++ch) CHECK(std::abs(out.rgb(y, x, ch) - expect[ch]) < 1e-6);
    CHECK(std::abs(out.alpha(y, x) - (1 - (1 - af) * (1 - ab))) < 1e-12);
  }
}

TEST_CASE("backward: zero upstream and single splat color weights") {
  const Camera c = axis_camera(16, 16, 25);
  GaussianScene s;
  s.push_back(blob({0.03, -0.02, 2}, 0.1, 0.8, {0.3, 0.3, 0.3}));
  RenderTape tape;
  const auto out = render(s, {}, c, {}, &tape);
  Image zero(16, 16, 3);
  const auto g0 = render_backward(tape, s, {}, c, zero);
  CHECK(g0.shift[0] == Vec3::Zero());
  CHECK(g0.opacity_logit[0] == 0.0);
  CHECK(g0.color[0] == Vec3::Zero());
  CHECK(g0.log_scale[0] == Vec3::Zero());
  CHECK(g0.rotation[0] == Vec4::Zero());
  // d(sum of red channel)/d(red color) = sum over pixels of alpha * T = alpha image sum.
  Image red(16, 16, 3);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) red(y, x, 0) = 1.0;
  const auto g = render_backward(tape, s, {}, c, red);
  double alpha_sum = 0;
  for (double a : out.alpha.data) alpha_sum += a;
  CHECK(g.color[0].x() == doctest::Approx(alpha_sum).epsilon(1e-12));
  CHECK(g.color[0].y() == 0.0);
}

TEST_CASE("backward matches central differences on a 5-primitive scene") {
  std::mt19937_64 rng(31);
  const Camera c = look_at({0, 0, -3}, {0, 0, 0}, {0, -1, 0}, 20, 20, 16, 16);
  int scenes = 0;
  for (int attempt = 0; attempt < 200 && scenes < 5; ++attempt) {
    GaussianScene s = testutil::random_scene(rng, 5, 0.6);
    for (auto& l : s.log_scales()) l.array() += 1.0;
    const auto margin = discontinuity_margin(s, {}, c);
    if (margin.footprint < 0.05 || margin.transmittance < 0.05) continue;
    ++scenes;
    std::uniform_real_distribution<double> w(-1, 1);
    Image up(16, 16, 3);
    for (double& v : up.data) v = w(rng);
    auto loss = [&](const GaussianScene& sc) {
      const auto o = render(sc, {}, c);
      double l = 0;
      for (std::size_t k = 0; k < up.data.size(); ++k) l += up.data[k] * o.rgb.data[k];
      return l;
    };
    const auto g = render_backward(s, {}, c, up);
    const double h = 1e-4;
    auto check = [&](double analytic, auto&& perturb) {
      GaussianScene a = s, b = s;
      perturb(a, h);
      perturb(b, -h);
      const double fd = (loss(a) - loss(b)) / (2 * h);
      if (std::max(std::abs(fd), std::abs(analytic)) < 1e-8) return;
      CHECK(std::abs(fd - analytic) <= 1e-3 * std::max(std::abs(fd), std::abs(analytic)) + 1e-9);
    };
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (int k = 0; k < 3; ++k) {
        check(g.shift[i][k], [&](GaussianScene& x, double d) { x.positions()[i][k] += d; });
        check(g.color[i][k], [&](GaussianScene& x, double d) { x.colors()[i][k] += d; });
        check(g.log_scale[i][k], [&](GaussianScene& x, double d) { x.log_scales()[i][k] += d; });
      }
      check(g.opacity_logit[i], [&](GaussianScene& x, double d) { x.opacity_logits()[i] += d; });
      for (int k = 0; k < 4; ++k)
        check(g.rotation[i][k], [&](GaussianScene& x, double d) { x.rotations()[i][k] += d; });
    }
  }
  CHECK(scenes == 5);
}

TEST_CASE("mask render equals the thresholded scalar composite") {
  std::mt19937_64 rng(41);
  const Camera c = look_at({0, 0, -2.5}, {0, 0, 0}, {0, -1, 0}, 40, 40, 32, 32);
  GaussianScene s = testutil::random_scene(rng, 300, 1.0, 0.5);
  for (auto& l : s.log_scales()) l.array() += 0.8;
  const Mask2D m = render_mask(mirror(s), c);
  std::vector<Vec3> flag_colors(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) flag_colors[i] = Vec3::Constant(s.mask()[i] ? 1.0 : 0.0);
  const auto scalar = render_with_colors(s, {}, flag_colors, c);
  std::size_t set = 0;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      CHECK(m.at(x, y) == (scalar.rgb(y, x, 0) > 0.5 ? 1 : 0));
      set += m.at(x, y);
    }
  CHECK(set > 0);
  CHECK(set < 32 * 32);

  for (auto& f : s.mask()) f = 0;
  CHECK(render_mask(mirror(s), c).count() == 0);
}

TEST_CASE("fully masked opaque cover gives an all-one mask") {
  const Camera c = axis_camera(16, 16, 20);
  GaussianScene s;
  s.push_back(blob({0, 0, 1}, 1.0, 0.999, {1, 1, 1}, true));
  const Mask2D m = render_mask(mirror(s), c);
  CHECK(m.count() == 256);
}

TEST_CASE("dilation") {
  Mask2D one(7, 7);
  one.at(3, 3) = 1;
  CHECK(dilate_mask(one, 0) == one);
  const Mask2D d = dilate_mask(one, 1);
  CHECK(d.count() == 9);
  for (int y = 2; y <= 4; ++y)
    for (int x = 2; x <= 4; ++x) CHECK(d.at(x, y) == 1);

  std::mt19937_64 rng(51);
  std::bernoulli_distribution bit(0.03);
  for (int rep = 0; rep < 20; ++rep) {
    Mask2D m(29, 23);
    for (auto& v : m.data) v = bit(rng);
    const Mask2D got = dilate_mask(m, 3);
    for (int y = 0; y < 23; ++y)
      for (int x = 0; x < 29; ++x) {
        std::uint8_t mx = 0;
        for (int yy = std::max(0, y - 3); yy <= std::min(22, y + 3); ++yy)
          for (int xx = std::max(0, x - 3); xx <= std::min(28, x + 3); ++xx) mx = std::max(mx, m.at(xx, yy));
        CHECK(got.at(x, y) == mx);
      }
  }
  CHECK(default_dilation_radius(512) == 10);
  CHECK(default_dilation_radius(64) >= 1);
}

TEST_CASE("camera validation and json round trip") {
  Camera c = look_at({1, 2, -3}, {0, 0, 0}, {0, -1, 0}, 50, 60, 32, 24);
  const Camera back = camera_from_json(camera_to_json(c));
  CHECK((back.rotation - c.rotation).norm() < 1e-15);
  CHECK(back.fy == 60);
  c.fx = -1;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c.fx = 1;
  c.rotation(0, 0) = 2;
  CHECK_THROWS_AS(validate(c), ConfigError);
  const Camera r = look_at({0, 0, -3}, {0, 0, 0}, {0, -1, 0}, 50, 50, 64, 48).resized(32);
  CHECK(r.width == 32);
  CHECK(r.height == 24);
  CHECK(r.fx == doctest::Approx(25));
}
