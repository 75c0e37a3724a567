#include "gsdrag/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <thread>

#include <Eigen/Eigenvalues>
#include <httplib.h>

#include "gsdrag/densify.hpp"
#include "gsdrag/knn.hpp"
#include "gsdrag/mask_select.hpp"
#include "gsdrag/protocol.hpp"
#include "gsdrag/render.hpp"
#include "gsdrag/schedule.hpp"
#include "gsdrag/synthetic.hpp"
#include "gsdrag/triplane.hpp"

namespace gsdrag {
namespace {

using Clock = std::chrono::steady_clock;
using Outcome = std::pair<bool, std::string>;

template <typename... A>
std::string fmt(const char* f, A... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

CheckResult timed(const char* suite, const char* name, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  CheckResult r{suite, name, false, "", 0.0};
  try {
    auto [ok, detail] = body();
    r.passed = ok;
    r.detail = std::move(detail);
  } catch (const std::exception& e) {
    r.detail = std::string("threw: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// ---------------------------------------------------------------------------

std::vector<CheckResult> schedules() {
  std::vector<CheckResult> out;
  out.push_back(timed("schedules", "timestep endpoints", [] {
    const double a = timestep_schedule(0.0), b = timestep_schedule(1.0);
    return Outcome{a == 0.98 && b == 0.02, fmt("f(0)=%.17g f(1)=%.17g", a, b)};
  }));
  out.push_back(timed("schedules", "stage threshold", [] {
    const double v = timestep_schedule(0.36);
    return Outcome{v >= 0.70 && v <= 0.71, fmt("f(0.36)=%.6f", v)};
  }));
  out.push_back(timed("schedules", "cfg endpoints", [] {
    const double a = cfg_scale(0.0), b = cfg_scale(1.0);
    return Outcome{a == 4.0 && b == 1.0, fmt("w(0)=%.17g w(1)=%.17g", a, b)};
  }));
  out.push_back(timed("schedules", "monotone annealing", [] {
    double pf = timestep_schedule(0.0), pw = cfg_scale(0.0);
    for (int i = 1; i <= 1000; ++i) {
      const double s = i / 1000.0, f = timestep_schedule(s), w = cfg_scale(s);
      if (f > pf || w > pw) return Outcome{false, fmt("increase at s=%.3f", s)};
      pf = f;
      pw = w;
    }
    return Outcome{true, "f and w nonincreasing on 1001 samples"};
  }));
  out.push_back(timed("schedules", "cumulative alpha", [] {
    const DiffusionSchedule sched;
    double prev = 1.0, prod = 1.0;
    for (int t = 0; t < sched.steps(); ++t) {
      prod *= 1.0 - (1e-4 + (2e-2 - 1e-4) * t / (sched.steps() - 1.0));
      const double a = sched.alpha_bar(t);
      if (!(a < prev && a > 0.0) || std::abs(a - prod) > 1e-12 * prod)
        return Outcome{false, fmt("t=%d alpha_bar=%.17g product=%.17g", t, a, prod)};
      prev = a;
    }
    return Outcome{true, fmt("alpha_bar(999)=%.6g", sched.alpha_bar(sched.steps() - 1))};
  }));
  return out;
}

// ---------------------------------------------------------------------------

struct FdStats {
  std::size_t checked = 0, failed = 0;
  double worst = 0.0;
  std::string where;

  void compare(double analytic, double numeric, const std::string& what) {
    const double mag = std::max(std::abs(analytic), std::abs(numeric));
    if (mag <= 1e-8) return;
    ++checked;
    const double rel = std::abs(analytic - numeric) / mag;
    if (rel > worst) {
      worst = rel;
      where = what + fmt(" analytic=%.9g numeric=%.9g", analytic, numeric);
    }
    if (rel > 1e-3) ++failed;
  }
  Outcome outcome(const char* label) const {
    return {failed == 0 && checked > 0,
            fmt("%s: %zu gradients, %zu over 1e-3, worst %.2e", label, checked, failed, worst) +
                (worst > 0 ? " (" + where + ")" : "")};
  }
};

Camera fd_camera() { return look_at({0.0, 0.0, -3.0}, Vec3::Zero(), {0.0, -1.0, 0.0}, 40.0, 40.0, 32, 32); }

GaussianScene random_fd_scene(std::mt19937_64& rng, const Camera& cam) {
  for (;;) {
    GaussianScene s;
    const int n = uniform_int(rng, 1, 10);
    for (int i = 0; i < n; ++i) {
      GaussianPrimitive g;
      g.position = {uniform(rng, -0.6, 0.6), uniform(rng, -0.6, 0.6), uniform(rng, -0.4, 0.4)};
      g.rotation = {uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)};
      for (int k = 0; k < 3; ++k) g.log_scale[k] = std::log(uniform(rng, 0.06, 0.25));
      g.opacity_logit = uniform(rng, -1.0, 2.0);
      g.color = {uniform(rng, 0.1, 0.9), uniform(rng, 0.1, 0.9), uniform(rng, 0.1, 0.9)};
      s.push_back(g);
    }
    const auto m = discontinuity_margin(s, {}, cam);
    std::vector<double> depth;
    for (const auto& p : s.positions()) depth.push_back(cam.to_camera(p).z());
    std::sort(depth.begin(), depth.end());
    bool separated = true;
    for (std::size_t i = 1; i < depth.size(); ++i) separated &= depth[i] - depth[i - 1] > 0.01;
    if (m.footprint > 0.05 && m.transmittance > 0.05 && separated) return s;
  }
}

Outcome renderer_gradients(std::uint64_t seed, int scenes) {
  std::mt19937_64 rng(seed);
  const Camera cam = fd_camera();
  FdStats stats;
  const double h = 1e-4;
  for (int sc = 0; sc < scenes; ++sc) {
    const GaussianScene scene = random_fd_scene(rng, cam);
    const std::size_t n = scene.size();
    const std::vector<Vec3> shifts(n, Vec3::Zero());
    Image w(32, 32, 3);
    for (auto& v : w.data) v = uniform(rng, -1.0, 1.0);
    const RenderGradients g = render_backward(scene, shifts, cam, w);

    using Apply = std::function<void(GaussianScene&, std::vector<Vec3>&, double)>;
    auto numeric = [&](const Apply& apply) {
      auto eval = [&](double d) {
        GaussianScene s = scene;
        std::vector<Vec3> sh = shifts;
        apply(s, sh, d);
        return render(s, sh, cam).rgb;
      };
      const Image a = eval(2 * h), b = eval(h), c = eval(-h), d = eval(-2 * h);
      double sum = 0.0;
      for (std::size_t k = 0; k < w.data.size(); ++k)
        sum += w.data[k] * ((-a.data[k] + 8.0 * b.data[k]) - (8.0 * c.data[k] - d.data[k]));
      return sum / (12.0 * h);
    };
    for (std::size_t i = 0; i < n; ++i) {
      const std::string tag = fmt("scene %d prim %zu", sc, i);
      for (int k = 0; k < 3; ++k) {
        stats.compare(g.shift[i][k], numeric([&](auto&, auto& sh, double d) { sh[i][k] += d; }), tag + " position");
        stats.compare(g.color[i][k], numeric([&](auto& s, auto&, double d) { s.colors()[i][k] += d; }), tag + " color");
        stats.compare(g.log_scale[i][k], numeric([&](auto& s, auto&, double d) { s.log_scales()[i][k] += d; }),
                      tag + " scale");
      }
      for (int k = 0; k < 4; ++k)
        stats.compare(g.rotation[i][k], numeric([&](auto& s, auto&, double d) { s.rotations()[i][k] += d; }),
                      tag + " rotation");
      stats.compare(g.opacity_logit[i], numeric([&](auto& s, auto&, double d) { s.opacity_logits()[i] += d; }),
                    tag + " opacity");
    }
  }
  return stats.outcome(fmt("%d scenes", scenes).c_str());
}

struct ModelFixture {
  DeformationModel model;
  std::vector<Vec3> points;
  std::vector<std::uint8_t> mask;
  std::vector<Vec3> weights;
};

ModelFixture model_fixture(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TriplaneConfig cfg;
  cfg.resolutions = {4, 8};
  cfg.feature_dim = 4;
  cfg.fusion_width = 16;
  cfg.decoder_width = 16;
  ModelFixture f;
  f.model = DeformationModel(cfg, Aabb{Vec3::Constant(-1.0), Vec3::Constant(1.0)}, seed);
  for (auto& v : f.model.field().parameters()) v = uniform(rng, -1.0, 1.0);
  for (Mlp* m : {&f.model.fusion(), &f.model.masked_decoder(), &f.model.unmasked_decoder()})
    for (auto& v : m->parameters()) v = uniform(rng, -0.5, 0.5);
  for (int i = 0; i < 30; ++i) {
    f.points.push_back({uniform(rng, -0.9, 0.9), uniform(rng, -0.9, 0.9), uniform(rng, -0.9, 0.9)});
    f.mask.push_back(i % 3 == 0 ? 1 : 0);
    f.weights.push_back({uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)});
  }
  return f;
}

/// Gradients of sum_i w_i . shift_i over the rows selected by `masked`.
ModelGradients model_grads(const ModelFixture& f, bool masked) {
  DeformTape tape;
  f.model.deform(f.points, f.mask, &tape);
  std::vector<Vec3> d(f.points.size(), Vec3::Zero());
  for (std::size_t i = 0; i < d.size(); ++i)
    if ((f.mask[i] != 0) == masked) d[i] = f.weights[i];
  ModelGradients g = f.model.zero_gradients();
  f.model.backward(tape, d, g);
  return g;
}

Outcome model_gradients(std::uint64_t seed) {
  ModelFixture f = model_fixture(seed);
  FdStats stats;
  const double h = 1e-5;
  auto loss = [&](const DeformationModel& m, bool masked) {
    const auto s = m.deform(f.points, f.mask);
    double sum = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if ((f.mask[i] != 0) == masked) sum += f.weights[i].dot(s[i]);
    return sum;
  };
  auto sweep = [&](std::span<double> params, const std::vector<double>& analytic, bool masked, const char* what) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      const double keep = params[k];
      double v[4];
      const double steps[4] = {2 * h, h, -h, -2 * h};
      for (int q = 0; q < 4; ++q) {
        params[k] = keep + steps[q];
        v[q] = loss(f.model, masked);
      }
      params[k] = keep;
      stats.compare(analytic[k], ((-v[0] + 8 * v[1]) - (8 * v[2] - v[3])) / (12 * h), fmt("%s[%zu]", what, k));
    }
  };
  const ModelGradients gm = model_grads(f, true);
  sweep(f.model.field().parameters(), gm.planes, true, "planes");
  sweep(f.model.fusion().parameters(), gm.fusion, true, "fusion");
  sweep(f.model.masked_decoder().parameters(), gm.masked_decoder, true, "masked decoder");
  const ModelGradients gu = model_grads(f, false);
  sweep(f.model.unmasked_decoder().parameters(), gu.unmasked_decoder, false, "unmasked decoder");
  return stats.outcome("deformation model");
}

std::vector<CheckResult> gradients(std::uint64_t seed) {
  return {timed("gradients", "renderer finite differences", [&] { return renderer_gradients(seed, 20); }),
          timed("gradients", "deformation finite differences", [&] { return model_gradients(seed); })};
}

// ---------------------------------------------------------------------------

std::vector<CheckResult> routing(std::uint64_t seed) {
  std::vector<CheckResult> out;
  auto all_zero = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
  };
  auto any_nonzero = [&](const std::vector<double>& v) { return !all_zero(v); };
  out.push_back(timed("routing", "unmasked loss stops at the unmasked decoder", [&] {
    const ModelGradients g = model_grads(model_fixture(seed), false);
    const bool ok = all_zero(g.planes) && all_zero(g.fusion) && all_zero(g.masked_decoder) && any_nonzero(g.unmasked_decoder);
    return Outcome{ok, ok ? "planes, fusion, masked decoder: all zero" : "leak into encoder or masked decoder"};
  }));
  out.push_back(timed("routing", "masked loss skips the unmasked decoder", [&] {
    const ModelGradients g = model_grads(model_fixture(seed), true);
    const bool ok = all_zero(g.unmasked_decoder) && any_nonzero(g.planes) && any_nonzero(g.fusion) &&
                    any_nonzero(g.masked_decoder);
    return Outcome{ok, ok ? "unmasked decoder: all zero" : "unexpected gradient routing"};
  }));
  out.push_back(timed("routing", "identity at init", [&] {
    const auto blobs = make_two_blob_scene({.per_blob = 200, .seed = seed});
    const auto cams = orbit_cameras(4, 2.5, 130, 64, 64);
    const DeformationModel model({}, blobs.scene.normalization_box(), seed);
    const auto shifts = model.deform(blobs.scene);
    for (const auto& d : shifts)
      if (d != Vec3::Zero()) return Outcome{false, "nonzero shift at init"};
    for (const auto& c : cams)
      if (!(render(blobs.scene, shifts, c).rgb == render(blobs.scene, {}, c).rgb))
        return Outcome{false, "render differs from the undeformed scene"};
    return Outcome{true, fmt("%zu primitives, %zu cameras bit-identical", shifts.size(), cams.size())};
  }));
  return out;
}

// ---------------------------------------------------------------------------

Outcome bilinear_oracle(std::uint64_t seed, int instances) {
  std::mt19937_64 rng(seed);
  for (int inst = 0; inst < instances; ++inst) {
    // Power-of-two-plus-one grids and dyadic coordinates keep every product
    // exact, so the two evaluation orders must agree bit for bit.
    const int res = (1 << uniform_int(rng, 0, 5)) + (inst % 7 == 0 ? 0 : 1);
    const int fdim = uniform_int(rng, 1, 4);
    std::vector<double> grid(static_cast<std::size_t>(res) * res * fdim);
    for (auto& v : grid) v = uniform_int(rng, -512, 512) / 256.0;
    for (int q = 0; q < 10; ++q) {
      Vec2 uv;
      for (int a = 0; a < 2; ++a)
        uv[a] = uniform_int(rng, 0, 7) == 0 ? uniform_int(rng, -3, 3) * 0.75 : -1.0 + uniform_int(rng, 0, 2048) / 1024.0;
      std::vector<double> got(static_cast<std::size_t>(fdim));
      sample_plane(grid, res, fdim, uv, got);
      const double last = res - 1;
      const double x = res == 1 ? 0.0 : (std::clamp(uv.x(), -1.0, 1.0) + 1.0) * 0.5 * last;
      const double y = res == 1 ? 0.0 : (std::clamp(uv.y(), -1.0, 1.0) + 1.0) * 0.5 * last;
      for (int f = 0; f < fdim; ++f) {
        double want = 0.0;
        for (int j = 0; j < res; ++j)
          for (int i = 0; i < res; ++i) {
            const double wgt = std::max(0.0, 1.0 - std::abs(x - i)) * std::max(0.0, 1.0 - std::abs(y - j));
            if (wgt != 0.0) want += wgt * grid[(static_cast<std::size_t>(j) * res + i) * fdim + f];
          }
        if (want != got[static_cast<std::size_t>(f)])
          return {false, fmt("instance %d: res %d uv (%g, %g) feature %d: %.17g vs %.17g", inst, res, uv.x(), uv.y(), f,
                             got[static_cast<std::size_t>(f)], want)};
      }
    }
  }
  return {true, fmt("%d grids x 10 samples", instances)};
}

GaussianScene random_points_scene(std::mt19937_64& rng, int n, double mask_rate, bool lattice) {
  GaussianScene s;
  for (int i = 0; i < n; ++i) {
    GaussianPrimitive g;
    for (int k = 0; k < 3; ++k) g.position[k] = lattice ? uniform_int(rng, -4, 4) * 0.25 : uniform(rng, -1.0, 1.0);
    g.log_scale = Vec3::Constant(std::log(0.02));
    g.masked = uniform(rng, 0.0, 1.0) < mask_rate;
    s.push_back(g);
  }
  return s;
}

Outcome knn_oracle(std::uint64_t seed, int instances) {
  std::mt19937_64 rng(seed);
  for (int inst = 0; inst < instances; ++inst) {
    const GaussianScene s = random_points_scene(rng, uniform_int(rng, 2, 250), uniform(rng, 0.05, 0.5), inst % 2 == 0);
    const std::size_t k = static_cast<std::size_t>(uniform_int(rng, 1, 20));
    const auto& p = s.positions();
    std::set<std::size_t> want;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!s.mask()[i]) continue;
      std::vector<std::pair<double, std::size_t>> all;
      for (std::size_t j = 0; j < s.size(); ++j)
        if (j != i) all.push_back({(p[j] - p[i]).squaredNorm(), j});
      std::sort(all.begin(), all.end());
      for (std::size_t q = 0; q < std::min(k, all.size()); ++q)
        if (!s.mask()[all[q].second]) want.insert(all[q].second);
    }
    const auto got = build_soft_group(s, k);
    if (std::vector<std::size_t>(want.begin(), want.end()) != got)
      return {false, fmt("instance %d: %zu vs %zu members", inst, got.size(), want.size())};
  }
  return {true, fmt("%d scenes, lattice and continuous positions", instances)};
}

Outcome frustum_oracle(std::uint64_t seed, int instances) {
  std::mt19937_64 rng(seed);
  const auto cams = orbit_cameras(6, 2.5, 60, 48, 40);
  for (int inst = 0; inst < instances; ++inst) {
    const GaussianScene s = random_points_scene(rng, uniform_int(rng, 1, 200), 0.0, false);
    std::vector<ViewRect> views;
    const int nv = uniform_int(rng, 1, 3);
    for (int v = 0; v < nv; ++v) {
      ViewRect r;
      r.camera = uniform_int(rng, 0, 5);
      const Camera& c = cams[static_cast<std::size_t>(r.camera)];
      r.x0 = uniform(rng, 0, c.width * 0.6);
      r.x1 = uniform(rng, r.x0, c.width);
      r.y0 = uniform(rng, 0, c.height * 0.6);
      r.y1 = uniform(rng, r.y0, c.height);
      views.push_back(r);
    }
    // Half-space form: inside the rectangle's pyramid and in front of every
    // camera.
    std::vector<std::uint8_t> want(s.size(), 0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      bool in = true;
      for (const auto& r : views) {
        const Camera& c = cams[static_cast<std::size_t>(r.camera)];
        const Vec3 t = c.rotation * s.positions()[i] + c.translation;
        in = in && t.z() > 0 && c.fx * t.x() + (c.cx + 0.5 - r.x0) * t.z() >= 0 &&
             c.fx * t.x() + (c.cx + 0.5 - r.x1) * t.z() < 0 && c.fy * t.y() + (c.cy + 0.5 - r.y0) * t.z() >= 0 &&
             c.fy * t.y() + (c.cy + 0.5 - r.y1) * t.z() < 0;
      }
      want[i] = in;
      count += in;
    }
    std::vector<std::uint8_t> got;
    try {
      got = select_mask_frustum(s, cams, views);
    } catch (const EmptyMaskError&) {
      got.assign(s.size(), 0);
    }
    if (got != want) return {false, fmt("instance %d disagrees (%zu oracle members)", inst, count)};
  }
  return {true, fmt("%d selections over 1-3 views", instances)};
}

Outcome dilation_oracle(std::uint64_t seed, int instances) {
  std::mt19937_64 rng(seed);
  for (int inst = 0; inst < instances; ++inst) {
    Mask2D m(uniform_int(rng, 1, 40), uniform_int(rng, 1, 40));
    const double rate = uniform(rng, 0.0, 0.1);
    for (auto& v : m.data) v = uniform(rng, 0.0, 1.0) < rate;
    const int r = uniform_int(rng, 0, 5);
    const Mask2D got = dilate_mask(m, r);
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width; ++x) {
        bool want = false;
        for (int yy = 0; yy < m.height && !want; ++yy)
          for (int xx = 0; xx < m.width && !want; ++xx)
            want = m.at(xx, yy) && std::abs(xx - x) <= r && std::abs(yy - y) <= r;
        if (want != (got.at(x, y) != 0)) return {false, fmt("instance %d pixel (%d, %d)", inst, x, y)};
      }
  }
  return {true, fmt("%d masks, radius 0-5", instances)};
}

Outcome densify_oracle(std::uint64_t seed, int instances) {
  std::mt19937_64 rng(seed);
  const DensifySettings settings;
  for (int inst = 0; inst < instances; ++inst) {
    GaussianScene s;
    const int n = uniform_int(rng, 1, 60);
    for (int i = 0; i < n; ++i) {
      GaussianPrimitive g;
      g.position = {uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)};
      g.rotation = {uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)};
      for (int k = 0; k < 3; ++k) g.log_scale[k] = std::log(uniform(rng, 0.002, 0.05));
      g.opacity_logit = uniform(rng, -4.0, 3.0);
      g.color = {uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1)};
      g.masked = uniform(rng, 0, 1) < 0.5;
      s.push_back(g);
    }
    std::vector<double> grads(s.size());
    for (auto& v : grads) v = uniform(rng, 0.0, 4e-4);
    const std::vector<std::uint8_t> eligible = s.mask();
    const double extent = uniform(rng, 0.5, 3.0);

    std::vector<std::size_t> pruned, cloned, split, survivors;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double opacity = 1.0 / (1.0 + std::exp(-s.opacity_logits()[i]));
      const double biggest = std::exp(s.log_scales()[i].maxCoeff());
      if (eligible[i] && opacity < settings.min_opacity) {
        pruned.push_back(i);
      } else if (eligible[i] && grads[i] > settings.grad_threshold && biggest > settings.dense_extent * extent) {
        split.push_back(i);
      } else {
        if (eligible[i] && grads[i] > settings.grad_threshold) cloned.push_back(i);
        survivors.push_back(i);
      }
    }
    GaussianScene out = s;
    const DensifyReport rep = densify_and_prune(out, grads, eligible, extent, settings);
    if (rep.pruned != pruned || rep.cloned != cloned || rep.split != split)
      return {false, fmt("instance %d: event lists differ", inst)};
    const std::size_t expect_after = survivors.size() + cloned.size() + 2 * split.size();
    if (out.size() != expect_after || rep.after != expect_after) return {false, fmt("instance %d: size", inst)};
    for (std::size_t q = 0; q < survivors.size(); ++q)
      if (!(out.primitive(q).position == s.positions()[survivors[q]]) || rep.origin[q] != survivors[q])
        return {false, fmt("instance %d: survivor %zu changed", inst, q)};

    // Children: along the covariance's principal axis, half a sigma for a
    // clone, one sigma each way with shrunk scales for a split.
    std::size_t c = survivors.size();
    std::vector<std::pair<std::size_t, bool>> parents;
    std::vector<std::size_t> order;
    for (std::size_t i : cloned) order.push_back(i);
    for (std::size_t i : split) order.push_back(i);
    std::sort(order.begin(), order.end());
    for (std::size_t i : order) {
      const bool is_split = std::binary_search(split.begin(), split.end(), i);
      const Mat3 cov = covariance_3d(s.rotations()[i], s.log_scales()[i]);
      Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
      const Vec3 axis = eig.eigenvectors().col(2) * std::sqrt(eig.eigenvalues()[2]);
      const int kids = is_split ? 2 : 1;
      for (int q = 0; q < kids; ++q, ++c) {
        const GaussianPrimitive child = out.primitive(c);
        const Vec3 off = child.position - s.positions()[i];
        const double want_len = (is_split ? 1.0 : 0.5) * axis.norm();
        const Vec3 dir = axis.normalized();
        if (!child.masked || std::abs(off.norm() - want_len) > 1e-9 || (off - dir * off.dot(dir)).norm() > 1e-9 ||
            rep.origin[c] != DensifyReport::kNoParent)
          return {false, fmt("instance %d: child %zu of %zu misplaced", inst, c, i)};
        const Vec3 want_scale = is_split ? Vec3(s.log_scales()[i].array() - std::log(settings.split_factor))
                                         : Vec3(s.log_scales()[i]);
        if ((child.log_scale - want_scale).cwiseAbs().maxCoeff() > 1e-12 || child.color != s.colors()[i])
          return {false, fmt("instance %d: child %zu attributes", inst, c)};
      }
    }
  }
  return {true, fmt("%d events; structure exact, child placement to 1e-9", instances)};
}

std::vector<CheckResult> oracles(std::uint64_t seed) {
  return {timed("oracles", "bilinear sampling", [&] { return bilinear_oracle(seed, 100); }),
          timed("oracles", "knn soft group", [&] { return knn_oracle(seed, 100); }),
          timed("oracles", "frustum selection", [&] { return frustum_oracle(seed, 100); }),
          timed("oracles", "mask dilation", [&] { return dilation_oracle(seed, 100); }),
          timed("oracles", "densify and prune", [&] { return densify_oracle(seed, 100); })};
}

// ---------------------------------------------------------------------------

Tensor3 random_f32_tensor(std::mt19937_64& rng, int h, int w, int c) {
  Tensor3 t(h, w, c);
  for (auto& v : t.data) v = static_cast<float>(uniform(rng, -3.0, 3.0));
  return t;
}

GuidanceRequest random_request(std::mt19937_64& rng) {
  GuidanceRequest r;
  r.camera = uniform_int(rng, 0, 11);
  // Odd sizes so the base64 payloads need padding.
  const int h = uniform_int(rng, 1, 20), w = uniform_int(rng, 1, 20);
  r.image = random_f32_tensor(rng, h, w, 3);
  r.init_image = random_f32_tensor(rng, h, w, 3);
  r.mask = random_f32_tensor(rng, h, w, 1);
  for (auto& v : r.mask.data) v = v > 0 ? 1.0 : 0.0;
  r.points.push_back({{uniform(rng, 0, 24), uniform(rng, 0, 16)}, {uniform(rng, 0, 24), uniform(rng, 0, 16)}, true});
  r.step = uniform_int(rng, 0, 999);
  r.alpha_bar = uniform(rng, 0.0, 1.0);
  r.noise = random_f32_tensor(rng, uniform_int(rng, 1, 3), uniform_int(rng, 1, 3), 4);
  r.cfg = uniform(rng, 1.0, 4.0);
  r.epoch_ratio = uniform(rng, 0.0, 1.0);
  r.seed = rng();
  return r;
}

bool same_request(const GuidanceRequest& a, const GuidanceRequest& b) {
  if (a.points.size() != b.points.size()) return false;
  for (std::size_t i = 0; i < a.points.size(); ++i)
    if (a.points[i].handle != b.points[i].handle || a.points[i].target != b.points[i].target ||
        a.points[i].on_screen != b.points[i].on_screen)
      return false;
  return a.camera == b.camera && a.image == b.image && a.init_image == b.init_image && a.mask == b.mask &&
         a.step == b.step && a.alpha_bar == b.alpha_bar && a.noise == b.noise && a.cfg == b.cfg &&
         a.epoch_ratio == b.epoch_ratio && a.seed == b.seed;
}

std::vector<CheckResult> protocol(std::uint64_t seed) {
  std::vector<CheckResult> out;
  out.push_back(timed("protocol", "serialization round trip", [&] {
    std::mt19937_64 rng(seed);
    for (int i = 0; i < 50; ++i) {
      const GuidanceRequest req = random_request(rng);
      if (!same_request(req, request_from_json(nlohmann::json::parse(request_to_json(req).dump()))))
        return Outcome{false, fmt("request %d differs", i)};
      GuidanceResponse res{random_f32_tensor(rng, 2, 3, 3), random_f32_tensor(rng, 2, 3, 3)};
      const GuidanceResponse back = response_from_json(nlohmann::json::parse(response_to_json(res).dump()));
      if (!(back.eps_tgt == res.eps_tgt) || !(back.eps_src == res.eps_src))
        return Outcome{false, fmt("response %d differs", i)};
    }
    return Outcome{true, "50 requests and responses bit-exact"};
  }));
  out.push_back(timed("protocol", "loopback stub", [&] {
    std::mt19937_64 rng(seed + 1);
    const GuidanceRequest req = random_request(rng);
    const Tensor3& n = req.noise;
    const GuidanceResponse expect{random_f32_tensor(rng, n.height, n.width, n.channels),
                                  random_f32_tensor(rng, n.height, n.width, n.channels)};
    GuidanceResponse wrong = expect;
    wrong.eps_tgt = Tensor3(n.height + 1, n.width, n.channels);
    httplib::Server stub;
    bool request_ok = false;
    stub.Post("/good", [&](const httplib::Request& r, httplib::Response& res) {
      request_ok = same_request(request_from_json(nlohmann::json::parse(r.body)), req);
      res.set_content(response_to_json(expect).dump(), "application/json");
    });
    stub.Post("/wrong", [&](const httplib::Request&, httplib::Response& res) {
      res.set_content(response_to_json(wrong).dump(), "application/json");
    });
    const int port = stub.bind_to_any_port("127.0.0.1");
    std::thread th([&] { stub.listen_after_bind(); });
    stub.wait_until_ready();
    Outcome result{true, "tensors bit-exact; shape mismatch rejected"};
    try {
      const std::string base = "http://127.0.0.1:" + std::to_string(port);
      const GuidanceResponse got = HttpGuidanceOracle(base + "/good").predict(req, SourceEstimator{});
      if (!request_ok || !(got.eps_tgt == expect.eps_tgt) || !(got.eps_src == expect.eps_src))
        result = {false, "loopback tensors differ"};
      try {
        HttpGuidanceOracle(base + "/wrong", {.attempts = 1}).predict(req, SourceEstimator{});
        result = {false, "shape mismatch accepted"};
      } catch (const GuidanceUnavailable&) {
      }
    } catch (const std::exception& e) {
      result = {false, e.what()};
    }
    stub.stop();
    th.join();
    return result;
  }));
  return out;
}

}  // namespace

std::vector<std::string> verify_suite_names() { return {"schedules", "gradients", "routing", "oracles", "protocol"}; }

std::optional<std::vector<CheckResult>> run_verify_suite(std::string_view name, std::uint64_t seed) {
  if (name == "all") {
    std::vector<CheckResult> all;
    for (const auto& n : verify_suite_names()) {
      auto r = run_verify_suite(n, seed);
      all.insert(all.end(), r->begin(), r->end());
    }
    return all;
  }
  if (name == "schedules") return schedules();
  if (name == "gradients") return gradients(seed);
  if (name == "routing") return routing(seed);
  if (name == "oracles") return oracles(seed);
  if (name == "protocol") return protocol(seed);
  return std::nullopt;
}

}  // namespace gsdrag
