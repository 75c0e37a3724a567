#include "gsdrag/densify.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "gsdrag/render.hpp"

namespace gsdrag {
namespace {

/// World-space vector along the primitive's largest axis, one standard
/// deviation long.
Vec3 major_axis(const GaussianPrimitive& g) {
  const Vec3 s = g.scale();
  int k = 0;
  for (int a = 1; a < 3; ++a)
    if (s[a] > s[k]) k = a;
  return rotation_matrix(g.rotation).col(k) * s[k];
}

}  // namespace

DensifyReport densify_and_prune(GaussianScene& scene, std::span<const double> grads,
                                std::span<const std::uint8_t> eligible, double extent,
                                const DensifySettings& settings) {
  const std::size_t n = scene.size();
  if (grads.size() != n || eligible.size() != n)
    throw std::invalid_argument("densify_and_prune: statistics do not match the scene size");
  if (!(settings.split_factor > 0.0)) throw ConfigError("densify: split factor must be positive");

  DensifyReport report;
  report.before = n;
  // std::vector<bool> is not contiguous, and retain takes a span.
  auto keep = std::make_unique<bool[]>(n);
  std::fill_n(keep.get(), n, true);
  std::vector<GaussianPrimitive> created;
  const double shrink = std::log(settings.split_factor);

  for (std::size_t i = 0; i < n; ++i) {
    if (!eligible[i]) continue;
    const GaussianPrimitive g = scene.primitive(i);
    if (g.opacity() < settings.min_opacity) {
      keep[i] = false;
      report.pruned.push_back(i);
      continue;
    }
    if (!(grads[i] > settings.grad_threshold)) continue;
    const Vec3 axis = major_axis(g);
    if (g.scale().maxCoeff() <= settings.dense_extent * extent) {
      GaussianPrimitive c = g;
      c.position += 0.5 * axis;
      created.push_back(c);
      report.cloned.push_back(i);
    } else {
      for (double sign : {1.0, -1.0}) {
        GaussianPrimitive c = g;
        c.position += sign * axis;
        c.log_scale.array() -= shrink;
        created.push_back(c);
      }
      keep[i] = false;
      report.split.push_back(i);
    }
  }

  std::vector<std::size_t> survivors;
  for (std::size_t i = 0; i < n; ++i)
    if (keep[i]) survivors.push_back(i);
  scene.retain(std::span<const bool>(keep.get(), n));
  report.origin = survivors;
  for (auto& c : created) {
    c.masked = true;
    const std::size_t idx = scene.push_back(c);
    report.created.push_back(idx);
    report.origin.push_back(DensifyReport::kNoParent);
  }
  report.after = scene.size();
  return report;
}

}  // namespace gsdrag
