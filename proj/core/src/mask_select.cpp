#include "gsdrag/mask_select.hpp"

#include <string>

namespace gsdrag {

std::vector<std::uint8_t> select_mask_frustum(const GaussianScene& scene, std::span<const Camera> cameras,
                                              std::span<const ViewRect> views) {
  if (views.empty()) throw ConfigError("mask selection needs at least one view rectangle");
  for (const auto& r : views) {
    if (r.camera < 0 || static_cast<std::size_t>(r.camera) >= cameras.size())
      throw ConfigError("mask selection: camera index " + std::to_string(r.camera) + " out of range");
    const Camera& c = cameras[static_cast<std::size_t>(r.camera)];
    if (!(r.x0 >= 0 && r.y0 >= 0 && r.x1 <= c.width && r.y1 <= c.height && r.x0 <= r.x1 && r.y0 <= r.y1))
      throw ConfigError("mask selection: rectangle outside image bounds of camera " + std::to_string(r.camera));
  }

  std::vector<std::uint8_t> flags(scene.size(), 0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    bool inside = true;
    for (const auto& r : views) {
      const auto p = try_project_point(cameras[static_cast<std::size_t>(r.camera)], scene.positions()[i]);
      if (!p) {
        inside = false;
        break;
      }
      const double x = p->u + 0.5, y = p->v + 0.5;
      if (!(x >= r.x0 && x < r.x1 && y >= r.y0 && y < r.y1)) {
        inside = false;
        break;
      }
    }
    if (inside) {
      flags[i] = 1;
      ++count;
    }
  }
  if (count == 0) throw EmptyMaskError("frustum selection is empty; choose a different region");
  return flags;
}

}  // namespace gsdrag
