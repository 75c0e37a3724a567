#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "gsdrag/scene.hpp"

namespace gsdrag {

// Binary little-endian PLY subset: element `vertex` with x y z, rot_0..rot_3,
// scale_0..scale_2 (log), opacity (logit), f_dc_0..f_dc_2 and an optional
// uchar `edit_mask`. Other vertex properties are skipped on load and not
// written back.

GaussianScene load_scene(const std::filesystem::path& path);
GaussianScene read_scene(std::istream& in);

void save_scene(const GaussianScene& scene, const std::filesystem::path& path);
void write_scene(const GaussianScene& scene, std::ostream& out);

}  // namespace gsdrag
