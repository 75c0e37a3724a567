#include "gsdrag/guidance_source.hpp"

#include <algorithm>
#include <filesystem>

#include "gsdrag/ply.hpp"
#include "gsdrag/protocol.hpp"

namespace gsdrag {

namespace fs = std::filesystem;

std::vector<Image> load_target_images(const std::string& dir, const std::vector<Camera>& cameras) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.size() != cameras.size())
    throw ConfigError(dir + ": " + std::to_string(files.size()) + " target images for " +
                      std::to_string(cameras.size()) + " cameras");
  std::vector<Image> out;
  for (std::size_t i = 0; i < files.size(); ++i) {
    Image img = read_png(files[i]);
    if (img.width != cameras[i].width || img.height != cameras[i].height || img.channels != 3)
      throw ConfigError(files[i].string() + ": expected a " + std::to_string(cameras[i].width) + "x" +
                        std::to_string(cameras[i].height) + " RGB image");
    out.push_back(std::move(img));
  }
  return out;
}

GuidanceFactory parse_guidance(std::string_view mode) {
  const std::string m(mode);
  if (m.rfind("synthetic:", 0) == 0) {
    const std::string path = m.substr(10);
    if (path.empty()) throw ConfigError("synthetic guidance needs a target path");
    if (fs::is_directory(path)) {
      return [path](const GaussianScene&, const std::vector<Camera>& cameras) {
        return std::make_shared<const SyntheticOracle>(load_target_images(path, cameras));
      };
    }
    if (!fs::is_regular_file(path)) throw ConfigError("synthetic guidance target '" + path + "' not found");
    auto target = std::make_shared<const GaussianScene>(load_scene(path));
    return [target](const GaussianScene&, const std::vector<Camera>& cameras) {
      return std::make_shared<const SyntheticOracle>(SyntheticOracle::from_scene(*target, cameras));
    };
  }
  if (m.rfind("http:", 0) == 0) {
    std::string url = m.rfind("http://", 0) == 0 ? m : "http://" + m.substr(5);
    if (url.size() <= 7) throw ConfigError("http guidance needs a url");
    auto oracle = std::make_shared<const HttpGuidanceOracle>(url);
    return [oracle](const GaussianScene&, const std::vector<Camera>&) { return oracle; };
  }
  throw ConfigError("unknown guidance mode '" + m + "' (want synthetic:<path> or http:<url>)");
}

}  // namespace gsdrag
