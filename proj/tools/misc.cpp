#include <cstdio>
#include <fstream>
#include <iostream>

#include "commands.hpp"
#include "gsdrag/ply.hpp"
#include "gsdrag/render.hpp"
#include "gsdrag/synthetic.hpp"
#include "gsdrag/verify.hpp"

namespace gsdrag::cli {

namespace fs = std::filesystem;

int run_render(const RenderOptions& o) {
  GaussianScene scene;
  std::vector<Camera> cams;
  try {
    scene = load_scene(o.scene);
    cams = load_cameras(o.cameras);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  if (o.camera >= static_cast<int>(cams.size())) {
    std::cerr << "error: camera " << o.camera << " out of range (" << cams.size() << " cameras)\n";
    return kUsage;
  }
  try {
    fs::create_directories(o.out);
    for (std::size_t i = 0; i < cams.size(); ++i) {
      if (o.camera >= 0 && static_cast<int>(i) != o.camera) continue;
      const Camera cam = o.width > 0 ? cams[i].resized(o.width) : cams[i];
      const Image img = o.layer == "mask"
                            ? dilate_mask(render_mask(scene, {}, cam), default_dilation_radius(cam.width)).to_image()
                            : render(scene, {}, cam).rgb;
      char name[64];
      std::snprintf(name, sizeof name, "%s_%03zu.png", o.layer.c_str(), i);
      write_png(img, fs::path(o.out) / name);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kEnvironment;
  }
  return kOk;
}

int run_verify(const std::string& suite, std::uint64_t seed) {
  const auto results = run_verify_suite(suite, seed);
  if (!results) {
    std::cerr << "error: unknown suite '" << suite << "' (known: all";
    for (const auto& n : verify_suite_names()) std::cerr << ", " << n;
    std::cerr << ")\n";
    return kUsage;
  }
  bool ok = true;
  std::printf("%-10s %-46s %-5s %8s  %s\n", "suite", "check", "", "seconds", "detail");
  for (const auto& r : *results) {
    std::printf("%-10s %-46s %-5s %8.2f  %s\n", r.suite.c_str(), r.name.c_str(), r.passed ? "PASS" : "FAIL", r.seconds,
                r.detail.c_str());
    ok &= r.passed;
  }
  return ok ? kOk : kPipelineFailure;
}

int run_make_demo(const DemoOptions& o) {
  if (o.size < 8 || o.size % 8 != 0 || o.cameras < 1 || o.per_blob < 1) {
    std::cerr << "error: size must be a positive multiple of 8; cameras and per-blob positive\n";
    return kUsage;
  }
  TwoBlobOptions blob;
  blob.per_blob = static_cast<std::size_t>(o.per_blob);
  blob.drag = {o.drag, 0.0, 0.0};
  blob.seed = o.seed;
  const TwoBlobScene demo = make_two_blob_scene(blob);
  const auto cams = orbit_cameras(static_cast<std::size_t>(o.cameras), o.distance, o.fx, o.size, o.size);
  const Vec3 h = demo.handle, t = demo.handle + demo.drag;
  const nlohmann::json spec = {{"mask", {{"type", "scene"}}},
                               {"points", {{{"handle", {h.x(), h.y(), h.z()}}, {"target", {t.x(), t.y(), t.z()}}}}},
                               {"seed", 1}};
  const nlohmann::json config = {{"scene", "scene.ply"},   {"cameras", "cameras.json"},
                                 {"spec", "spec.json"},    {"guidance", "synthetic:target.ply"},
                                 {"out", "result"}};
  try {
    const fs::path dir = o.out;
    fs::create_directories(dir);
    save_scene(demo.scene, dir / "scene.ply");
    save_scene(demo.target, dir / "target.ply");
    save_cameras(cams, dir / "cameras.json");
    std::ofstream(dir / "spec.json") << spec.dump(2) << "\n";
    std::ofstream(dir / "config.json") << config.dump(2) << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kEnvironment;
  }
  std::cout << "wrote scene.ply (" << demo.scene.size() << " primitives), target.ply, cameras.json (" << cams.size()
            << "), spec.json, config.json to " << o.out << "\n";
  return kOk;
}

}  // namespace gsdrag::cli
