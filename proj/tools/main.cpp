#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace gsdrag::cli;
  CLI::App app{"gsdrag: drag-based editing of 3D Gaussian scenes"};
  app.require_subcommand(1);

  // edit
  RunConfig flags;
  std::string config_path;
  std::uint64_t seed = 0;
  bool quiet = false;
  HyperparameterFlags hyper;
  auto* edit = app.add_subcommand("edit", "run a two-stage drag edit headlessly");
  edit->add_option("--config", config_path, "JSON run config (flags override it)");
  edit->add_option("--scene", flags.scene, "input scene (PLY)");
  edit->add_option("--cameras", flags.cameras, "camera list (JSON)");
  edit->add_option("--spec", flags.spec, "edit spec (JSON: mask, points, hyperparameters)");
  edit->add_option("--out", flags.out, "output directory; every artifact goes here");
  auto* seed_opt = edit->add_option("--seed", seed, "random seed");
  edit->add_option("--guidance", flags.guidance, "synthetic:<target.ply|png dir> or http:<url>");
  edit->add_option("--resume", flags.resume, "continue from a run checkpoint");
  edit->add_flag("--quiet", quiet, "no progress lines");
  hyper.attach(*edit);

  // serve
  ServeOptions serve;
  auto* srv = app.add_subcommand("serve", "HTTP + WebSocket editing service");
  srv->add_option("--host", serve.host, "bind address");
  srv->add_option("--port", serve.port, "port (0 picks a free one)");
  srv->add_option("--out", serve.out, "directory for checkpoints written on shutdown")->required();
  srv->add_option("--guidance", serve.guidance, "synthetic:<target.ply|png dir> or http:<url>");
  srv->add_option("--scene", serve.scene, "scene to preload");
  srv->add_option("--cameras", serve.cameras, "cameras for the preloaded scene");
  srv->add_option("--target", serve.target, "synthetic target scene for the preloaded scene");
  srv->add_option("--resume", serve.resume, "restore a checkpointed run into the default session");
  srv->add_option("--progress-every", serve.progress_every, "iterations between progress events");
  srv->add_option("--preview-width", serve.preview_width, "preview render width");
  srv->add_option("--body-limit-mb", serve.body_limit_mb, "largest accepted request body");
  srv->add_flag("--multi-session", serve.multi_session, "select sessions with ?session=<name>");

  // render
  RenderOptions render;
  auto* rnd = app.add_subcommand("render", "render views of a scene to PNG");
  rnd->add_option("--scene", render.scene, "scene (PLY)")->required();
  rnd->add_option("--cameras", render.cameras, "camera list (JSON)")->required();
  rnd->add_option("--out", render.out, "output directory")->required();
  rnd->add_option("--camera", render.camera, "single camera index (default: all)");
  rnd->add_option("--width", render.width, "render width (default: camera width)");
  rnd->add_option("--layer", render.layer, "rgb or mask")->check(CLI::IsMember({"rgb", "mask"}));

  // verify
  std::string suite;
  std::uint64_t verify_seed = 1;
  auto* ver = app.add_subcommand("verify", "run a verification suite");
  ver->add_option("suite", suite, "schedules, gradients, routing, oracles, protocol or all")->required();
  ver->add_option("--seed", verify_seed, "seed for randomized instances");

  // make-demo
  DemoOptions demo;
  auto* dem = app.add_subcommand("make-demo", "write the two-blob demo scene, target, cameras and spec");
  dem->add_option("--out", demo.out, "output directory")->required();
  dem->add_option("--cameras", demo.cameras, "orbit cameras");
  dem->add_option("--size", demo.size, "image width and height (multiple of 8)");
  dem->add_option("--fx", demo.fx, "focal length in pixels");
  dem->add_option("--distance", demo.distance, "orbit radius");
  dem->add_option("--drag", demo.drag, "drag length along +x");
  dem->add_option("--per-blob", demo.per_blob, "primitives per blob");
  dem->add_option("--seed", demo.seed, "scene seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*edit) {
      RunConfig file;
      if (!config_path.empty()) file = load_run_config(config_path);
      if (*seed_opt) flags.seed = seed;
      flags.overrides = hyper.collect();
      return run_edit(layer(file, flags), quiet);
    }
    if (*srv) return run_serve(serve);
    if (*rnd) return run_render(render);
    if (*ver) return run_verify(suite, verify_seed);
    if (*dem) return run_make_demo(demo);
  } catch (const gsdrag::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
