#pragma once

#include <string>

#include "run_config.hpp"

namespace gsdrag::cli {

int run_edit(const RunConfig& cfg, bool quiet);

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string out;
  std::string guidance;
  std::string scene, cameras, target;
  std::string resume;
  int progress_every = 10;
  int preview_width = 256;
  double body_limit_mb = 256;
  bool multi_session = false;
};
int run_serve(const ServeOptions& opts);

struct RenderOptions {
  std::string scene, cameras, out;
  int camera = -1;
  int width = 0;
  std::string layer = "rgb";
};
int run_render(const RenderOptions& opts);

int run_verify(const std::string& suite, std::uint64_t seed);

struct DemoOptions {
  std::string out;
  int cameras = 12;
  int size = 64;
  double fx = 130;
  double distance = 2.5;
  double drag = 0.3;
  int per_blob = 1000;
  std::uint64_t seed = 7;
};
int run_make_demo(const DemoOptions& opts);

/// Blocks SIGINT and SIGTERM in the calling thread and every thread it
/// starts afterwards, so they can be collected with wait_for_signal().
void block_termination_signals();
/// The caught signal, or 0 after `timeout_ms` without one.
int wait_for_signal(int timeout_ms);

}  // namespace gsdrag::cli
