#include <csignal>
#include <iostream>

#include "commands.hpp"
#include "gsdrag/service.hpp"

namespace gsdrag::cli {

void block_termination_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
}

int wait_for_signal(int timeout_ms) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  timespec ts{timeout_ms / 1000, static_cast<long>(timeout_ms % 1000) * 1000000L};
  const int s = sigtimedwait(&set, nullptr, &ts);
  return s > 0 ? s : 0;
}

int run_serve(const ServeOptions& o) {
  block_termination_signals();
  if (o.port < 0 || o.port > 65535) {
    std::cerr << "error: port must be in [0, 65535]\n";
    return kUsage;
  }
  if (o.progress_every < 1 || o.preview_width < 8 || !(o.body_limit_mb > 0)) {
    std::cerr << "error: progress-every, preview-width and body-limit-mb must be positive\n";
    return kUsage;
  }
  ServiceOptions so;
  so.checkpoint_dir = o.out;
  so.progress_every = o.progress_every;
  so.preview_width = o.preview_width;
  so.body_limit = static_cast<std::size_t>(o.body_limit_mb * 1024 * 1024);
  so.multi_session = o.multi_session;
  if (!o.guidance.empty()) so.guidance = parse_guidance(o.guidance);
  Service service(so);

  try {
    std::filesystem::create_directories(o.out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kEnvironment;
  }
  if (!o.resume.empty()) {
    try {
      service.session_for("/").restore(o.resume);
    } catch (const std::exception& e) {
      std::cerr << "error: cannot restore " << o.resume << ": " << e.what() << "\n";
      return kUsage;
    }
  }
  if (!o.scene.empty() || !o.cameras.empty()) {
    nlohmann::json body = {{"scene_path", o.scene}, {"cameras_path", o.cameras}};
    if (!o.target.empty()) body["target_path"] = o.target;
    const ApiResponse r = service.handle({"POST", "/v1/scene", body.dump(), {}});
    if (r.status != 200) {
      std::cerr << "error: preloading scene: " << r.body << "\n";
      return kUsage;
    }
  }

  Server server(service, o.host, static_cast<unsigned short>(o.port));
  try {
    server.start();
  } catch (const std::system_error& e) {
    std::cerr << "error: cannot listen on " << o.host << ":" << o.port << ": " << e.what() << "\n";
    return kEnvironment;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  std::cout << "listening on http://" << o.host << ":" << server.port() << std::endl;

  int sig = 0;
  while ((sig = wait_for_signal(1000)) == 0) {
  }
  std::cerr << "caught signal " << sig << ", pausing runs\n";
  for (const auto& p : service.shutdown()) std::cout << "checkpoint: " << p.string() << std::endl;
  server.stop();
  return kOk;
}

}  // namespace gsdrag::cli
