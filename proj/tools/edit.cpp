#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include "commands.hpp"
#include "gsdrag/edit_run.hpp"
#include "gsdrag/guidance_source.hpp"
#include "gsdrag/ply.hpp"

namespace gsdrag::cli {

namespace fs = std::filesystem;

namespace {

int usage(const std::string& message) {
  std::cerr << "error: " << message << "\n"
            << "usage: gsdrag edit --scene <ply> --cameras <json> --spec <json> --guidance <mode> --out <dir>\n"
            << "       gsdrag edit --resume <checkpoint> --guidance <mode> --out <dir>\n";
  return kUsage;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

void write_renders(const GaussianScene& scene, const std::vector<Camera>& cams, const fs::path& dir,
                   const char* prefix) {
  for (std::size_t i = 0; i < cams.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "%s_%03zu.png", prefix, i);
    write_png(render(scene, {}, cams[i]).rgb, dir / name);
  }
}

nlohmann::json metrics_json(const EditRun& run) {
  const EditMetrics m = edit_metrics(run);
  const Vec3& d = m.masked_mean_shift;
  return {{"status", std::string(to_string(run.status()))},
          {"iterations", run.iteration()},
          {"primitives", m.primitives},
          {"masked", m.masked},
          {"masked_mean_shift", {d.x(), d.y(), d.z()}},
          {"unmasked_mean_displacement", m.unmasked_mean_displacement},
          {"densify_events", run.densify_log().size()},
          {"control_pairs", run.spec().points.size()}};
}

}  // namespace

int run_edit(const RunConfig& cfg, bool quiet) {
  block_termination_signals();
  if (cfg.out.empty()) return usage("missing --out");
  if (cfg.guidance.empty()) return usage("missing --guidance");
  if (cfg.resume.empty()) {
    if (cfg.scene.empty()) return usage("missing --scene");
    if (cfg.cameras.empty()) return usage("missing --cameras");
    if (!fs::is_regular_file(cfg.scene)) return usage("scene '" + cfg.scene + "' not found");
    if (!fs::is_regular_file(cfg.cameras)) return usage("cameras '" + cfg.cameras + "' not found");
  }
  const GuidanceFactory factory = parse_guidance(cfg.guidance);

  std::unique_ptr<EditRun> run;
  try {
    if (!cfg.resume.empty()) {
      run = std::make_unique<EditRun>(EditRun::load_checkpoint(cfg.resume, nullptr));
      run->set_oracle(factory(run->mirror().scene(), run->cameras()));
      if (run->status() == RunStatus::Paused) run->resume();
    } else {
      GaussianScene scene = load_scene(cfg.scene);
      std::vector<Camera> cams = load_cameras(cfg.cameras);
      EditSpec spec = resolve_edit_spec(cfg);
      auto oracle = factory(scene, cams);
      run = std::make_unique<EditRun>(std::move(scene), std::move(cams), std::move(spec), std::move(oracle));
    }
  } catch (const ConfigError& e) {
    return usage(e.what());
  } catch (const EmptyMaskError& e) {
    return usage(e.what());
  } catch (const FormatError& e) {
    return usage(e.what());
  } catch (const DataError& e) {
    return usage(e.what());
  } catch (const GuidanceUnavailable& e) {
    std::cerr << "error: guidance unavailable: " << e.what() << "\n";
    return kEnvironment;
  }

  const fs::path out = cfg.out;
  try {
    fs::create_directories(out / "renders");
    write_text(out / "edit_spec.json", edit_spec_to_json(run->spec()).dump(2) + "\n");
    if (cfg.resume.empty()) write_renders(run->mirror().scene(), run->cameras(), out / "renders", "before");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kEnvironment;
  }

  std::atomic<bool> finished{false};
  std::atomic<int> caught{0};
  std::thread watcher([&] {
    while (!finished) {
      if (const int s = wait_for_signal(100)) {
        caught = s;
        run->request_pause();
      }
    }
  });
  const auto t0 = std::chrono::steady_clock::now();
  const int total = run->plan().total;
  std::string crash;
  try {
    run->run([&](const EditRun& r) {
      if (quiet || r.history().empty()) return;
      const int it = r.iteration();
      if (it % 100 != 0 && it != total) return;
      const LossRecord& h = r.history().back();
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::fprintf(stderr, "it %4d/%d  s=%.3f t=%3d  lat=%.4g img=%.4g rr=%.4g  n=%zu  %.1fs\n", it, total, h.s, h.t,
                   h.latent, h.image, h.region, r.scene().size(), secs);
    });
  } catch (const std::exception& e) {
    crash = e.what();
  }
  finished = true;
  watcher.join();

  try {
    write_text(out / "loss.csv", run->history_csv());
    const bool failed = !crash.empty() || run->status() == RunStatus::Failed ||
                        (run->status() == RunStatus::Paused && caught == 0);
    if (failed) {
      const fs::path diag = out / "diagnostic";
      fs::create_directories(diag);
      const std::string reason = crash.empty() ? run->status_reason() : crash;
      write_text(diag / "reason.txt", reason + "\n");
      write_text(diag / "loss.csv", run->history_csv());
      write_text(diag / "metrics.json", metrics_json(*run).dump(2) + "\n");
      save_scene(run->deformed_scene(), diag / "scene.ply");
      run->save_checkpoint(diag / "run.ckpt");
      std::cerr << "edit failed at iteration " << run->iteration() << ": " << reason << "\n"
                << "diagnostic snapshot: " << diag.string() << "\n";
      return kPipelineFailure;
    }
    if (caught != 0) {
      run->save_checkpoint(out / "run.ckpt");
      std::cerr << "interrupted at iteration " << run->iteration() << "; checkpoint: " << (out / "run.ckpt").string()
                << " (continue with --resume)\n";
      return kPipelineFailure;
    }
    const GaussianScene result = commit(*run);
    save_scene(result, out / "result.ply");
    run->model().save(out / "model.bin");
    run->save_checkpoint(out / "run.ckpt");
    write_renders(result, run->cameras(), out / "renders", "after");
    const nlohmann::json summary = metrics_json(*run);
    write_text(out / "summary.json", summary.dump(2) + "\n");
    if (!quiet) std::cerr << "done: " << summary.dump() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: writing artifacts: " << e.what() << "\n";
    return kEnvironment;
  }
  return kOk;
}

}  // namespace gsdrag::cli
