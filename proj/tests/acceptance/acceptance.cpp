// One line per acceptance criterion; exit status 0 only if all pass.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "gsdrag/edit_run.hpp"
#include "gsdrag/protocol.hpp"
#include "gsdrag/synthetic.hpp"
#include "gsdrag/verify.hpp"

#include <httplib.h>

using namespace gsdrag;

namespace {

struct Line {
  bool passed;
  std::string detail;
};

template <class... A>
std::string fmt(const char* f, A... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

int failures = 0;

// `spent` adds time already used elsewhere, for results computed up front.
void report(const char* name, double limit_s, const std::function<Line()>& body, double spent = 0) {
  const auto t0 = std::chrono::steady_clock::now();
  Line l;
  try {
    l = body();
  } catch (const std::exception& e) {
    l = {false, std::string("exception: ") + e.what()};
  }
  const double s = spent + std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (limit_s > 0 && s > limit_s) {
    l.passed = false;
    l.detail += fmt("; over the %.0f s budget", limit_s);
  }
  failures += !l.passed;
  std::printf("%s  %-34s %s [%.1f s]\n", l.passed ? "PASS" : "FAIL", name, l.detail.c_str(), s);
  std::fflush(stdout);
}

Line from_checks(const std::vector<CheckResult>& checks, const std::vector<std::string>& names = {}) {
  Line l{true, ""};
  for (const auto& c : checks) {
    if (!names.empty() && std::find(names.begin(), names.end(), c.name) == names.end()) continue;
    l.passed = l.passed && c.passed;
    l.detail += (l.detail.empty() ? "" : "; ") + c.name + ": " + c.detail;
  }
  return l;
}

Vec3 centroid(const GaussianScene& s, bool masked) {
  Vec3 sum = Vec3::Zero();
  std::size_t n = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    if ((s.mask()[i] != 0) == masked) {
      sum += s.positions()[i];
      ++n;
    }
  return n ? Vec3(sum / static_cast<double>(n)) : Vec3(Vec3::Zero());
}

Vec3 mean_color(const GaussianScene& s) {
  Vec3 sum = Vec3::Zero();
  for (const auto& c : s.colors()) sum += c;
  return s.empty() ? Vec3(Vec3::Zero()) : Vec3(sum / static_cast<double>(s.size()));
}

std::shared_ptr<const GuidanceOracle> target_oracle(const GaussianScene& target, const std::vector<Camera>& cams) {
  return std::make_shared<const SyntheticOracle>(SyntheticOracle::from_scene(target, cams));
}

Line fixed_point() {
  const auto demo = make_two_blob_scene();
  const auto cams = orbit_cameras(12, 2.5, 130, 64, 64);
  EditSpec spec;
  spec.points = {{demo.handle, demo.handle}};
  spec.hp.iterations = 300;
  EditRun run(demo.scene, cams, spec, target_oracle(demo.scene, cams));
  run.run();
  if (run.status() != RunStatus::Done) return {false, "run " + std::string(to_string(run.status())) + ": " + run.status_reason()};
  const GaussianScene out = run.deformed_scene();
  Vec3 before = Vec3::Zero(), after = Vec3::Zero();
  for (const auto& p : demo.scene.positions()) before += p;
  for (const auto& p : out.positions()) after += p;
  before /= static_cast<double>(demo.scene.size());
  after /= static_cast<double>(out.size());
  const double dpos = (after - before).norm();
  const double dcol = (mean_color(out) - mean_color(demo.scene)).cwiseAbs().maxCoeff();
  const EditMetrics m = edit_metrics(run);
  return {dpos <= 1e-3 && dcol <= 1e-2,
          fmt("300 it: mean position moved %.2e, mean color moved %.2e, mean masked shift %.2e", dpos, dcol,
              m.masked_mean_shift.norm())};
}

Line end_to_end() {
  const auto demo = make_two_blob_scene();
  const auto cams = orbit_cameras(12, 2.5, 130, 64, 64);
  EditSpec spec;
  spec.points = {{demo.handle, demo.handle + demo.drag}};
  spec.seed = 1;
  EditRun run(demo.scene, cams, spec, target_oracle(demo.target, cams));
  const int stage2 = run.plan().stage2_start;
  bool stage1_frozen = true;
  std::size_t created = 0, created_unmasked = 0, seen_events = 0;
  run.run([&](const EditRun& r) {
    if (r.iteration() <= stage2 && !(r.scene() == demo.scene)) stage1_frozen = false;
    for (; seen_events < r.densify_log().size(); ++seen_events)
      for (auto i : r.densify_log()[seen_events].created) {
        ++created;
        created_unmasked += r.scene().mask()[i] == 0;
      }
  });
  if (run.status() != RunStatus::Done) return {false, "run " + std::string(to_string(run.status())) + ": " + run.status_reason()};
  const GaussianScene out = run.deformed_scene();
  const Vec3 dir = demo.drag.normalized();
  const double along = (centroid(out, true) - centroid(demo.scene, true)).dot(dir);
  const double unmasked = edit_metrics(run).unmasked_mean_displacement;
  const double need = 0.9 * demo.drag.norm(), cap = 0.02 * demo.drag.norm();
  const bool ok = along >= need && unmasked <= cap && stage1_frozen && created_unmasked == 0;
  return {ok, fmt("%d it, %zu prims: masked centroid +%.4f along d (need %.2f), unmasked %.5f (cap %.3f), "
                  "stage 1 %s, densify %zu events created %zu (%zu unmasked)",
                  run.iteration(), out.size(), along, need, unmasked, cap, stage1_frozen ? "bit-identical" : "CHANGED",
                  run.densify_log().size(), created, created_unmasked)};
}

Line determinism() {
  TwoBlobOptions o;
  o.per_blob = 300;
  const auto demo = make_two_blob_scene(o);
  const auto cams = orbit_cameras(8, 2.5, 65, 32, 32);
  EditSpec spec;
  spec.points = {{demo.handle, demo.handle + demo.drag}};
  spec.hp.iterations = 250;
  spec.seed = 11;
  std::string csv[2];
  std::size_t events = 0;
  for (auto& c : csv) {
    EditRun run(demo.scene, cams, spec, target_oracle(demo.target, cams));
    run.run();
    c = run.history_csv();
    events = run.densify_log().size();
  }
  return {csv[0] == csv[1] && !csv[0].empty(),
          fmt("two 250-iteration runs, %zu CSV bytes, %zu densify events: %s", csv[0].size(), events,
              csv[0] == csv[1] ? "byte-identical" : "DIFFER")};
}

Line shape_mismatch_pause() {
  httplib::Server stub;
  stub.Post("/", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(response_to_json({Latent(1, 1, 3), Latent(1, 1, 3)}).dump(), "application/json");
  });
  const int port = stub.bind_to_any_port("127.0.0.1");
  std::thread th([&] { stub.listen_after_bind(); });
  stub.wait_until_ready();
  TwoBlobOptions o;
  o.per_blob = 50;
  const auto demo = make_two_blob_scene(o);
  EditSpec spec;
  spec.points = {{demo.handle, demo.handle + demo.drag}};
  spec.hp.iterations = 20;
  HttpOracleOptions fast;
  fast.attempts = 1;
  EditRun run(demo.scene, orbit_cameras(4, 2.5, 40, 16, 16), spec,
              std::make_shared<HttpGuidanceOracle>("http://127.0.0.1:" + std::to_string(port) + "/", fast));
  run.run();
  stub.stop();
  th.join();
  bool zero = true;
  for (const auto& d : run.shifts()) zero = zero && d == Vec3::Zero();
  const bool ok = run.status() == RunStatus::Paused && run.iteration() == 0 && run.history().empty() &&
                  run.scene() == demo.scene && zero;
  return {ok, "wrong-shape response: " + std::string(to_string(run.status())) +
                  fmt(" at iteration %d, scene %s", run.iteration(), ok ? "untouched" : "MODIFIED")};
}

}  // namespace

int main() {
  const auto schedules = *run_verify_suite("schedules");
  const auto gradients = *run_verify_suite("gradients");
  const auto routing = *run_verify_suite("routing");

  auto seconds = [](const std::vector<CheckResult>& v, const std::vector<std::string>& names) {
    double s = 0;
    for (const auto& c : v)
      if (std::find(names.begin(), names.end(), c.name) != names.end()) s += c.seconds;
    return s;
  };
  auto timed_line = [&](const char* name, double limit, Line l, double s) {
    report(name, limit, [&] { return l; }, s);
  };

  timed_line("schedule fidelity", 1, from_checks(schedules, {"timestep endpoints", "stage threshold", "cfg endpoints"}),
             seconds(schedules, {"timestep endpoints", "stage threshold", "cfg endpoints"}));
  timed_line("renderer gradients", 300, from_checks(gradients, {"renderer finite differences"}),
             seconds(gradients, {"renderer finite differences"}));
  {
    Line l = from_checks(gradients, {"deformation finite differences"});
    const Line r = from_checks(routing, {"unmasked loss stops at the unmasked decoder",
                                         "masked loss skips the unmasked decoder"});
    l.passed = l.passed && r.passed;
    l.detail += "; " + r.detail;
    timed_line("deformation gradients and routing", 120, l,
               seconds(gradients, {"deformation finite differences"}) +
                   seconds(routing, {"unmasked loss stops at the unmasked decoder",
                                     "masked loss skips the unmasked decoder"}));
  }
  report("identity at init", 0, [&] { return from_checks(routing, {"identity at init"}); },
         seconds(routing, {"identity at init"}));
  report("fixed-point stability", 0, fixed_point);
  report("synthetic end-to-end drag", 1200, end_to_end);
  report("oracle equivalences", 0, [] { return from_checks(*run_verify_suite("oracles")); });
  report("determinism", 0, determinism);
  report("guidance protocol round trip", 0, [] {
    Line l = from_checks(*run_verify_suite("protocol"));
    const Line p = shape_mismatch_pause();
    l.passed = l.passed && p.passed;
    l.detail += "; " + p.detail;
    return l;
  });
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
