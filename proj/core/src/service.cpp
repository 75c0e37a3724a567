#include "gsdrag/service.hpp"

#include <sys/socket.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <system_error>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "gsdrag/log.hpp"
#include "gsdrag/ply.hpp"
#include "gsdrag/protocol.hpp"
#include "gsdrag/render.hpp"

namespace gsdrag {
namespace {

using nlohmann::json;

struct ApiError : std::runtime_error {
  ApiError(int status, std::string code, const std::string& message, json extra = json::object())
      : std::runtime_error(message), status(status), code(std::move(code)), extra(std::move(extra)) {}
  int status;
  std::string code;
  json extra;
};

ApiResponse json_response(const json& j, int status = 200) { return {status, "application/json", j.dump()}; }

ApiResponse error_response(int status, const std::string& code, const std::string& message,
                           const json& extra = json::object()) {
  json j = extra;
  j["error"] = code;
  j["message"] = message;
  return json_response(j, status);
}

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() || !j[2].is_number())
    throw ApiError(422, "invalid_request", std::string(what) + " must be [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json parse_body(const std::string& body) {
  if (body.empty()) return json::object();
  try {
    json j = json::parse(body);
    if (!j.is_object()) throw ApiError(422, "invalid_request", "request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw ApiError(422, "invalid_request", std::string("malformed JSON: ") + e.what());
  }
}

long parse_int(const std::map<std::string, std::string>& q, const std::string& key, std::optional<long> fallback) {
  auto it = q.find(key);
  if (it == q.end()) {
    if (fallback) return *fallback;
    throw ApiError(422, "invalid_request", "missing query parameter '" + key + "'");
  }
  try {
    std::size_t used = 0;
    const long v = std::stol(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::logic_error&) {
    throw ApiError(422, "invalid_request", "query parameter '" + key + "' must be an integer");
  }
}

bool flag(const std::map<std::string, std::string>& q, const std::string& key) {
  auto it = q.find(key);
  return it != q.end() && (it->second == "1" || it->second == "true");
}

std::string run_status_name(RunStatus s) { return std::string(to_string(s)); }

json scene_summary(const GaussianScene& scene, const std::vector<Camera>& cameras, std::uint64_t id) {
  const Aabb box = scene.bounds();
  json cams = json::array();
  for (const auto& c : cameras) cams.push_back({{"width", c.width}, {"height", c.height}});
  std::size_t masked = 0;
  for (auto m : scene.mask()) masked += m != 0;
  return {{"scene_id", id},
          {"primitives", scene.size()},
          {"masked", masked},
          {"aabb", {{"min", vec3_json(box.min)}, {"max", vec3_json(box.max)}}},
          {"cameras", cams}};
}

GaussianScene scene_from_body(const json& body, const char* path_key, const char* data_key) {
  try {
    if (body.contains(path_key)) return load_scene(body.at(path_key).get<std::string>());
    const std::string bytes = base64_decode(body.at(data_key).get<std::string>());
    std::istringstream in(bytes);
    return read_scene(in);
  } catch (const DataError& e) {
    throw ApiError(422, "scene_parse_error", e.what(), {{"element", e.element()}, {"field", path_key}});
  } catch (const json::exception& e) {
    throw ApiError(422, "invalid_request", std::string(path_key) + " / " + data_key + ": " + e.what());
  } catch (const std::exception& e) {
    throw ApiError(422, "scene_parse_error", e.what(), {{"field", path_key}});
  }
}

std::vector<Camera> cameras_from_body(const json& body) {
  json list;
  try {
    if (body.contains("cameras_path")) {
      std::ifstream in(body.at("cameras_path").get<std::string>());
      if (!in) throw ApiError(422, "scene_parse_error", "cannot open camera file", {{"field", "cameras_path"}});
      list = json::parse(in);
    } else if (body.contains("cameras")) {
      list = body.at("cameras");
    } else {
      throw ApiError(422, "invalid_request", "cameras or cameras_path is required");
    }
    if (list.is_object()) list = list.at("cameras");
  } catch (const json::exception& e) {
    throw ApiError(422, "scene_parse_error", std::string("camera list: ") + e.what(), {{"field", "cameras"}});
  }
  if (!list.is_array() || list.empty())
    throw ApiError(422, "scene_parse_error", "camera list must be a non-empty array", {{"field", "cameras"}});
  std::vector<Camera> cams;
  for (std::size_t i = 0; i < list.size(); ++i) {
    try {
      cams.push_back(camera_from_json(list[i]));
    } catch (const std::exception& e) {
      throw ApiError(422, "scene_parse_error", e.what(), {{"element", i}, {"field", "cameras"}});
    }
  }
  return cams;
}

std::string png_body(const Image& img) {
  const auto bytes = encode_png(img);
  return {bytes.begin(), bytes.end()};
}

constexpr std::size_t kMaxPreviews = 512;

}  // namespace

std::pair<std::string, std::map<std::string, std::string>> split_target(const std::string& target) {
  auto decode = [](std::string_view s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '+') {
        out += ' ';
      } else if (s[i] == '%' && i + 2 < s.size()) {
        const int v = std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16);
        out += static_cast<char>(v);
        i += 2;
      } else {
        out += s[i];
      }
    }
    return out;
  };
  const auto q = target.find('?');
  std::map<std::string, std::string> query;
  if (q != std::string::npos) {
    std::string_view rest(target);
    rest.remove_prefix(q + 1);
    while (!rest.empty()) {
      const auto amp = rest.find('&');
      const std::string_view item = rest.substr(0, amp);
      const auto eq = item.find('=');
      try {
        if (!item.empty())
          query[decode(item.substr(0, eq))] = eq == std::string_view::npos ? "" : decode(item.substr(eq + 1));
      } catch (const std::logic_error&) {
        throw ApiError(422, "invalid_request", "bad percent escape in query");
      }
      if (amp == std::string_view::npos) break;
      rest.remove_prefix(amp + 1);
    }
  }
  return {target.substr(0, q), query};
}

json api_schema() {
  json codes = json::array();
  for (const char* c : kApiErrorCodes) codes.push_back(c);
  return {{"version", 1},
          {"error_codes", codes},
          {"endpoints",
           {{{"method", "GET"}, {"path", "/v1/health"}},
            {{"method", "GET"}, {"path", "/v1/schema"}},
            {{"method", "POST"},
             {"path", "/v1/scene"},
             {"body", "{scene_path | scene_ply (base64), cameras_path | cameras, [target_path | target_ply]}"}},
            {{"method", "GET"}, {"path", "/v1/scene"}},
            {{"method", "GET"}, {"path", "/v1/cameras"}},
            {{"method", "GET"}, {"path", "/v1/render"}, {"query", "camera, [width], [layer=rgb|mask], [depth=1]"}},
            {{"method", "POST"}, {"path", "/v1/mask/frustum"}, {"body", "{views: [{camera, rect: [x0, y0, x1, y1]}]}"}},
            {{"method", "POST"},
             {"path", "/v1/points"},
             {"body", "{pairs: [{handle_px: {camera, u, v, [width]}, target_px: {...}} | {handle: [x, y, z], target: [x, y, z]}]}"}},
            {{"method", "GET"}, {"path", "/v1/draft"}},
            {{"method", "POST"}, {"path", "/v1/edit/start"}, {"body", "edit spec overrides"}},
            {{"method", "POST"}, {"path", "/v1/edit/pause"}},
            {{"method", "POST"}, {"path", "/v1/edit/resume"}},
            {{"method", "POST"}, {"path", "/v1/edit/commit"}, {"body", "{[round]}"}},
            {{"method", "GET"}, {"path", "/v1/edit/status"}},
            {{"method", "GET"}, {"path", "/v1/edit/events"}, {"query", "[after]"}},
            {{"method", "GET"}, {"path", "/v1/edit/history.csv"}},
            {{"method", "GET"}, {"path", "/v1/rounds"}},
            {{"method", "GET"}, {"path", "/v1/preview/{event}.png"}},
            {{"method", "WS"}, {"path", "/v1/edit/progress"}, {"query", "[last_event_id]"}}}},
          {"events",
           {{"progress", "{id, type, run, round, iteration, s, t, losses, preview}"},
            {"paused", "{id, type, run, round, iteration, reason}"},
            {"done", "{id, type, run, round, iteration, metrics}"},
            {"failed", "{id, type, run, round, iteration, reason, metrics}"}}}};
}

// ---------------------------------------------------------------------------
// Session

Session::Session(std::string name, const ServiceOptions& options) : name_(std::move(name)), options_(options) {}

Session::~Session() {
  if (worker_.joinable()) {
    if (run_) run_->request_pause();
    worker_.join();
  }
}

void Session::require_scene() const {
  if (!scene_) throw ApiError(409, "no_scene", "load a scene first (POST /v1/scene)");
}

void Session::require_idle() const {
  std::lock_guard lock(state_);
  if (running_) throw ApiError(409, "run_active", "an edit run is in progress; pause it first");
}

void Session::join_worker() {
  if (worker_.joinable()) worker_.join();
}

void Session::wait_idle() {
  std::lock_guard lock(control_);
  join_worker();
}

std::shared_ptr<const GaussianScene> Session::shown_scene() const {
  std::lock_guard lock(state_);
  return run_scene_ ? run_scene_ : scene_;
}

std::vector<std::uint8_t> Session::draft_mask() const {
  if (draft_.mask.kind == MaskSource::Kind::Flags) return draft_.mask.flags;
  return scene_->mask();
}

void Session::push_event(json event) {
  event["id"] = next_event_++;
  event["run"] = run_id_;
  event["round"] = round_;
  events_.push_back(std::move(event));
  events_cv_.notify_all();
}

std::vector<json> Session::wait_events(std::int64_t after, std::chrono::milliseconds timeout) {
  std::unique_lock lock(state_);
  auto pending = [&] { return !events_.empty() && events_.back()["id"].get<std::int64_t>() > after; };
  if (!pending()) events_cv_.wait_for(lock, timeout, pending);
  std::vector<json> out;
  for (const auto& e : events_)
    if (e["id"].get<std::int64_t>() > after) out.push_back(e);
  return out;
}

json Session::status_json() const {
  std::lock_guard lock(state_);
  std::string status = "idle";
  if (run_) status = run_status_name(status_);
  return {{"session", name_},
          {"scene_id", scene_id_},
          {"round", round_},
          {"run", run_id_},
          {"status", status},
          {"iteration", iteration_},
          {"total", total_},
          {"reason", reason_},
          {"last_event_id", next_event_ - 1}};
}

json Session::draft_json() const {
  json j = edit_spec_to_json(draft_);
  std::size_t count = 0;
  if (scene_)
    for (auto m : draft_mask()) count += m != 0;
  j["mask"] = {{"type", draft_.mask.kind == MaskSource::Kind::Flags ? "flags" : "scene"}, {"count", count}};
  j["complete"] = !draft_.points.empty() && count > 0;
  return j;
}

void Session::publish(const EditRun& run, bool force) {
  const auto& history = run.history();
  std::lock_guard lock(state_);
  iteration_ = run.iteration();
  status_ = run.status();
  if (history.size() == published_records_ && !force) return;
  for (std::size_t k = published_records_; k < history.size(); ++k) {
    const LossRecord& r = history[k];
    history_csv_ += loss_csv_row(r);
    if (r.iteration % std::max(1, options_.progress_every) != 0) continue;
    auto snap = std::make_shared<const GaussianScene>(run.deformed_scene());
    run_scene_ = snap;
    const std::int64_t id = next_event_;
    previews_[id] = snap;
    while (previews_.size() > kMaxPreviews) previews_.erase(previews_.begin());
    push_event({{"type", "progress"},
                {"iteration", r.iteration},
                {"s", r.s},
                {"t", r.t},
                {"losses",
                 {{"latent", r.latent}, {"image", r.image}, {"source", r.source}, {"region", r.region}, {"total", r.total}}},
                {"preview", "/v1/preview/" + std::to_string(id) + ".png"}});
  }
  published_records_ = history.size();
}

void Session::finish(const EditRun& run) {
  publish(run, false);
  const EditMetrics m = edit_metrics(run);
  json metrics = {{"iterations", run.iteration()},
                  {"primitives", m.primitives},
                  {"masked", m.masked},
                  {"masked_mean_shift", vec3_json(m.masked_mean_shift)},
                  {"unmasked_mean_displacement", m.unmasked_mean_displacement},
                  {"densify_events", run.densify_log().size()}};
  if (!run.history().empty()) metrics["final_total_loss"] = run.history().back().total;
  auto final_scene = std::make_shared<const GaussianScene>(run.deformed_scene());

  std::lock_guard lock(state_);
  status_ = run.status();
  reason_ = run.status_reason();
  iteration_ = run.iteration();
  running_ = false;
  run_scene_ = final_scene;
  switch (status_) {
    case RunStatus::Paused:
      push_event({{"type", "paused"}, {"iteration", iteration_}, {"reason", reason_}});
      break;
    case RunStatus::Done: push_event({{"type", "done"}, {"iteration", iteration_}, {"metrics", metrics}}); break;
    case RunStatus::Failed:
      push_event({{"type", "failed"}, {"iteration", iteration_}, {"reason", reason_}, {"metrics", metrics}});
      break;
    case RunStatus::Running: break;
  }
}

void Session::launch() {
  {
    std::lock_guard lock(state_);
    running_ = true;
    status_ = RunStatus::Running;
    reason_.clear();
  }
  EditRun* run = run_.get();
  worker_ = std::thread([this, run] {
    try {
      run->run([this](const EditRun& r) { publish(r, false); });
    } catch (const std::exception& e) {
      warn(std::string("edit run stopped: ") + e.what());
    }
    finish(*run);
  });
}

ApiResponse Session::load_scene(const json& body) {
  require_idle();
  GaussianScene scene = scene_from_body(body, "scene_path", "scene_ply");
  std::vector<Camera> cams = cameras_from_body(body);
  std::shared_ptr<const GaussianScene> target;
  if (body.contains("target_path") || body.contains("target_ply"))
    target = std::make_shared<const GaussianScene>(scene_from_body(body, "target_path", "target_ply"));

  join_worker();
  run_.reset();
  scene_ = std::make_shared<const GaussianScene>(std::move(scene));
  target_ = std::move(target);
  cameras_ = std::move(cams);
  draft_ = EditSpec{};
  mask_set_ = false;
  {
    std::lock_guard lock(state_);
    ++scene_id_;
    run_scene_.reset();
    previews_.clear();
    iteration_ = total_ = 0;
    reason_.clear();
    history_csv_.clear();
    published_records_ = 0;
  }
  return json_response(scene_summary(*scene_, cameras_, scene_id_));
}

ApiResponse Session::render_view(const std::map<std::string, std::string>& query) {
  require_scene();
  const long index = parse_int(query, "camera", std::nullopt);
  if (index < 0 || index >= static_cast<long>(cameras_.size()))
    throw ApiError(404, "not_found", "camera index " + std::to_string(index) + " out of range");
  const Camera& native = cameras_[static_cast<std::size_t>(index)];
  const long width = parse_int(query, "width", native.width);
  if (width < 8 || width > 4096) throw ApiError(422, "invalid_request", "width must be in [8, 4096]");
  const Camera cam = width == native.width ? native : native.resized(static_cast<int>(width));
  const std::string layer = query.count("layer") ? query.at("layer") : "rgb";

  auto scene = shown_scene();
  Image image;
  RenderOutput out;
  if (layer == "mask") {
    GaussianScene flagged = *scene;
    bool use_draft;
    {
      std::lock_guard lock(state_);
      use_draft = !run_scene_;
    }
    if (use_draft) flagged.mask() = draft_mask();
    const int radius = draft_.hp.dilation >= 0
                           ? static_cast<int>(std::lround(draft_.hp.dilation * static_cast<double>(cam.width) / native.width))
                           : default_dilation_radius(cam.width);
    image = dilate_mask(render_mask(flagged, {}, cam), radius).to_image();
  } else if (layer == "rgb") {
    out = render(*scene, {}, cam);
    image = out.rgb;
  } else {
    throw ApiError(422, "invalid_request", "layer must be rgb or mask");
  }
  if (!flag(query, "depth")) return {200, "image/png", png_body(image)};
  if (layer == "mask") out = render(*scene, {}, cam);
  return json_response({{"image", base64_encode(png_body(image))}, {"depth", tensor_to_json(out.depth)},
                        {"alpha", tensor_to_json(out.alpha)}});
}

ApiResponse Session::select_frustum(const json& body) {
  require_scene();
  require_idle();
  if (!body.contains("views") || !body["views"].is_array() || body["views"].empty())
    throw ApiError(422, "invalid_request", "views must be a non-empty array");
  std::vector<ViewRect> views;
  for (const auto& v : body["views"]) {
    if (!v.is_object() || !v.contains("camera") || !v["camera"].is_number_integer() || !v.contains("rect") ||
        !v["rect"].is_array() || v["rect"].size() != 4)
      throw ApiError(422, "invalid_request", "each view needs camera and rect [x0, y0, x1, y1]");
    ViewRect r;
    r.camera = v["camera"].get<int>();
    for (const auto& x : v["rect"])
      if (!x.is_number()) throw ApiError(422, "invalid_request", "rect entries must be numbers");
    r.x0 = v["rect"][0].get<double>();
    r.y0 = v["rect"][1].get<double>();
    r.x1 = v["rect"][2].get<double>();
    r.y1 = v["rect"][3].get<double>();
    if (r.camera < 0 || r.camera >= static_cast<int>(cameras_.size()))
      throw ApiError(422, "invalid_request", "camera index " + std::to_string(r.camera) + " out of range");
    if (!(r.x1 > r.x0) || !(r.y1 > r.y0))
      throw ApiError(409, "empty_selection", "degenerate rectangle; drag a rectangle with nonzero area",
                     {{"hint", "reselect"}});
    views.push_back(r);
  }
  std::vector<std::uint8_t> flags;
  try {
    flags = select_mask_frustum(*scene_, cameras_, views);
  } catch (const EmptyMaskError& e) {
    throw ApiError(409, "empty_selection", e.what(), {{"hint", "reselect"}});
  } catch (const ConfigError& e) {
    throw ApiError(422, "invalid_request", e.what());
  }
  std::size_t count = 0;
  for (auto f : flags) count += f != 0;
  draft_.mask.kind = MaskSource::Kind::Flags;
  draft_.mask.flags = std::move(flags);
  mask_set_ = true;
  return json_response(
      {{"count", count}, {"preview", "/v1/render?camera=" + std::to_string(views.front().camera) + "&layer=mask"}});
}

ApiResponse Session::set_points(const json& body) {
  require_scene();
  require_idle();
  if (!body.contains("pairs") || !body["pairs"].is_array() || body["pairs"].empty())
    throw ApiError(422, "invalid_request", "pairs must be a non-empty array");
  auto scene = shown_scene();
  std::map<int, RenderOutput> renders;

  struct Pick {
    int camera;
    double u, v;
    std::optional<double> depth;
  };
  auto pick = [&](const json& p, const char* what) {
    if (!p.is_object() || !p.contains("camera") || !p.contains("u") || !p.contains("v") ||
        !p["camera"].is_number_integer() || !p["u"].is_number() || !p["v"].is_number())
      throw ApiError(422, "invalid_request", std::string(what) + " needs camera, u, v");
    const int c = p["camera"].get<int>();
    if (c < 0 || c >= static_cast<int>(cameras_.size()))
      throw ApiError(422, "invalid_request", std::string(what) + ": camera index out of range");
    const Camera& cam = cameras_[static_cast<std::size_t>(c)];
    double u = p["u"].get<double>(), v = p["v"].get<double>();
    if (p.contains("width")) {
      const double s = static_cast<double>(cam.width) / p["width"].get<double>();
      u = (u + 0.5) * s - 0.5;
      v = (v + 0.5) * s - 0.5;
    }
    const long px = std::lround(u), py = std::lround(v);
    if (px < 0 || py < 0 || px >= cam.width || py >= cam.height)
      throw ApiError(422, "invalid_request", std::string(what) + " lies outside the image");
    auto it = renders.find(c);
    if (it == renders.end()) it = renders.emplace(c, render(*scene, {}, cam)).first;
    const double d = it->second.depth(static_cast<int>(py), static_cast<int>(px));
    Pick out{c, u, v, std::nullopt};
    if (d > 0.0) out.depth = d;
    return out;
  };

  std::vector<ControlPair3D> pairs;
  for (const auto& pr : body["pairs"]) {
    if (!pr.is_object()) throw ApiError(422, "invalid_request", "pairs[] must be objects");
    if (pr.contains("handle") || pr.contains("target")) {
      if (!pr.contains("handle") || !pr.contains("target"))
        throw ApiError(422, "invalid_request", "a 3D pair needs handle and target");
      pairs.push_back({vec3_from(pr["handle"], "handle"), vec3_from(pr["target"], "target")});
      continue;
    }
    if (!pr.contains("handle_px") || !pr.contains("target_px"))
      throw ApiError(422, "invalid_request", "a pair needs handle/target or handle_px/target_px");
    const Pick h = pick(pr["handle_px"], "handle_px");
    if (!h.depth)
      throw ApiError(409, "no_surface", "no surface under the handle pick; click on the object", {{"hint", "repick"}});
    Pick t = pick(pr["target_px"], "target_px");
    // A target dropped on background in the handle's view stays at the
    // handle's depth, like a screen-space drag.
    if (!t.depth && t.camera == h.camera) t.depth = h.depth;
    if (!t.depth) throw ApiError(409, "no_surface", "no surface under the target pick", {{"hint", "repick"}});
    pairs.push_back({unproject_pixel(cameras_[static_cast<std::size_t>(h.camera)], h.u, h.v, *h.depth),
                     unproject_pixel(cameras_[static_cast<std::size_t>(t.camera)], t.u, t.v, *t.depth)});
  }
  draft_.points = pairs;
  json out = json::array();
  for (const auto& p : pairs) out.push_back({{"handle", vec3_json(p.handle)}, {"target", vec3_json(p.target)}});
  return json_response({{"pairs", out}});
}

ApiResponse Session::start(const json& body) {
  require_scene();
  {
    std::lock_guard lock(state_);
    if (running_ || (run_ && status_ == RunStatus::Paused))
      throw ApiError(409, "run_active", "a run is already active; pause/commit it or load a new scene");
  }
  join_worker();
  EditSpec spec = draft_;
  try {
    merge_edit_spec(spec, body);
  } catch (const ConfigError& e) {
    throw ApiError(422, "invalid_request", e.what());
  }
  std::size_t masked = 0;
  if (spec.mask.kind == MaskSource::Kind::Flags)
    for (auto f : spec.mask.flags) masked += f != 0;
  else if (spec.mask.kind == MaskSource::Kind::Scene)
    for (auto f : scene_->mask()) masked += f != 0;
  else
    masked = 1;
  json missing = json::array();
  if (spec.points.empty()) missing.push_back("points");
  if (masked == 0) missing.push_back("mask");
  if (!missing.empty()) throw ApiError(409, "draft_incomplete", "the draft edit is incomplete", {{"missing", missing}});

  std::shared_ptr<const GuidanceOracle> oracle;
  try {
    if (target_)
      oracle = std::make_shared<const SyntheticOracle>(SyntheticOracle::from_scene(*target_, cameras_));
    else if (options_.guidance)
      oracle = options_.guidance(*scene_, cameras_);
  } catch (const std::exception& e) {
    throw ApiError(409, "guidance_unavailable", e.what());
  }
  if (!oracle) throw ApiError(409, "guidance_unavailable", "no guidance configured for this scene");

  try {
    run_ = std::make_unique<EditRun>(*scene_, cameras_, spec, oracle, round_);
  } catch (const EmptyMaskError& e) {
    throw ApiError(409, "empty_selection", e.what(), {{"hint", "reselect"}});
  } catch (const ConfigError& e) {
    throw ApiError(422, "invalid_request", e.what());
  }
  {
    std::lock_guard lock(state_);
    ++run_id_;
    iteration_ = 0;
    total_ = run_->plan().total;
    history_csv_ = loss_csv_header();
    published_records_ = 0;
    run_scene_ = scene_;
    previews_.clear();
  }
  launch();
  return json_response(status_json());
}

ApiResponse Session::pause() {
  if (!run_) throw ApiError(409, "no_run", "no edit run to pause");
  bool running;
  {
    std::lock_guard lock(state_);
    running = running_;
  }
  if (running) run_->request_pause();
  join_worker();
  return json_response(status_json());
}

ApiResponse Session::resume() {
  if (!run_) throw ApiError(409, "no_run", "no edit run to resume");
  require_idle();
  join_worker();
  if (run_->status() != RunStatus::Paused)
    throw ApiError(409, "run_not_paused", "run is " + run_status_name(run_->status()));
  run_->resume();
  launch();
  return json_response(status_json());
}

ApiResponse Session::commit(const json& body) {
  std::optional<int> token;
  if (body.contains("round")) {
    if (!body["round"].is_number_integer()) throw ApiError(422, "invalid_request", "round must be an integer");
    token = body["round"].get<int>();
    if (*token < 0 || *token > round_)
      throw ApiError(409, "stale_round", "round token " + std::to_string(*token) + " does not match round " +
                                             std::to_string(round_));
    if (*token < round_) {
      json replay = rounds_[static_cast<std::size_t>(*token)];
      replay["replayed"] = true;
      return json_response(replay);
    }
  }
  if (!run_) throw ApiError(409, "no_run", "nothing to commit");
  require_idle();
  join_worker();
  if (run_->status() != RunStatus::Done)
    throw ApiError(409, "run_not_done", "run is " + run_status_name(run_->status()) + "; only a finished run commits");

  scene_ = std::make_shared<const GaussianScene>(gsdrag::commit(*run_));
  json entry = {{"committed_round", round_},
                {"round", round_ + 1},
                {"run", run_id_},
                {"iterations", run_->iteration()},
                {"primitives", scene_->size()},
                {"replayed", false}};
  rounds_.push_back(entry);
  draft_.points.clear();
  draft_.mask = MaskSource{};
  mask_set_ = true;
  run_.reset();
  {
    std::lock_guard lock(state_);
    ++round_;
    run_scene_.reset();
    previews_.clear();
  }
  return json_response(entry);
}

ApiResponse Session::preview(const std::string& id) {
  std::shared_ptr<const GaussianScene> snap;
  {
    std::lock_guard lock(state_);
    std::int64_t key = 0;
    try {
      key = std::stoll(id);
    } catch (const std::logic_error&) {
      throw ApiError(404, "not_found", "no such preview");
    }
    auto it = previews_.find(key);
    if (it == previews_.end()) throw ApiError(404, "not_found", "preview " + id + " expired or unknown");
    snap = it->second;
  }
  const Camera cam = cameras_.front().resized(options_.preview_width);
  return {200, "image/png", png_body(render(*snap, {}, cam).rgb)};
}

ApiResponse Session::handle(const std::string& method, const std::string& path,
                            const std::map<std::string, std::string>& query, const std::string& body) {
  auto want = [&](const char* m) {
    if (method != m) throw ApiError(405, "method_not_allowed", "use " + std::string(m) + " for " + path);
  };
  if (path == "/edit/status") {
    want("GET");
    return json_response(status_json());
  }
  if (path == "/edit/events") {
    want("GET");
    const long after = parse_int(query, "after", 0);
    return json_response({{"events", wait_events(after, std::chrono::milliseconds(0))}});
  }
  if (path == "/edit/history.csv") {
    want("GET");
    std::lock_guard lock(state_);
    if (history_csv_.empty()) throw ApiError(409, "no_run", "no run has been started on this scene");
    return {200, "text/csv", history_csv_};
  }

  std::lock_guard control(control_);
  if (path.rfind("/preview/", 0) == 0 && path.size() > 13 && path.compare(path.size() - 4, 4, ".png") == 0) {
    want("GET");
    return preview(path.substr(9, path.size() - 13));
  }
  if (path == "/render") {
    want("GET");
    return render_view(query);
  }
  if (path == "/scene") {
    if (method == "GET") {
      require_scene();
      return json_response(scene_summary(*scene_, cameras_, scene_id_));
    }
    want("POST");
    return load_scene(parse_body(body));
  }
  if (path == "/cameras") {
    want("GET");
    require_scene();
    return json_response(cameras_to_json(cameras_));
  }
  if (path == "/mask/frustum") {
    want("POST");
    return select_frustum(parse_body(body));
  }
  if (path == "/points") {
    want("POST");
    return set_points(parse_body(body));
  }
  if (path == "/draft") {
    want("GET");
    require_scene();
    return json_response(draft_json());
  }
  if (path == "/rounds") {
    want("GET");
    return json_response({{"round", round_}, {"history", rounds_}});
  }
  if (path == "/edit/start") {
    want("POST");
    return start(parse_body(body));
  }
  if (path == "/edit/pause") {
    want("POST");
    return pause();
  }
  if (path == "/edit/resume") {
    want("POST");
    return resume();
  }
  if (path == "/edit/commit") {
    want("POST");
    return commit(parse_body(body));
  }
  throw ApiError(404, "not_found", "no endpoint " + path);
}

std::optional<std::filesystem::path> Session::flush() {
  std::lock_guard control(control_);
  if (!run_) return std::nullopt;
  if (worker_.joinable()) {
    run_->request_pause();
    join_worker();
  }
  if (run_->status() == RunStatus::Done || options_.checkpoint_dir.empty()) return std::nullopt;
  std::filesystem::create_directories(options_.checkpoint_dir);
  auto path = options_.checkpoint_dir / ("session-" + name_ + ".ckpt");
  run_->save_checkpoint(path);
  return path;
}

void Session::restore(const std::filesystem::path& checkpoint) {
  std::lock_guard control(control_);
  if (running_) throw StateError("cannot restore over a running edit");
  join_worker();
  auto run = std::make_unique<EditRun>(EditRun::load_checkpoint(checkpoint, nullptr));
  if (!options_.guidance) throw GuidanceUnavailable("restoring a run needs a guidance mode");
  run->set_oracle(options_.guidance(run->mirror().scene(), run->cameras()));
  if (run->status() == RunStatus::Running) run->pause();
  scene_ = std::make_shared<const GaussianScene>(run->mirror().scene());
  cameras_ = run->cameras();
  target_.reset();
  draft_ = run->spec();
  mask_set_ = true;
  round_ = run->round();
  std::lock_guard lock(state_);
  ++scene_id_;
  ++run_id_;
  status_ = run->status();
  reason_ = run->status_reason();
  iteration_ = run->iteration();
  total_ = run->plan().total;
  history_csv_ = run->history_csv();
  published_records_ = run->history().size();
  run_scene_ = std::make_shared<const GaussianScene>(run->deformed_scene());
  previews_.clear();
  run_ = std::move(run);
}

// ---------------------------------------------------------------------------
// Service

Service::Service(ServiceOptions options) : options_(std::move(options)) {}

Session& Service::session_for(const std::string& target) {
  const auto query = split_target(target).second;
  std::string name = "default";
  if (options_.multi_session) {
    auto it = query.find("session");
    if (it != query.end() && !it->second.empty()) name = it->second;
  }
  std::lock_guard lock(sessions_mutex_);
  auto& slot = sessions_[name];
  if (!slot) slot = std::make_unique<Session>(name, options_);
  return *slot;
}

ApiResponse Service::handle(const ApiRequest& request) {
  try {
    if (request.body.size() > options_.body_limit)
      throw ApiError(413, "payload_too_large", "request body exceeds " + std::to_string(options_.body_limit) + " bytes");
    const auto [path, query] = split_target(request.target);
    if (path.rfind("/v1/", 0) != 0) throw ApiError(404, "not_found", "endpoints live under /v1");
    const std::string sub = path.substr(3);
    if (sub == "/health") return json_response({{"status", "ok"}, {"version", 1}});
    if (sub == "/schema") return json_response(api_schema());
    return session_for(request.target).handle(request.method, sub, query, request.body);
  } catch (const ApiError& e) {
    return error_response(e.status, e.code, e.what(), e.extra);
  } catch (const std::exception& e) {
    return error_response(500, "internal_error", e.what());
  }
}

std::vector<std::filesystem::path> Service::shutdown() {
  std::vector<Session*> all;
  {
    std::lock_guard lock(sessions_mutex_);
    for (auto& [_, s] : sessions_) all.push_back(s.get());
  }
  std::vector<std::filesystem::path> out;
  for (Session* s : all)
    if (auto p = s->flush()) out.push_back(*p);
  return out;
}

// ---------------------------------------------------------------------------
// Server

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

struct Server::Impl {
  Impl(Service& s, std::string h, unsigned short p) : service(s), host(std::move(h)), port(p) {}

  Service& service;
  std::string host;
  unsigned short port;
  net::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::thread accept_thread;
  std::atomic<bool> stopping{false};
  std::mutex mu;
  std::condition_variable idle;
  std::set<int> open;
  int active = 0;

  void accept_loop() {
    while (!stopping) {
      tcp::socket sock(ioc);
      beast::error_code ec;
      acceptor.accept(sock, ec);
      if (ec) {
        if (stopping) break;
        continue;
      }
      const int fd = sock.native_handle();
      {
        std::lock_guard lock(mu);
        open.insert(fd);
        ++active;
      }
      std::thread([this, fd, s = std::move(sock)]() mutable {
        try {
          serve(s);
        } catch (const std::exception& e) {
          warn(std::string("connection: ") + e.what());
        }
        beast::error_code ignore;
        s.close(ignore);
        std::lock_guard lock(mu);
        open.erase(fd);
        if (--active == 0) idle.notify_all();
      }).detach();
    }
  }

  template <typename Stream>
  static void send(Stream& sock, const ApiResponse& res, unsigned version, bool keep_alive, beast::error_code& ec) {
    http::response<http::string_body> out{static_cast<http::status>(res.status), version};
    out.set(http::field::server, "gsdrag");
    out.set(http::field::content_type, res.content_type);
    out.keep_alive(keep_alive);
    out.body() = res.body;
    out.prepare_payload();
    http::write(sock, out, ec);
  }

  void serve(tcp::socket& sock) {
    beast::flat_buffer buffer;
    for (;;) {
      http::request_parser<http::string_body> parser;
      parser.body_limit(service.options().body_limit);
      beast::error_code ec;
      http::read(sock, buffer, parser, ec);
      if (ec == http::error::body_limit) {
        send(sock, error_response(413, "payload_too_large", "request body too large"), 11, false, ec);
        sock.shutdown(tcp::socket::shutdown_send, ec);
        // Drain so the client sees the response instead of a reset.
        char scratch[65536];
        while (!ec) sock.read_some(net::buffer(scratch), ec);
        return;
      }
      if (ec) return;
      auto& req = parser.get();
      if (websocket::is_upgrade(req)) {
        const auto path = split_target(std::string(req.target())).first;
        if (path != "/v1/edit/progress") {
          send(sock, error_response(404, "not_found", "no websocket endpoint " + path), req.version(), false, ec);
          return;
        }
        serve_ws(sock, parser.release());
        return;
      }
      ApiRequest r;
      r.method = std::string(req.method_string());
      r.target = std::string(req.target());
      r.body = std::move(req.body());
      for (const auto& f : req) r.headers[std::string(f.name_string())] = std::string(f.value());
      const ApiResponse res = service.handle(r);
      const bool keep = req.keep_alive() && !stopping;
      send(sock, res, req.version(), keep, ec);
      if (ec || !keep) {
        sock.shutdown(tcp::socket::shutdown_send, ec);
        return;
      }
    }
  }

  void serve_ws(tcp::socket& sock, http::request<http::string_body> req) {
    const std::string target(req.target());
    const auto query = split_target(target).second;
    std::int64_t last = 0;
    try {
      if (query.count("last_event_id"))
        last = std::stoll(query.at("last_event_id"));
      else if (req.find("Last-Event-ID") != req.end())
        last = std::stoll(std::string(req["Last-Event-ID"]));
    } catch (const std::logic_error&) {
      last = 0;
    }
    Session& session = service.session_for(target);

    websocket::stream<tcp::socket&> ws(sock);
    beast::error_code ec;
    ws.accept(req, ec);
    if (ec) return;
    int quiet = 0;
    while (!stopping && !ec) {
      if (sock.available(ec) > 0) {
        beast::flat_buffer incoming;
        ws.read(incoming, ec);
        if (ec) break;
      }
      auto events = session.wait_events(last, std::chrono::milliseconds(200));
      if (events.empty()) {
        if (++quiet % 10 == 0) ws.ping({}, ec);
        continue;
      }
      quiet = 0;
      for (const auto& e : events) {
        ws.text(true);
        ws.write(net::buffer(e.dump()), ec);
        if (ec) break;
        last = e["id"].get<std::int64_t>();
      }
    }
    if (ec == websocket::error::closed) return;
    beast::error_code ignore;
    if (stopping) ws.close(websocket::close_code::going_away, ignore);
  }
};

Server::Server(Service& service, std::string host, unsigned short port)
    : impl_(std::make_unique<Impl>(service, std::move(host), port)) {}

Server::~Server() { stop(); }

void Server::start() {
  const tcp::endpoint ep(net::ip::make_address(impl_->host), impl_->port);
  auto& a = impl_->acceptor;
  a.open(ep.protocol());
  a.set_option(net::socket_base::reuse_address(true));
  beast::error_code ec;
  a.bind(ep, ec);
  if (ec) {
    a.close();
    throw std::system_error(ec, "bind " + impl_->host + ":" + std::to_string(impl_->port));
  }
  a.listen(net::socket_base::max_listen_connections);
  port_ = a.local_endpoint().port();
  impl_->accept_thread = std::thread([this] { impl_->accept_loop(); });
}

void Server::stop() {
  if (!impl_ || !impl_->accept_thread.joinable()) return;
  impl_->stopping = true;
  ::shutdown(impl_->acceptor.native_handle(), SHUT_RDWR);
  impl_->accept_thread.join();
  beast::error_code ignore;
  impl_->acceptor.close(ignore);
  std::unique_lock lock(impl_->mu);
  for (int fd : impl_->open) ::shutdown(fd, SHUT_RDWR);
  impl_->idle.wait(lock, [&] { return impl_->active == 0; });
}

}  // namespace gsdrag
