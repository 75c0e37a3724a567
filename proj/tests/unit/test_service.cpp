#include <doctest.h>

#include <fstream>
#include <sstream>
#include <thread>

#include "gsdrag/ply.hpp"
#include "gsdrag/protocol.hpp"
#include "gsdrag/service.hpp"
#include "gsdrag/synthetic.hpp"
#include "helpers.hpp"

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

using namespace gsdrag;
using nlohmann::json;

namespace {

struct Fixture {
  TwoBlobScene blobs;
  std::vector<Camera> cameras;
  std::string scene_b64, target_b64;

  explicit Fixture(std::size_t per_blob = 100) {
    TwoBlobOptions o;
    o.per_blob = per_blob;
    blobs = make_two_blob_scene(o);
    cameras = orbit_cameras(4, 2.5, 64, 32, 32);
    std::stringstream a, b;
    write_scene(blobs.scene, a);
    write_scene(blobs.target, b);
    scene_b64 = base64_encode(a.str());
    target_b64 = base64_encode(b.str());
  }

  json load_body(bool with_target = true) const {
    json j = {{"scene_ply", scene_b64}, {"cameras", cameras_to_json(cameras)}};
    if (with_target) j["target_ply"] = target_b64;
    return j;
  }
};

ApiResponse call(Service& s, const std::string& method, const std::string& target, const json& body = nullptr) {
  return s.handle({method, target, body.is_null() ? std::string() : body.dump(), {}});
}

Image decode_png(const std::string& bytes) {
  testutil::TempDir dir("png");
  std::ofstream(dir.path / "x.png", std::ios::binary) << bytes;
  return read_png(dir.path / "x.png");
}

// Collects events until one of type done/failed/paused arrives.
std::vector<json> until_terminal(Session& s, std::int64_t after, double timeout_s = 120) {
  std::vector<json> out;
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
  while (std::chrono::steady_clock::now() < deadline) {
    for (auto& e : s.wait_events(after, std::chrono::milliseconds(200))) {
      after = e["id"].get<std::int64_t>();
      out.push_back(e);
      const auto type = e["type"].get<std::string>();
      if (type != "progress") return out;
    }
  }
  FAIL("timed out waiting for the run");
  return out;
}

std::vector<int> csv_iterations(const std::string& csv) {
  std::vector<int> its;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line))
    if (!line.empty()) its.push_back(std::stoi(line.substr(0, line.find(','))));
  return its;
}

std::size_t front_count(const GaussianScene& s, const Camera& c, double x0, double y0, double x1, double y1) {
  std::size_t n = 0;
  for (const auto& p : s.positions()) {
    const Vec3 q = c.rotation * p + c.translation;
    if (q.z() <= 0) continue;
    const double u = c.fx * q.x() / q.z() + c.cx + 0.5, v = c.fy * q.y() / q.z() + c.cy + 0.5;
    n += u >= x0 && u < x1 && v >= y0 && v < y1;
  }
  return n;
}

}  // namespace

TEST_CASE("health, schema and routing errors") {
  Service svc({});
  auto h = call(svc, "GET", "/v1/health");
  CHECK(h.status == 200);
  CHECK(h.json()["status"] == "ok");
  const json schema = call(svc, "GET", "/v1/schema").json();
  CHECK(schema["error_codes"].size() == std::size(kApiErrorCodes));
  CHECK(call(svc, "GET", "/v1/nope").status == 404);
  CHECK(call(svc, "GET", "/elsewhere").status == 404);
  CHECK(call(svc, "DELETE", "/v1/scene").status == 405);
  auto r = call(svc, "GET", "/v1/render?camera=0");
  CHECK(r.status == 409);
  CHECK(r.json()["error"] == "no_scene");
  CHECK(call(svc, "POST", "/v1/edit/pause").json()["error"] == "no_run");
  CHECK(call(svc, "GET", "/v1/edit/history.csv").json()["error"] == "no_run");
}

TEST_CASE("target splitting") {
  const auto [path, q] = split_target("/v1/render?camera=2&layer=mask&x=a%20b&y=");
  CHECK(path == "/v1/render");
  CHECK(q.at("camera") == "2");
  CHECK(q.at("layer") == "mask");
  CHECK(q.at("x") == "a b");
  CHECK(q.count("y") == 1);
  Service svc({});
  const auto bad = call(svc, "GET", "/v1/render?camera=%zz");
  CHECK(bad.status == 422);
  CHECK(bad.json()["error"] == "invalid_request");
}

TEST_CASE("scene loading") {
  const Fixture fx;
  Service svc({});
  SUBCASE("valid scene gives count and bounds") {
    const auto r = call(svc, "POST", "/v1/scene", fx.load_body());
    REQUIRE(r.status == 200);
    const json j = r.json();
    CHECK(j["primitives"] == fx.blobs.scene.size());
    // The PLY stores float32.
    CHECK(j["aabb"]["min"][0].get<double>() == doctest::Approx(fx.blobs.scene.bounds().min.x()).epsilon(1e-6));
    CHECK(j["cameras"].size() == 4);
  }
  SUBCASE("corrupt ply") {
    json body = fx.load_body(false);
    body["scene_ply"] = base64_encode("ply\nformat ascii 1.0\nend_header\n");
    const auto r = call(svc, "POST", "/v1/scene", body);
    CHECK(r.status == 422);
    CHECK(r.json()["error"] == "scene_parse_error");
    GaussianScene bad = fx.blobs.scene;
    bad.positions()[17].y() = std::numeric_limits<double>::infinity();
    std::stringstream buf;
    write_scene(bad, buf);
    body["scene_ply"] = base64_encode(buf.str());
    const auto r2 = call(svc, "POST", "/v1/scene", body);
    CHECK(r2.status == 422);
    CHECK(r2.json()["element"] == 17);
    CHECK(call(svc, "POST", "/v1/scene", json{{"cameras", json::array()}}).status == 422);
    CHECK(svc.handle({"POST", "/v1/scene", "{not json", {}}).status == 422);
  }
  SUBCASE("reload replaces the scene and clears the draft") {
    REQUIRE(call(svc, "POST", "/v1/scene", fx.load_body()).status == 200);
    REQUIRE(call(svc, "POST", "/v1/mask/frustum", {{"views", {{{"camera", 0}, {"rect", {0, 0, 16, 32}}}}}}).status ==
            200);
    REQUIRE(call(svc, "POST", "/v1/points", {{"pairs", {{{"handle", {0, 0, 0}}, {"target", {0.1, 0, 0}}}}}}).status ==
            200);
    json draft = call(svc, "GET", "/v1/draft").json();
    CHECK(draft["points"].size() == 1);
    CHECK(draft["mask"]["type"] == "flags");

    json body = fx.load_body();
    GaussianScene small;
    small.push_back(testutil::blob({0, 0, 0}, 0.1, 0.9, {1, 0, 0}));
    std::stringstream buf;
    write_scene(small, buf);
    body["scene_ply"] = base64_encode(buf.str());
    const json j = call(svc, "POST", "/v1/scene", body).json();
    CHECK(j["primitives"] == 1);
    CHECK(j["scene_id"] == 2);
    draft = call(svc, "GET", "/v1/draft").json();
    CHECK(draft["points"].empty());
    CHECK(draft["mask"]["type"] == "scene");
    CHECK(draft["mask"]["count"] == 0);
    CHECK(draft["complete"] == false);
  }
}

TEST_CASE("render endpoint") {
  const Fixture fx;
  Service svc({});
  json body = fx.load_body(false);
  std::stringstream empty;
  write_scene(GaussianScene{}, empty);
  body["scene_ply"] = base64_encode(empty.str());
  REQUIRE(call(svc, "POST", "/v1/scene", body).status == 200);
  auto r = call(svc, "GET", "/v1/render?camera=1");
  REQUIRE(r.status == 200);
  CHECK(r.content_type == "image/png");
  for (double v : decode_png(r.body).data) CHECK(v == 0.0);

  REQUIRE(call(svc, "POST", "/v1/scene", fx.load_body()).status == 200);
  const auto a = call(svc, "GET", "/v1/render?camera=2&width=64");
  const auto b = call(svc, "GET", "/v1/render?camera=2&width=64");
  CHECK(a.body == b.body);
  const Image img = decode_png(a.body);
  CHECK(img.width == 64);
  CHECK(std::any_of(img.data.begin(), img.data.end(), [](double v) { return v > 0.1; }));
  CHECK(call(svc, "GET", "/v1/render?camera=9").status == 404);
  CHECK(call(svc, "GET", "/v1/render?camera=0&layer=zzz").status == 422);

  const json d = call(svc, "GET", "/v1/render?camera=0&depth=1").json();
  const Tensor3 depth = tensor_from_json(d["depth"]);
  CHECK(depth.width == 32);
  CHECK(*std::max_element(depth.data.begin(), depth.data.end()) > 1.0);

  // No masked primitives: the mask layer is empty.
  GaussianScene unmasked = fx.blobs.scene;
  for (auto& f : unmasked.mask()) f = 0;
  std::stringstream buf;
  write_scene(unmasked, buf);
  body = fx.load_body(false);
  body["scene_ply"] = base64_encode(buf.str());
  REQUIRE(call(svc, "POST", "/v1/scene", body).status == 200);
  const Image mask = decode_png(call(svc, "GET", "/v1/render?camera=0&layer=mask").body);
  for (double v : mask.data) CHECK(v == 0.0);
}

TEST_CASE("frustum endpoint") {
  const Fixture fx;
  Service svc({});
  REQUIRE(call(svc, "POST", "/v1/scene", fx.load_body()).status == 200);
  const auto full = call(svc, "POST", "/v1/mask/frustum", {{"views", {{{"camera", 0}, {"rect", {0, 0, 32, 32}}}}}});
  REQUIRE(full.status == 200);
  CHECK(full.json()["count"] == front_count(fx.blobs.scene, fx.cameras[0], 0, 0, 32, 32));

  const auto deg = call(svc, "POST", "/v1/mask/frustum", {{"views", {{{"camera", 0}, {"rect", {5, 5, 5, 20}}}}}});
  CHECK(deg.status == 409);
  CHECK(deg.json()["error"] == "empty_selection");
  CHECK(deg.json()["hint"] == "reselect");

  const json two = {{"views", {{{"camera", 0}, {"rect", {0, 0, 16, 32}}}, {{"camera", 1}, {"rect", {0, 0, 20, 32}}}}}};
  const auto r = call(svc, "POST", "/v1/mask/frustum", two);
  REQUIRE(r.status == 200);
  std::size_t both = 0;
  for (const auto& p : fx.blobs.scene.positions()) {
    GaussianScene one;
    one.push_back(testutil::blob(p, 0.1, 0.5, {0, 0, 0}));
    both += front_count(one, fx.cameras[0], 0, 0, 16, 32) && front_count(one, fx.cameras[1], 0, 0, 20, 32);
  }
  CHECK(r.json()["count"] == both);
  CHECK(both < front_count(fx.blobs.scene, fx.cameras[0], 0, 0, 16, 32));
  CHECK(call(svc, "GET", "/v1/draft").json()["mask"]["count"] == both);
}

TEST_CASE("points endpoint") {
  const Fixture fx;
  Service svc({});
  // A single opaque Gaussian facing camera 0.
  GaussianScene one;
  const Vec3 center(0.05, -0.02, 0.1);
  const double sigma = 0.08;
  one.push_back(testutil::blob(center, sigma, 0.99, {1, 1, 1}));
  std::stringstream buf;
  write_scene(one, buf);
  json body = fx.load_body(false);
  body["scene_ply"] = base64_encode(buf.str());
  REQUIRE(call(svc, "POST", "/v1/scene", body).status == 200);
  const auto px = project_point(fx.cameras[0], center);
  const json pick = {{"camera", 0}, {"u", std::round(px.u)}, {"v", std::round(px.v)}};
  const auto r = call(svc, "POST", "/v1/points", {{"pairs", {{{"handle_px", pick}, {"target_px", pick}}}}});
  REQUIRE(r.status == 200);
  const json h = r.json()["pairs"][0]["handle"];
  const Vec3 lifted(h[0].get<double>(), h[1].get<double>(), h[2].get<double>());
  CHECK((lifted - center).norm() <= sigma);

  const json bg = {{"camera", 0}, {"u", 0}, {"v", 0}};
  const auto miss = call(svc, "POST", "/v1/points", {{"pairs", {{{"handle_px", bg}, {"target_px", pick}}}}});
  CHECK(miss.status == 409);
  CHECK(miss.json()["error"] == "no_surface");

  // Target on background in the handle's view keeps the handle depth.
  const auto drag = call(svc, "POST", "/v1/points", {{"pairs", {{{"handle_px", pick}, {"target_px", bg}}}}});
  REQUIRE(drag.status == 200);
  const json t = drag.json()["pairs"][0]["target"];
  const Vec3 target(t[0].get<double>(), t[1].get<double>(), t[2].get<double>());
  CHECK(project_point(fx.cameras[0], target).depth == doctest::Approx(project_point(fx.cameras[0], lifted).depth));

  const json verbatim = {{"handle", {0.125, -0.5, 0.25}}, {"target", {1, 2, 3}}};
  const auto v = call(svc, "POST", "/v1/points", {{"pairs", {verbatim}}});
  CHECK(v.json()["pairs"][0] == verbatim);
  CHECK(call(svc, "POST", "/v1/points", {{"pairs", json::array()}}).status == 422);
}

TEST_CASE("run lifecycle, events and rounds") {
  const Fixture fx;
  ServiceOptions opts;
  opts.progress_every = 5;
  Service svc(opts);
  Session& session = svc.session_for("/");
  REQUIRE(call(svc, "POST", "/v1/scene", fx.load_body()).status == 200);
  auto incomplete = call(svc, "POST", "/v1/edit/start", json::object());
  CHECK(incomplete.status == 409);
  CHECK(incomplete.json()["missing"] == json::array({"points"}));

  const Vec3 h = fx.blobs.handle, t = fx.blobs.handle + fx.blobs.drag;
  REQUIRE(call(svc, "POST", "/v1/points", {{"pairs", {{{"handle", {h.x(), h.y(), h.z()}}, {"target", {t.x(), t.y(), t.z()}}}}}})
              .status == 200);
  const std::string baseline = call(svc, "GET", "/v1/render?camera=0").body;

  auto start = call(svc, "POST", "/v1/edit/start", {{"iterations", 60}, {"seed", 3}});
  REQUIRE(start.status == 200);
  CHECK(start.json()["status"] == "running");
  CHECK(start.json()["total"] == 60);
  CHECK(call(svc, "POST", "/v1/edit/start", json::object()).json()["error"] == "run_active");
  CHECK(call(svc, "POST", "/v1/scene", fx.load_body()).json()["error"] == "run_active");

  // Pause as soon as a few events are out, then resume.
  session.wait_events(1, std::chrono::seconds(60));
  const json paused = call(svc, "POST", "/v1/edit/pause").json();
  CHECK(paused["status"] == "paused");
  CHECK(call(svc, "POST", "/v1/edit/commit", json::object()).json()["error"] == "run_not_done");
  CHECK(call(svc, "POST", "/v1/edit/start", json::object()).json()["error"] == "run_active");
  REQUIRE(call(svc, "POST", "/v1/edit/resume").status == 200);
  const auto tail = until_terminal(session, paused["last_event_id"].get<std::int64_t>());
  CHECK(tail.back()["type"] == "done");
  CHECK(tail.back()["metrics"]["iterations"] == 60);

  const auto all = session.wait_events(0, std::chrono::milliseconds(0));
  std::vector<int> progress_its;
  double last_s = -1;
  for (std::size_t k = 0; k < all.size(); ++k) {
    CHECK(all[k]["id"] == static_cast<std::int64_t>(k + 1));
    CHECK(all[k]["run"] == 1);
    if (all[k]["type"] != "progress") continue;
    progress_its.push_back(all[k]["iteration"]);
    CHECK(all[k]["s"].get<double>() > last_s);
    last_s = all[k]["s"].get<double>();
  }
  REQUIRE(!progress_its.empty());
  CHECK(progress_its.front() == 0);
  for (std::size_t k = 1; k < progress_its.size(); ++k) CHECK(progress_its[k] == progress_its[k - 1] + 5);
  CHECK(std::count_if(all.begin(), all.end(), [](const json& e) { return e["type"] == "paused"; }) == 1);

  // Replay after an arbitrary id merges into the same log.
  const std::int64_t cut = all[all.size() / 2]["id"];
  std::vector<json> merged(all.begin(), all.begin() + cut);
  for (auto& e : session.wait_events(cut, std::chrono::milliseconds(0))) merged.push_back(e);
  CHECK(merged == all);

  const std::string csv = call(svc, "GET", "/v1/edit/history.csv").body;
  const auto its = csv_iterations(csv);
  REQUIRE(its.size() == 60);
  for (int i = 0; i < 60; ++i) CHECK(its[static_cast<std::size_t>(i)] == i);

  std::string preview;
  for (const auto& e : all)
    if (e["type"] == "progress") preview = e["preview"];
  CHECK(call(svc, "GET", preview).content_type == "image/png");
  CHECK(call(svc, "GET", "/v1/preview/99999.png").status == 404);

  const json c = call(svc, "POST", "/v1/edit/commit", {{"round", 0}}).json();
  CHECK(c["round"] == 1);
  CHECK(c["replayed"] == false);
  const json again = call(svc, "POST", "/v1/edit/commit", {{"round", 0}}).json();
  CHECK(again["replayed"] == true);
  CHECK(again["committed_round"] == 0);
  CHECK(call(svc, "POST", "/v1/edit/commit", {{"round", 5}}).json()["error"] == "stale_round");
  CHECK(call(svc, "GET", "/v1/rounds").json()["round"] == 1);

  // Round two starts from the committed scene.
  const std::string after = call(svc, "GET", "/v1/render?camera=0").body;
  CHECK(after != baseline);
  REQUIRE(call(svc, "POST", "/v1/points", {{"pairs", {{{"handle", {h.x(), h.y(), h.z()}}, {"target", {h.x(), h.y(), h.z()}}}}}})
              .status == 200);
  const auto r2 = call(svc, "POST", "/v1/edit/start", {{"iterations", 10}});
  REQUIRE(r2.status == 200);
  CHECK(r2.json()["round"] == 1);
  const auto end2 = until_terminal(session, r2.json()["last_event_id"].get<std::int64_t>());
  CHECK(end2.back()["round"] == 1);
  CHECK(end2.back()["run"] == 2);
}

TEST_CASE("flush and restore") {
  const Fixture fx;
  testutil::TempDir dir("svc");
  ServiceOptions opts;
  opts.checkpoint_dir = dir.path;
  opts.guidance = [&](const GaussianScene&, const std::vector<Camera>& cams) {
    return std::make_shared<const SyntheticOracle>(SyntheticOracle::from_scene(fx.blobs.target, cams));
  };
  std::string reference_csv;
  {
    Service ref(opts);
    REQUIRE(call(ref, "POST", "/v1/scene", fx.load_body(false)).status == 200);
    const Vec3 h = fx.blobs.handle, t = h + fx.blobs.drag;
    call(ref, "POST", "/v1/points", {{"pairs", {{{"handle", {h.x(), h.y(), h.z()}}, {"target", {t.x(), t.y(), t.z()}}}}}});
    REQUIRE(call(ref, "POST", "/v1/edit/start", {{"iterations", 40}}).status == 200);
    until_terminal(ref.session_for("/"), 0);
    reference_csv = call(ref, "GET", "/v1/edit/history.csv").body;
  }
  std::filesystem::path ckpt;
  {
    Service a(opts);
    REQUIRE(call(a, "POST", "/v1/scene", fx.load_body(false)).status == 200);
    const Vec3 h = fx.blobs.handle, t = h + fx.blobs.drag;
    call(a, "POST", "/v1/points", {{"pairs", {{{"handle", {h.x(), h.y(), h.z()}}, {"target", {t.x(), t.y(), t.z()}}}}}});
    REQUIRE(call(a, "POST", "/v1/edit/start", {{"iterations", 40}}).status == 200);
    a.session_for("/").wait_events(2, std::chrono::seconds(60));
    const auto written = a.shutdown();
    REQUIRE(written.size() == 1);
    ckpt = written.front();
    CHECK(std::filesystem::exists(ckpt));
  }
  Service b(opts);
  b.session_for("/").restore(ckpt);
  const json st = call(b, "GET", "/v1/edit/status").json();
  CHECK(st["status"] == "paused");
  const int at = st["iteration"];
  CHECK(at > 0);
  CHECK(at < 40);
  REQUIRE(call(b, "POST", "/v1/edit/resume").status == 200);
  const auto end = until_terminal(b.session_for("/"), st["last_event_id"].get<std::int64_t>());
  CHECK(end.back()["type"] == "done");
  CHECK(call(b, "GET", "/v1/edit/history.csv").body == reference_csv);
}

TEST_CASE("multi-session isolation") {
  const Fixture fx;
  ServiceOptions opts;
  opts.multi_session = true;
  Service svc(opts);
  REQUIRE(call(svc, "POST", "/v1/scene?session=a", fx.load_body()).status == 200);
  CHECK(call(svc, "GET", "/v1/scene?session=a").status == 200);
  CHECK(call(svc, "GET", "/v1/scene?session=b").status == 409);
}

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace ws = beast::websocket;
using tcp = net::ip::tcp;

namespace {

http::response<http::string_body> http_call(unsigned short port, http::verb verb, const std::string& target,
                                            const std::string& body = {}) {
  net::io_context ioc;
  tcp::socket sock(ioc);
  sock.connect({net::ip::make_address("127.0.0.1"), port});
  http::request<http::string_body> req{verb, target, 11};
  req.set(http::field::host, "127.0.0.1");
  req.body() = body;
  req.prepare_payload();
  http::write(sock, req);
  beast::flat_buffer buf;
  http::response<http::string_body> res;
  http::read(sock, buf, res);
  beast::error_code ec;
  sock.shutdown(tcp::socket::shutdown_both, ec);
  return res;
}

}  // namespace

TEST_CASE("http and websocket transport") {
  const Fixture fx;
  ServiceOptions opts;
  opts.progress_every = 5;
  opts.body_limit = 4u << 20;
  Service svc(opts);
  Server server(svc, "127.0.0.1", 0);
  server.start();
  const unsigned short port = server.port();
  REQUIRE(port != 0);

  CHECK(http_call(port, http::verb::get, "/v1/health").result_int() == 200);
  const auto big = http_call(port, http::verb::post, "/v1/scene", std::string(5u << 20, 'x'));
  CHECK(big.result_int() == 413);
  CHECK(json::parse(big.body())["error"] == "payload_too_large");

  Server clash(svc, "127.0.0.1", port);
  CHECK_THROWS_AS(clash.start(), std::system_error);

  REQUIRE(http_call(port, http::verb::post, "/v1/scene", fx.load_body().dump()).result_int() == 200);
  const Vec3 h = fx.blobs.handle, t = h + fx.blobs.drag;
  const json pts = {{"pairs", {{{"handle", {h.x(), h.y(), h.z()}}, {"target", {t.x(), t.y(), t.z()}}}}}};
  REQUIRE(http_call(port, http::verb::post, "/v1/points", pts.dump()).result_int() == 200);

  // Subscribe before starting: the first event is iteration 0.
  net::io_context ioc;
  auto connect = [&](const std::string& target) {
    auto s = std::make_unique<ws::stream<tcp::socket>>(ioc);
    s->next_layer().connect({net::ip::make_address("127.0.0.1"), port});
    s->handshake("127.0.0.1", target);
    return s;
  };
  auto read_event = [](ws::stream<tcp::socket>& s) {
    beast::flat_buffer buf;
    s.read(buf);
    return json::parse(beast::buffers_to_string(buf.data()));
  };
  auto first = connect("/v1/edit/progress");
  REQUIRE(http_call(port, http::verb::post, "/v1/edit/start", json{{"iterations", 40}}.dump()).result_int() == 200);
  std::vector<json> log;
  for (int k = 0; k < 3; ++k) log.push_back(read_event(*first));
  CHECK(log.front()["iteration"] == 0);
  first->close(ws::close_code::normal);

  auto second = connect("/v1/edit/progress?last_event_id=" + std::to_string(log.back()["id"].get<std::int64_t>()));
  while (log.back()["type"] == "progress") log.push_back(read_event(*second));
  second->close(ws::close_code::normal);
  CHECK(log.back()["type"] == "done");
  std::vector<int> its;
  for (std::size_t k = 0; k < log.size(); ++k) {
    CHECK(log[k]["id"] == static_cast<std::int64_t>(k + 1));
    if (log[k]["type"] == "progress") its.push_back(log[k]["iteration"]);
  }
  REQUIRE(its.size() == 8);
  for (std::size_t k = 0; k < its.size(); ++k) CHECK(its[k] == static_cast<int>(5 * k));

  // Header form of the resume id.
  auto third = std::make_unique<ws::stream<tcp::socket>>(ioc);
  third->next_layer().connect({net::ip::make_address("127.0.0.1"), port});
  third->set_option(ws::stream_base::decorator([](ws::request_type& r) { r.set("Last-Event-ID", "8"); }));
  third->handshake("127.0.0.1", "/v1/edit/progress");
  CHECK(read_event(*third)["id"] == 9);
  third->close(ws::close_code::normal);
  server.stop();
}
