#include "gsdrag/protocol.hpp"

#include <bit>
#include <cstring>
#include <regex>
#include <thread>

#include <boost/beast/core/detail/base64.hpp>
#include <httplib.h>

namespace gsdrag {
namespace {

namespace b64 = boost::beast::detail::base64;
using nlohmann::json;

json vec2_json(const Vec2& v) { return json::array({v.x(), v.y()}); }

Vec2 vec2_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw FormatError("guidance protocol: expected [u, v]");
  return {j[0].get<double>(), j[1].get<double>()};
}

template <typename F>
auto wrap_json_errors(F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw FormatError(std::string("guidance protocol: ") + e.what());
  }
}

void check_version(const json& j) {
  if (!j.is_object() || !j.contains("protocol")) throw FormatError("guidance protocol: missing protocol version");
  if (j.at("protocol").get<int>() != kGuidanceProtocolVersion)
    throw FormatError("guidance protocol: unsupported version " + j.at("protocol").dump());
}

}  // namespace

std::string base64_encode(std::string_view bytes) {
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

std::string base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw FormatError("base64: length is not a multiple of 4");
  std::size_t pad = 0;
  while (pad < 2 && pad < text.size() && text[text.size() - 1 - pad] == '=') ++pad;
  std::string out(b64::decoded_size(text.size()), '\0');
  // The decoder stops at the first '=', so only trailing padding may be left unread.
  const auto [written, read] = b64::decode(out.data(), text.data(), text.size());
  if (read + pad != text.size()) throw FormatError("base64: invalid character");
  out.resize(written);
  return out;
}

json tensor_to_json(const Tensor3& t) {
  static_assert(std::endian::native == std::endian::little);
  std::string bytes(t.data.size() * sizeof(float), '\0');
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    const auto f = static_cast<float>(t.data[i]);
    std::memcpy(bytes.data() + i * sizeof(float), &f, sizeof(float));
  }
  return {{"shape", {t.height, t.width, t.channels}}, {"data", base64_encode(bytes)}};
}

Tensor3 tensor_from_json(const json& j) {
  return wrap_json_errors([&] {
    const auto& shape = j.at("shape");
    if (!shape.is_array() || shape.size() != 3) throw FormatError("guidance protocol: tensor shape must be [H, W, C]");
    const int h = shape[0].get<int>(), w = shape[1].get<int>(), c = shape[2].get<int>();
    if (h < 0 || w < 0 || c < 0) throw FormatError("guidance protocol: negative tensor dimension");
    const std::string bytes = base64_decode(j.at("data").get<std::string>());
    Tensor3 t(h, w, c);
    if (bytes.size() != t.data.size() * sizeof(float))
      throw FormatError("guidance protocol: tensor payload does not match its shape");
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      float f;
      std::memcpy(&f, bytes.data() + i * sizeof(float), sizeof(float));
      t.data[i] = f;
    }
    return t;
  });
}

json request_to_json(const GuidanceRequest& r) {
  json points = json::array();
  for (const auto& p : r.points)
    points.push_back({{"handle", vec2_json(p.handle)}, {"target", vec2_json(p.target)}, {"on_screen", p.on_screen}});
  return {{"protocol", kGuidanceProtocolVersion},
          {"camera", r.camera},
          {"image", tensor_to_json(r.image)},
          {"init_image", tensor_to_json(r.init_image)},
          {"mask", tensor_to_json(r.mask)},
          {"points", std::move(points)},
          {"t", r.step},
          {"alpha_bar", r.alpha_bar},
          {"noise", tensor_to_json(r.noise)},
          {"cfg", r.cfg},
          {"epoch_ratio", r.epoch_ratio},
          {"seed", r.seed}};
}

GuidanceRequest request_from_json(const json& j) {
  return wrap_json_errors([&] {
    check_version(j);
    GuidanceRequest r;
    r.camera = j.value("camera", 0);
    r.image = tensor_from_json(j.at("image"));
    r.init_image = tensor_from_json(j.at("init_image"));
    r.mask = tensor_from_json(j.at("mask"));
    for (const auto& p : j.at("points")) {
      ControlPair2D c;
      c.handle = vec2_from(p.at("handle"));
      c.target = vec2_from(p.at("target"));
      c.on_screen = p.value("on_screen", true);
      r.points.push_back(c);
    }
    r.step = j.at("t").get<int>();
    r.alpha_bar = j.at("alpha_bar").get<double>();
    r.noise = tensor_from_json(j.at("noise"));
    r.cfg = j.at("cfg").get<double>();
    r.epoch_ratio = j.value("epoch_ratio", 0.0);
    r.seed = j.at("seed").get<std::uint64_t>();
    return r;
  });
}

json response_to_json(const GuidanceResponse& r) {
  return {{"protocol", kGuidanceProtocolVersion},
          {"eps_tgt", tensor_to_json(r.eps_tgt)},
          {"eps_src", tensor_to_json(r.eps_src)}};
}

GuidanceResponse response_from_json(const json& j) {
  return wrap_json_errors([&] {
    check_version(j);
    return GuidanceResponse{tensor_from_json(j.at("eps_tgt")), tensor_from_json(j.at("eps_src"))};
  });
}

HttpGuidanceOracle::HttpGuidanceOracle(std::string url, HttpOracleOptions options)
    : url_(std::move(url)), options_(options) {
  static const std::regex re(R"(^(http://[^/\s]+)(/\S*)?$)");
  std::smatch m;
  if (!std::regex_match(url_, m, re)) throw ConfigError("guidance url must look like http://host[:port][/path]: " + url_);
  origin_ = m[1];
  path_ = m[2].matched ? std::string(m[2]) : "/";
  if (options_.attempts < 1) throw ConfigError("guidance: at least one attempt is required");
}

GuidanceResponse HttpGuidanceOracle::predict(const GuidanceRequest& request, const SourceEstimator&) const {
  const std::string body = request_to_json(request).dump();
  httplib::Client client(origin_);
  client.set_connection_timeout(options_.timeout);
  client.set_read_timeout(options_.timeout);
  client.set_write_timeout(options_.timeout);

  std::string last_error;
  auto backoff = options_.initial_backoff;
  for (int attempt = 0; attempt < options_.attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    auto res = client.Post(path_, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "server status " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw GuidanceUnavailable("guidance server rejected request with status " + std::to_string(res->status));

    GuidanceResponse out;
    try {
      out = response_from_json(json::parse(res->body));
    } catch (const std::exception& e) {
      throw GuidanceUnavailable(std::string("malformed guidance response: ") + e.what());
    }
    if (!out.eps_tgt.same_shape(request.noise) || !out.eps_src.same_shape(request.noise))
      throw GuidanceUnavailable("guidance response latent shape does not match the request");
    return out;
  }
  throw GuidanceUnavailable("guidance server unreachable after " + std::to_string(options_.attempts) +
                            " attempts (" + last_error + ")");
}

}  // namespace gsdrag
