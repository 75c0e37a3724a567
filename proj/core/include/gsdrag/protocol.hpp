#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "gsdrag/guidance.hpp"

namespace gsdrag {

inline constexpr int kGuidanceProtocolVersion = 1;

std::string base64_encode(std::string_view bytes);
/// Throws FormatError on malformed input.
std::string base64_decode(std::string_view text);

/// {"shape": [H, W, C], "data": base64 of little-endian float32, row-major}.
/// Values are rounded to float32 on the way out.
nlohmann::json tensor_to_json(const Tensor3& t);
Tensor3 tensor_from_json(const nlohmann::json& j);

nlohmann::json request_to_json(const GuidanceRequest& r);
/// Throws FormatError on a malformed or wrong-version envelope.
GuidanceRequest request_from_json(const nlohmann::json& j);
nlohmann::json response_to_json(const GuidanceResponse& r);
GuidanceResponse response_from_json(const nlohmann::json& j);

struct HttpOracleOptions {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  std::chrono::seconds timeout{30};
};

/// Client for an external guidance process speaking the JSON protocol over
/// HTTP POST. Transport failures are retried with exponential backoff; any
/// failure that survives the retries, a malformed body or a latent-shape
/// mismatch raises GuidanceUnavailable.
class HttpGuidanceOracle final : public GuidanceOracle {
 public:
  /// `url` is http://host[:port][/path].
  explicit HttpGuidanceOracle(std::string url, HttpOracleOptions options = {});

  GuidanceResponse predict(const GuidanceRequest& request, const SourceEstimator& estimator) const override;
  std::string describe() const override { return "http:" + url_; }

 private:
  std::string url_;
  std::string origin_;
  std::string path_;
  HttpOracleOptions options_;
};

}  // namespace gsdrag
