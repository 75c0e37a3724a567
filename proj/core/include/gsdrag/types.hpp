#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace gsdrag {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

/// Axis-aligned bounding box. A default-constructed box is the degenerate
/// box at the origin.
struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 extent() const { return max - min; }
  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

// Error taxonomy. Each maps onto one failure class callers branch on.

/// Malformed file structure (bad header, truncated payload).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Well-formed file carrying unusable values; `element()` names the offending
/// record.
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& what, std::size_t element)
      : std::runtime_error(what + " (element " + std::to_string(element) + ")"), message_(what), element_(element) {}
  std::size_t element() const { return element_; }
  const std::string& message() const { return message_; }

 private:
  std::string message_;
  std::size_t element_;
};

/// Inconsistent configuration: dimension mismatch, missing target view, bad
/// hyperparameter.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation not allowed in the current lifecycle state.
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The point lies at or behind the camera plane.
class BehindCameraError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Frustum selection produced no primitives.
class EmptyMaskError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Guidance oracle could not produce a usable response. The edit run pauses
/// and may be resumed.
class GuidanceUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gsdrag
