#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace gsdrag {

/// Adam over one flat parameter group. Moments are stored per element; the
/// step counter is per group.
class Adam {
 public:
  explicit Adam(double eps = 1e-8, double beta1 = 0.9, double beta2 = 0.999);

  std::size_t size() const { return m_.size(); }
  std::uint64_t steps() const { return steps_; }
  double eps() const { return eps_; }

  /// Grows or shrinks the moment buffers; new entries start at zero.
  void resize(std::size_t n);
  /// Keeps the rows flagged true (row = `row_width` consecutive elements).
  void retain_rows(std::span<const bool> keep, std::size_t row_width);

  /// One update with learning rate `lr`. When `row_scale` is given, row r
  /// uses lr * row_scale[r]; rows with scale 0 are left untouched, moments
  /// included.
  void step(std::span<double> params, std::span<const double> grads, double lr,
            std::span<const double> row_scale = {}, std::size_t row_width = 1);

  void write(std::ostream& out) const;
  static Adam read(std::istream& in);
  bool operator==(const Adam&) const = default;

 private:
  double eps_, beta1_, beta2_;
  std::uint64_t steps_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace gsdrag
