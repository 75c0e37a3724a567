#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace gsdrag {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Activations retained by Mlp::forward for the backward pass.
struct MlpTape {
  /// inputs[l] is the input to layer l; the last entry is the network output.
  std::vector<RowMatrix> inputs;
  std::vector<RowMatrix> preactivations;
};

/// Fully connected ReLU network operating on row batches. All weights and
/// biases live in one contiguous buffer so an optimizer can step them as a
/// single span.
class Mlp {
 public:
  Mlp() = default;
  /// `widths` = {in, hidden..., out}. Weights and biases use U(-1/sqrt(fan_in),
  /// 1/sqrt(fan_in)); the final layer is all zeros when `zero_last` is set.
  Mlp(std::vector<int> widths, bool zero_last, std::mt19937_64& rng);

  const std::vector<int>& widths() const { return widths_; }
  int input_width() const { return widths_.front(); }
  int output_width() const { return widths_.back(); }
  std::size_t layer_count() const { return widths_.size() - 1; }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  Eigen::Map<const RowMatrix> weight(std::size_t layer) const;
  Eigen::Map<RowMatrix> weight(std::size_t layer);
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;
  Eigen::Map<Eigen::VectorXd> bias(std::size_t layer);

  RowMatrix forward(const RowMatrix& x, MlpTape* tape = nullptr) const;

  /// Accumulates parameter gradients into `param_grad` (same layout as
  /// parameters()) for the tape rows listed in `rows` (all rows when empty),
  /// with `d_out` holding one gradient row per listed row. Returns the input
  /// gradient for those rows when `want_input_grad` is set.
  RowMatrix backward(const MlpTape& tape, const RowMatrix& d_out, std::span<double> param_grad,
                     std::span<const int> rows = {}, bool want_input_grad = true) const;

 private:
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_[layer] + static_cast<std::size_t>(widths_[layer + 1]) * widths_[layer];
  }

  std::vector<int> widths_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

}  // namespace gsdrag
