#include "gsdrag/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace gsdrag {

Mlp::Mlp(std::vector<int> widths, bool zero_last, std::mt19937_64& rng) : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw std::invalid_argument("Mlp: need at least input and output width");
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    offsets_.push_back(total);
    total += static_cast<std::size_t>(widths_[l + 1]) * widths_[l] + widths_[l + 1];
  }
  params_.assign(total, 0.0);
  for (std::size_t l = 0; l < layer_count(); ++l) {
    if (zero_last && l + 1 == layer_count()) break;
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths_[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    const std::size_t end = l + 1 < layer_count() ? offsets_[l + 1] : total;
    for (std::size_t k = offsets_[l]; k < end; ++k) params_[k] = u(rng);
  }
}

Eigen::Map<const RowMatrix> Mlp::weight(std::size_t l) const {
  return {params_.data() + weight_offset(l), widths_[l + 1], widths_[l]};
}
Eigen::Map<RowMatrix> Mlp::weight(std::size_t l) { return {params_.data() + weight_offset(l), widths_[l + 1], widths_[l]}; }
Eigen::Map<const Eigen::VectorXd> Mlp::bias(std::size_t l) const {
  return {params_.data() + bias_offset(l), widths_[l + 1]};
}
Eigen::Map<Eigen::VectorXd> Mlp::bias(std::size_t l) { return {params_.data() + bias_offset(l), widths_[l + 1]}; }

RowMatrix Mlp::forward(const RowMatrix& x, MlpTape* tape) const {
  if (x.cols() != input_width()) throw std::invalid_argument("Mlp::forward: input width mismatch");
  if (tape) {
    tape->inputs.clear();
    tape->preactivations.clear();
  }
  RowMatrix h = x;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    RowMatrix z = h * weight(l).transpose();
    z.rowwise() += bias(l).transpose();
    if (tape) {
      tape->inputs.push_back(std::move(h));
      tape->preactivations.push_back(z);
    }
    h = l + 1 < layer_count() ? RowMatrix(z.cwiseMax(0.0)) : std::move(z);
  }
  if (tape) tape->inputs.push_back(h);
  return h;
}

RowMatrix Mlp::backward(const MlpTape& tape, const RowMatrix& d_out, std::span<double> param_grad,
                        std::span<const int> rows, bool want_input_grad) const {
  if (param_grad.size() != params_.size()) throw std::invalid_argument("Mlp::backward: gradient buffer size");
  if (tape.preactivations.size() != layer_count()) throw std::logic_error("Mlp::backward: stale or empty tape");
  const bool subset = !rows.empty();
  const Eigen::Index batch = subset ? static_cast<Eigen::Index>(rows.size()) : tape.inputs.front().rows();
  if (d_out.rows() != batch || d_out.cols() != output_width())
    throw std::invalid_argument("Mlp::backward: upstream gradient shape");

  auto gather = [&](const RowMatrix& m) -> RowMatrix {
    if (!subset) return m;
    RowMatrix g(batch, m.cols());
    for (Eigen::Index r = 0; r < batch; ++r) g.row(r) = m.row(rows[static_cast<std::size_t>(r)]);
    return g;
  };

  RowMatrix delta = d_out;
  for (std::size_t l = layer_count(); l-- > 0;) {
    if (l + 1 < layer_count()) {
      const RowMatrix z = gather(tape.preactivations[l]);
      delta = delta.cwiseProduct(RowMatrix((z.array() > 0.0).cast<double>()));
    }
    const RowMatrix input = gather(tape.inputs[l]);
    Eigen::Map<RowMatrix> d_w(param_grad.data() + weight_offset(l), widths_[l + 1], widths_[l]);
    Eigen::Map<Eigen::VectorXd> d_b(param_grad.data() + bias_offset(l), widths_[l + 1]);
    d_w.noalias() += delta.transpose() * input;
    d_b += delta.colwise().sum().transpose();
    if (l == 0 && !want_input_grad) return {};
    delta = delta * weight(l);
  }
  return delta;
}

}  // namespace gsdrag
