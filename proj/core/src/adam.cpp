#include "gsdrag/adam.hpp"

#include <cmath>
#include <stdexcept>

#include "gsdrag/binary_io.hpp"

namespace gsdrag {

Adam::Adam(double eps, double beta1, double beta2) : eps_(eps), beta1_(beta1), beta2_(beta2) {}

void Adam::resize(std::size_t n) {
  m_.resize(n, 0.0);
  v_.resize(n, 0.0);
}

void Adam::retain_rows(std::span<const bool> keep, std::size_t row_width) {
  if (keep.size() * row_width != m_.size()) throw std::invalid_argument("Adam::retain_rows: row count mismatch");
  std::size_t w = 0;
  for (std::size_t r = 0; r < keep.size(); ++r) {
    if (!keep[r]) continue;
    for (std::size_t k = 0; k < row_width; ++k) {
      m_[w * row_width + k] = m_[r * row_width + k];
      v_[w * row_width + k] = v_[r * row_width + k];
    }
    ++w;
  }
  resize(w * row_width);
}

void Adam::step(std::span<double> params, std::span<const double> grads, double lr, std::span<const double> row_scale,
                std::size_t row_width) {
  if (params.size() != grads.size() || params.size() != m_.size())
    throw std::invalid_argument("Adam::step: parameter, gradient and state sizes differ");
  if (!row_scale.empty() && row_scale.size() * row_width != params.size())
    throw std::invalid_argument("Adam::step: row scale count mismatch");
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double scale = row_scale.empty() ? 1.0 : row_scale[i / row_width];
    if (scale == 0.0) continue;
    const double g = grads[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
    params[i] -= lr * scale * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

void Adam::write(std::ostream& out) const {
  bin::write_f64(out, eps_);
  bin::write_f64(out, beta1_);
  bin::write_f64(out, beta2_);
  bin::write_u64(out, steps_);
  bin::write_f64s(out, m_);
  bin::write_f64s(out, v_);
}

Adam Adam::read(std::istream& in) {
  Adam a;
  a.eps_ = bin::read_f64(in);
  a.beta1_ = bin::read_f64(in);
  a.beta2_ = bin::read_f64(in);
  a.steps_ = bin::read_u64(in);
  a.m_ = bin::read_f64s(in);
  a.v_ = bin::read_f64s(in);
  if (a.m_.size() != a.v_.size()) throw FormatError("optimizer state: moment sizes differ");
  return a;
}

}  // namespace gsdrag
