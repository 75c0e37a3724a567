#include "gsdrag/triplane.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "gsdrag/binary_io.hpp"

namespace gsdrag {
namespace {

constexpr std::string_view kMagic = "GSDMODEL";
constexpr std::uint32_t kVersion = 1;
constexpr PlaneAxis kPlanes[3] = {PlaneAxis::XY, PlaneAxis::XZ, PlaneAxis::YZ};

std::vector<int> widths(int in, int hidden, int hidden_layers, int out) {
  std::vector<int> w{in};
  for (int i = 0; i < hidden_layers; ++i) w.push_back(hidden);
  w.push_back(out);
  return w;
}

void copy_params(std::span<double> dst, const std::vector<double>& src, const char* what) {
  if (src.size() != dst.size()) throw FormatError(std::string("model checkpoint: ") + what + " size mismatch");
  std::copy(src.begin(), src.end(), dst.begin());
}

}  // namespace

Vec3 normalize_position(const Vec3& p, const Aabb& box) {
  Vec3 out;
  for (int k = 0; k < 3; ++k) {
    const double half = 0.5 * (box.max[k] - box.min[k]);
    const double c = 0.5 * (box.max[k] + box.min[k]);
    out[k] = half > 0.0 ? std::clamp((p[k] - c) / half, -1.0, 1.0) : 0.0;
  }
  return out;
}

Vec2 project_to_plane(const Vec3& n, PlaneAxis plane) {
  switch (plane) {
    case PlaneAxis::XY: return {n.x(), n.y()};
    case PlaneAxis::XZ: return {n.x(), n.z()};
    case PlaneAxis::YZ: return {n.y(), n.z()};
  }
  return {0.0, 0.0};
}

BilinearTaps bilinear_taps(int resolution, const Vec2& uv) {
  BilinearTaps t;
  if (resolution == 1) {
    t.cell = {0, 0, 0, 0};
    t.weight = {1.0, 0.0, 0.0, 0.0};
    return t;
  }
  const double last = resolution - 1;
  const double x = (std::clamp(uv.x(), -1.0, 1.0) + 1.0) * 0.5 * last;
  const double y = (std::clamp(uv.y(), -1.0, 1.0) + 1.0) * 0.5 * last;
  const int x0 = std::min(static_cast<int>(std::floor(x)), resolution - 2);
  const int y0 = std::min(static_cast<int>(std::floor(y)), resolution - 2);
  const double fx = x - x0, fy = y - y0;
  t.cell = {y0 * resolution + x0, y0 * resolution + x0 + 1, (y0 + 1) * resolution + x0,
            (y0 + 1) * resolution + x0 + 1};
  t.weight = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  return t;
}

void sample_plane(std::span<const double> grid, int resolution, int feature_dim, const Vec2& uv,
                  std::span<double> out) {
  if (grid.size() != static_cast<std::size_t>(resolution) * resolution * feature_dim ||
      out.size() != static_cast<std::size_t>(feature_dim))
    throw ConfigError("sample_plane: grid or output size does not match resolution and feature dim");
  const BilinearTaps t = bilinear_taps(resolution, uv);
  std::fill(out.begin(), out.end(), 0.0);
  for (int k = 0; k < 4; ++k) {
    if (t.weight[k] == 0.0) continue;
    const double* cell = grid.data() + static_cast<std::size_t>(t.cell[k]) * feature_dim;
    for (int f = 0; f < feature_dim; ++f) out[f] += t.weight[k] * cell[f];
  }
}

TriplaneField::TriplaneField(std::vector<int> resolutions, int feature_dim)
    : resolutions_(std::move(resolutions)), feature_dim_(feature_dim) {
  if (resolutions_.empty() || feature_dim_ <= 0) throw ConfigError("triplane: need at least one scale and F > 0");
  std::size_t total = 0;
  for (int r : resolutions_) {
    if (r < 1) throw ConfigError("triplane: resolution must be positive");
    scale_offsets_.push_back(total);
    total += 3 * static_cast<std::size_t>(r) * r * feature_dim_;
  }
  data_.assign(total, 0.0);
}

std::size_t TriplaneField::plane_offset(std::size_t scale, PlaneAxis plane) const {
  const auto r = static_cast<std::size_t>(resolutions_.at(scale));
  return scale_offsets_[scale] + static_cast<std::size_t>(plane) * r * r * feature_dim_;
}

std::span<double> TriplaneField::plane(std::size_t scale, PlaneAxis plane) {
  const auto r = static_cast<std::size_t>(resolutions_.at(scale));
  return std::span<double>(data_).subspan(plane_offset(scale, plane), r * r * feature_dim_);
}

std::span<const double> TriplaneField::plane(std::size_t scale, PlaneAxis plane) const {
  const auto r = static_cast<std::size_t>(resolutions_.at(scale));
  return std::span<const double>(data_).subspan(plane_offset(scale, plane), r * r * feature_dim_);
}

void ModelGradients::set_zero() {
  for (auto* v : {&planes, &fusion, &masked_decoder, &unmasked_decoder}) std::fill(v->begin(), v->end(), 0.0);
}

DeformationModel::DeformationModel(const TriplaneConfig& config, const Aabb& box, std::uint64_t seed)
    : config_(config), box_(box), field_(config.resolutions, config.feature_dim) {
  if ((box.max.array() <= box.min.array()).any()) throw ConfigError("deformation model: degenerate bounding box");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-config.plane_init, config.plane_init);
  for (double& v : field_.parameters()) v = u(rng);
  const int in = encoding_width();
  fusion_ = Mlp(widths(in, config.fusion_width, config.fusion_hidden_layers, config.fusion_width), false, rng);
  const int f = config.fusion_width;
  masked_decoder_ = Mlp(widths(f, config.decoder_width, config.decoder_hidden_layers, 3), true, rng);
  unmasked_decoder_ = Mlp(widths(f, config.decoder_width, config.decoder_hidden_layers, 3), true, rng);
}

Eigen::VectorXd DeformationModel::multiscale_features(const Vec3& normalized) const {
  const int fd = field_.feature_dim();
  Eigen::VectorXd e(encoding_width());
  std::vector<double> sample(fd);
  for (std::size_t s = 0; s < field_.scale_count(); ++s) {
    auto seg = e.segment(static_cast<Eigen::Index>(s) * fd, fd);
    seg.setOnes();
    for (PlaneAxis a : kPlanes) {
      sample_plane(field_.plane(s, a), field_.resolutions()[s], fd, project_to_plane(normalized, a), sample);
      for (int k = 0; k < fd; ++k) seg[k] *= sample[k];
    }
  }
  return e;
}

Eigen::VectorXd DeformationModel::encode(const Vec3& p) const {
  const Eigen::VectorXd e = multiscale_features(normalize_position(p, box_));
  const RowMatrix f = fusion_.forward(RowMatrix(e.transpose()));
  return f.row(0).transpose();
}

double DeformationModel::shift_scale() const {
  const Vec3 side = box_.max - box_.min;
  return 0.5 * side.maxCoeff();
}

Vec3 DeformationModel::decode_shift(const Eigen::VectorXd& f, bool masked) const {
  if (f.size() != feature_width()) throw ConfigError("decode_shift: feature width mismatch");
  const RowMatrix x = f.transpose();
  RowMatrix d = masked_decoder_.forward(x);
  if (!masked) d += unmasked_decoder_.forward(x);
  return shift_scale() * d.row(0).transpose();
}

std::vector<Vec3> DeformationModel::deform(std::span<const Vec3> positions, std::span<const std::uint8_t> mask,
                                           DeformTape* tape) const {
  if (positions.size() != mask.size()) throw ConfigError("deform: positions and mask differ in length");
  const std::size_t n = positions.size();
  const int fd = field_.feature_dim();
  const std::size_t scales = field_.scale_count();
  std::vector<Vec3> shifts(n, Vec3::Zero());
  if (n == 0) {
    if (tape) *tape = DeformTape{};
    return shifts;
  }

  DeformTape local;
  DeformTape& t = tape ? *tape : local;
  t = DeformTape{};
  t.count = n;
  t.masked.assign(mask.begin(), mask.end());
  t.taps.resize(n * scales * 3);
  t.samples.resize(n * scales * 3 * fd);

  RowMatrix e(static_cast<Eigen::Index>(n), encoding_width());
  for (std::size_t i = 0; i < n; ++i) {
    (mask[i] ? t.masked_rows : t.unmasked_rows).push_back(static_cast<int>(i));
    const Vec3 q = normalize_position(positions[i], box_);
    for (std::size_t s = 0; s < scales; ++s) {
      const int res = field_.resolutions()[s];
      for (int a = 0; a < 3; ++a) {
        const std::size_t slot = (i * scales + s) * 3 + a;
        const BilinearTaps taps = bilinear_taps(res, project_to_plane(q, kPlanes[a]));
        t.taps[slot] = taps;
        double* out = t.samples.data() + slot * fd;
        std::fill(out, out + fd, 0.0);
        const auto grid = field_.plane(s, kPlanes[a]);
        for (int k = 0; k < 4; ++k) {
          if (taps.weight[k] == 0.0) continue;
          const double* cell = grid.data() + static_cast<std::size_t>(taps.cell[k]) * fd;
          for (int f = 0; f < fd; ++f) out[f] += taps.weight[k] * cell[f];
        }
      }
      const double* sxy = t.samples.data() + ((i * scales + s) * 3 + 0) * fd;
      const double* sxz = sxy + fd;
      const double* syz = sxz + fd;
      for (int f = 0; f < fd; ++f)
        e(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s) * fd + f) = sxy[f] * sxz[f] * syz[f];
    }
  }

  const RowMatrix feat = fusion_.forward(e, &t.fusion);
  const RowMatrix o1 = masked_decoder_.forward(feat, &t.masked_decoder);
  const double scale = shift_scale();
  for (std::size_t i = 0; i < n; ++i) shifts[i] = scale * o1.row(static_cast<Eigen::Index>(i)).transpose();

  if (!t.unmasked_rows.empty()) {
    RowMatrix fu(static_cast<Eigen::Index>(t.unmasked_rows.size()), feat.cols());
    for (std::size_t r = 0; r < t.unmasked_rows.size(); ++r)
      fu.row(static_cast<Eigen::Index>(r)) = feat.row(t.unmasked_rows[r]);
    const RowMatrix o2 = unmasked_decoder_.forward(fu, &t.unmasked_decoder);
    for (std::size_t r = 0; r < t.unmasked_rows.size(); ++r)
      shifts[static_cast<std::size_t>(t.unmasked_rows[r])] += scale * o2.row(static_cast<Eigen::Index>(r)).transpose();
  }
  return shifts;
}

ModelGradients DeformationModel::zero_gradients() const {
  ModelGradients g;
  g.planes.assign(field_.parameters().size(), 0.0);
  g.fusion.assign(fusion_.parameters().size(), 0.0);
  g.masked_decoder.assign(masked_decoder_.parameters().size(), 0.0);
  g.unmasked_decoder.assign(unmasked_decoder_.parameters().size(), 0.0);
  return g;
}

void DeformationModel::backward(const DeformTape& tape, std::span<const Vec3> d_shifts, ModelGradients& grads) const {
  if (d_shifts.size() != tape.count) throw std::logic_error("deformation backward: tape does not match gradient count");
  const int fd = field_.feature_dim();
  const std::size_t scales = field_.scale_count();
  if (tape.count > 0 && (tape.samples.size() != tape.count * scales * 3 * fd || tape.fusion.inputs.empty()))
    throw std::logic_error("deformation backward: tape does not match this model");
  if (grads.planes.size() != field_.parameters().size() || grads.fusion.size() != fusion_.parameters().size() ||
      grads.masked_decoder.size() != masked_decoder_.parameters().size() ||
      grads.unmasked_decoder.size() != unmasked_decoder_.parameters().size())
    throw std::invalid_argument("deformation backward: gradient buffers have the wrong layout");

  const double scale = shift_scale();
  // Unmasked rows: N2 only; its input is a detached copy of f.
  if (!tape.unmasked_rows.empty()) {
    RowMatrix d(static_cast<Eigen::Index>(tape.unmasked_rows.size()), 3);
    for (std::size_t r = 0; r < tape.unmasked_rows.size(); ++r)
      d.row(static_cast<Eigen::Index>(r)) = scale * d_shifts[static_cast<std::size_t>(tape.unmasked_rows[r])].transpose();
    unmasked_decoder_.backward(tape.unmasked_decoder, d, grads.unmasked_decoder, {}, false);
  }

  if (tape.masked_rows.empty()) return;
  const auto rows = std::span<const int>(tape.masked_rows);
  RowMatrix d(static_cast<Eigen::Index>(rows.size()), 3);
  for (std::size_t r = 0; r < rows.size(); ++r)
    d.row(static_cast<Eigen::Index>(r)) = scale * d_shifts[static_cast<std::size_t>(rows[r])].transpose();
  const RowMatrix d_feat = masked_decoder_.backward(tape.masked_decoder, d, grads.masked_decoder, rows, true);
  const RowMatrix d_enc = fusion_.backward(tape.fusion, d_feat, grads.fusion, rows, true);

  std::vector<double> other(fd);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto i = static_cast<std::size_t>(rows[r]);
    for (std::size_t s = 0; s < scales; ++s) {
      const double* smp = tape.samples.data() + (i * scales + s) * 3 * fd;
      for (int a = 0; a < 3; ++a) {
        const double* p = smp + ((a + 1) % 3) * fd;
        const double* q = smp + ((a + 2) % 3) * fd;
        const auto& taps = tape.taps[(i * scales + s) * 3 + a];
        const std::size_t base = field_.plane_offset(s, kPlanes[a]);
        for (int f = 0; f < fd; ++f)
          other[f] = d_enc(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s) * fd + f) * p[f] * q[f];
        for (int k = 0; k < 4; ++k) {
          if (taps.weight[k] == 0.0) continue;
          double* cell = grads.planes.data() + base + static_cast<std::size_t>(taps.cell[k]) * fd;
          for (int f = 0; f < fd; ++f) cell[f] += taps.weight[k] * other[f];
        }
      }
    }
  }
}

void DeformationModel::write(std::ostream& out) const {
  bin::write_magic(out, kMagic, kVersion);
  bin::write_vec3s(out, std::vector<Vec3>{box_.min, box_.max});
  bin::write_u64(out, config_.resolutions.size());
  for (int r : config_.resolutions) bin::write_u32(out, static_cast<std::uint32_t>(r));
  for (int v : {config_.feature_dim, config_.fusion_width, config_.fusion_hidden_layers, config_.decoder_width,
                config_.decoder_hidden_layers})
    bin::write_u32(out, static_cast<std::uint32_t>(v));
  bin::write_f64(out, config_.plane_init);
  bin::write_f64s(out, field_.parameters());
  bin::write_f64s(out, fusion_.parameters());
  bin::write_f64s(out, masked_decoder_.parameters());
  bin::write_f64s(out, unmasked_decoder_.parameters());
}

DeformationModel DeformationModel::read(std::istream& in) {
  bin::read_magic(in, kMagic, kVersion);
  const auto box = bin::read_vec3s(in);
  if (box.size() != 2) throw FormatError("model checkpoint: bad bounding box");
  TriplaneConfig cfg;
  const auto scales = bin::read_u64(in);
  if (scales == 0 || scales > 16) throw FormatError("model checkpoint: bad scale count");
  cfg.resolutions.clear();
  for (std::uint64_t s = 0; s < scales; ++s) {
    const auto r = bin::read_u32(in);
    if (r == 0 || r > 4096) throw FormatError("model checkpoint: bad resolution");
    cfg.resolutions.push_back(static_cast<int>(r));
  }
  for (int* v : {&cfg.feature_dim, &cfg.fusion_width, &cfg.fusion_hidden_layers, &cfg.decoder_width,
                 &cfg.decoder_hidden_layers}) {
    const auto x = bin::read_u32(in);
    if (x > 4096) throw FormatError("model checkpoint: implausible layer size");
    *v = static_cast<int>(x);
  }
  cfg.plane_init = bin::read_f64(in);
  DeformationModel m;
  try {
    m = DeformationModel(cfg, Aabb{box[0], box[1]}, 0);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("model checkpoint: ") + e.what());
  }
  copy_params(m.field_.parameters(), bin::read_f64s(in), "planes");
  copy_params(m.fusion_.parameters(), bin::read_f64s(in), "fusion network");
  copy_params(m.masked_decoder_.parameters(), bin::read_f64s(in), "masked decoder");
  copy_params(m.unmasked_decoder_.parameters(), bin::read_f64s(in), "unmasked decoder");
  return m;
}

void DeformationModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write(out);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

DeformationModel DeformationModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read(in);
}

std::vector<Vec3> deform_scene(const GaussianScene& scene, const DeformationModel& model) {
  return model.deform(scene);
}

double region_reg_loss(std::span<const Vec3> shifts) {
  if (shifts.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& d : shifts) sum += d.norm();
  return sum / static_cast<double>(shifts.size());
}

std::vector<Vec3> region_reg_gradient(std::span<const Vec3> shifts) {
  std::vector<Vec3> g(shifts.size(), Vec3::Zero());
  const double inv = shifts.empty() ? 0.0 : 1.0 / static_cast<double>(shifts.size());
  for (std::size_t i = 0; i < shifts.size(); ++i) {
    const double n = shifts[i].norm();
    if (n > 0.0) g[i] = shifts[i] * (inv / n);
  }
  return g;
}

}  // namespace gsdrag
