#include "gsdrag/edit_run.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "gsdrag/binary_io.hpp"
#include "gsdrag/knn.hpp"
#include "gsdrag/mask_select.hpp"

namespace gsdrag {
namespace {

constexpr std::string_view kRunMagic = "GSDRUN";
constexpr std::uint32_t kRunVersion = 1;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return splitmix(a ^ splitmix(b + 0x632be59bd9b4e019ULL)); }

template <typename V>
std::span<double> flat(std::vector<V>& v) {
  return {reinterpret_cast<double*>(v.data()), v.size() * V::SizeAtCompileTime};
}
template <typename V>
std::span<const double> flat(const std::vector<V>& v) {
  return {reinterpret_cast<const double*>(v.data()), v.size() * V::SizeAtCompileTime};
}

bool all_finite(std::span<const Vec3> v) {
  return std::all_of(v.begin(), v.end(), [](const Vec3& x) { return x.allFinite(); });
}

void write_scene_exact(std::ostream& out, const GaussianScene& s) {
  bin::write_vec3s(out, s.positions());
  bin::write_vec4s(out, s.rotations());
  bin::write_vec3s(out, s.log_scales());
  bin::write_f64s(out, s.opacity_logits());
  bin::write_vec3s(out, s.colors());
  bin::write_bytes(out, s.mask());
}

GaussianScene read_scene_exact(std::istream& in) {
  const auto pos = bin::read_vec3s(in);
  const auto rot = bin::read_vec4s(in);
  const auto ls = bin::read_vec3s(in);
  const auto op = bin::read_f64s(in);
  const auto col = bin::read_vec3s(in);
  const auto mask = bin::read_bytes(in);
  const std::size_t n = pos.size();
  if (rot.size() != n || ls.size() != n || op.size() != n || col.size() != n || mask.size() != n)
    throw FormatError("run checkpoint: scene arrays differ in length");
  GaussianScene s;
  s.reserve(n);
  for (std::size_t i = 0; i < n; ++i) s.push_back({pos[i], Vec4(1, 0, 0, 0), ls[i], op[i], col[i], mask[i] != 0});
  // push_back renormalizes; restore the stored quaternions bit for bit.
  s.rotations() = rot;
  return s;
}

}  // namespace

std::string_view to_string(RunStatus status) {
  switch (status) {
    case RunStatus::Running: return "running";
    case RunStatus::Paused: return "paused";
    case RunStatus::Done: return "done";
    case RunStatus::Failed: return "failed";
  }
  return "unknown";
}

std::string loss_csv_header() { return "iteration,s,t,L_lat,L_img,L_src,L_RR,total\n"; }

std::string loss_csv_row(const LossRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%.17g,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.iteration, r.s, r.t, r.latent,
                r.image, r.source, r.region, r.total);
  return buf;
}

bool StagePlan::densify_after(int iteration) const {
  if (!is_stage2(iteration) || iteration + 1 >= total) return false;
  return (iteration - stage2_start + 1) % densify_interval == 0;
}

StagePlan make_stage_plan(const Hyperparameters& hp) {
  StagePlan p;
  p.total = hp.iterations;
  p.stage2_start = static_cast<int>(std::floor(hp.stage1_fraction * hp.iterations));
  p.densify_interval = hp.densify.interval;
  return p;
}

RateTable configure_learning_rates(const Hyperparameters& hp, bool stage2) {
  RateTable t;
  const auto& r = hp.rates;
  t.encoder = stage2 ? r.encoder_stage2 : r.encoder_stage1;
  t.decoder = r.decoder;
  t.embedding = r.embedding;
  t.source = r.source;
  if (stage2) {
    t.color = r.color;
    t.opacity = r.opacity;
    t.scale = r.scale;
    t.rotation = r.rotation;
    t.soft_multiplier = hp.soft_mu;
  }
  return t;
}

std::vector<int> camera_batch(std::uint64_t seed, int iteration, int camera_count, int batch_size) {
  if (camera_count < 1 || batch_size < 1) throw ConfigError("camera batch: need cameras and a positive batch size");
  const int b = std::min(batch_size, camera_count);
  const int per_epoch = (camera_count + b - 1) / b;
  const int epoch = iteration / per_epoch;
  const int slot = iteration % per_epoch;
  std::vector<int> perm(static_cast<std::size_t>(camera_count));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(mix(seed, static_cast<std::uint64_t>(epoch)));
  // Fisher-Yates with an explicit draw so the order does not depend on the
  // standard library's shuffle.
  for (int i = camera_count - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  std::vector<int> out;
  for (int k = slot * b; k < std::min((slot + 1) * b, camera_count); ++k) out.push_back(perm[static_cast<std::size_t>(k)]);
  for (int k = 0; static_cast<int>(out.size()) < b; ++k) {
    const int c = perm[static_cast<std::size_t>(k)];
    if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  }
  return out;
}

std::uint64_t noise_seed(std::uint64_t seed, int iteration, int camera) {
  return mix(mix(seed, static_cast<std::uint64_t>(iteration)), static_cast<std::uint64_t>(camera) + 0x1000);
}

EditRun::EditRun(GaussianScene scene, std::vector<Camera> cameras, EditSpec spec,
                 std::shared_ptr<const GuidanceOracle> oracle, int round)
    : spec_(std::move(spec)), cameras_(std::move(cameras)), oracle_(std::move(oracle)), round_(round),
      scene_(std::move(scene)) {
  validate(spec_);
  if (!oracle_) throw ConfigError("edit run needs a guidance oracle");
  if (cameras_.empty()) throw ConfigError("edit run needs at least one camera");
  for (const auto& c : cameras_) {
    validate(c);
    if (c.width != cameras_[0].width || c.height != cameras_[0].height)
      throw ConfigError("all training cameras must share one image size");
  }
  if (cameras_[0].width % LatentCodec::kFactor || cameras_[0].height % LatentCodec::kFactor)
    throw ConfigError("training image size must be a multiple of 8");
  if (scene_.empty()) throw ConfigError("cannot edit an empty scene");

  switch (spec_.mask.kind) {
    case MaskSource::Kind::Scene: break;
    case MaskSource::Kind::Flags:
      if (spec_.mask.flags.size() != scene_.size())
        throw ConfigError("mask flag count " + std::to_string(spec_.mask.flags.size()) + " does not match scene size " +
                          std::to_string(scene_.size()));
      scene_.mask() = spec_.mask.flags;
      break;
    case MaskSource::Kind::Frustum: scene_.mask() = select_mask_frustum(scene_, cameras_, spec_.mask.views); break;
  }
  if (partition(scene_).masked.empty()) throw EmptyMaskError("the edit mask selects no primitives");

  plan_ = make_stage_plan(spec_.hp);
  mirror_ = gsdrag::mirror(scene_);
  model_ = DeformationModel(spec_.hp.model, scene_.normalization_box(), mix(spec_.seed, 0x5eed));
  estimator_ = SourceEstimator(static_cast<int>(cameras_.size()), cameras_[0].height / LatentCodec::kFactor,
                               cameras_[0].width / LatentCodec::kFactor, 3);
  initialize_state();
  rebuild_groups();
}

void EditRun::initialize_state() {
  const std::size_t n = scene_.size();
  opt_color_.resize(3 * n);
  opt_opacity_.resize(n);
  opt_scale_.resize(3 * n);
  opt_rotation_.resize(4 * n);
  opt_planes_.resize(model_.field().parameters().size());
  opt_fusion_.resize(model_.fusion().parameters().size());
  opt_masked_.resize(model_.masked_decoder().parameters().size());
  opt_unmasked_.resize(model_.unmasked_decoder().parameters().size());
  opt_offsets_.resize(estimator_.offsets().size());
  opt_embedding_.resize(estimator_.embedding().size());
  grad_norm_sum_.assign(n, 0.0);
  grad_norm_count_.assign(n, 0);
  mirror_renders_.assign(cameras_.size(), std::nullopt);
  mirror_masks_.assign(cameras_.size(), std::nullopt);
}

void EditRun::rebuild_groups() {
  soft_group_ = build_soft_group(scene_, spec_.hp.soft_k);
  const auto part = partition(scene_);
  unmasked_ = part.unmasked;
  row_scale_.assign(scene_.size(), 0.0);
  for (std::size_t i : part.masked) row_scale_[i] = 1.0;
  for (std::size_t i : soft_group_) row_scale_[i] = spec_.hp.soft_mu;
}

const Image& EditRun::mirror_render(int camera) {
  auto& slot = mirror_renders_[static_cast<std::size_t>(camera)];
  if (!slot) {
    const std::vector<Vec3> zero(mirror_.size(), Vec3::Zero());
    slot = render(mirror_.scene(), zero, cameras_[static_cast<std::size_t>(camera)], render_settings_).rgb;
  }
  return *slot;
}

const Image& EditRun::mirror_mask(int camera) {
  auto& slot = mirror_masks_[static_cast<std::size_t>(camera)];
  if (!slot) {
    const Camera& cam = cameras_[static_cast<std::size_t>(camera)];
    const int radius = spec_.hp.dilation >= 0 ? spec_.hp.dilation : default_dilation_radius(cam.width);
    slot = dilate_mask(render_mask(mirror_, cam, 0.5, render_settings_), radius).to_image();
  }
  return *slot;
}

GaussianScene EditRun::deformed_scene() const {
  GaussianScene out = scene_;
  const auto d = shifts();
  for (std::size_t i = 0; i < d.size(); ++i) out.positions()[i] += d[i];
  return out;
}

std::string EditRun::history_csv() const {
  std::string out = loss_csv_header();
  for (const auto& r : history_) out += loss_csv_row(r);
  return out;
}

void EditRun::pause() {
  if (status_ == RunStatus::Running) {
    status_ = RunStatus::Paused;
    reason_ = "paused by request";
  }
}

void EditRun::resume() {
  if (status_ != RunStatus::Paused) throw StateError("only a paused run can be resumed");
  *pause_requested_ = false;
  status_ = RunStatus::Running;
  reason_.clear();
}

void EditRun::run(const std::function<void(const EditRun&)>& observer) {
  while (status_ == RunStatus::Running) {
    if (pause_requested_->exchange(false)) {
      pause();
      break;
    }
    step();
    if (observer) observer(*this);
  }
}

void EditRun::step() {
  if (status_ != RunStatus::Running) throw StateError("edit run is " + std::string(to_string(status_)));
  const auto& hp = spec_.hp;
  const auto& lam = hp.lambdas;
  const int it = iteration_;
  const double s = static_cast<double>(it) / plan_.total;
  const bool stage2 = plan_.is_stage2(it);
  const int t = schedule_.step_for(timestep_schedule(s));
  const double abar = schedule_.alpha_bar(t);
  const double omega = cfg_scale(s);
  const std::size_t n = scene_.size();

  DeformTape tape;
  const std::vector<Vec3> shifts = model_.deform(scene_, &tape);
  const std::vector<int> batch = camera_batch(spec_.seed, it, static_cast<int>(cameras_.size()), hp.batch_size);
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  RenderGradients scene_grads(n);
  SourceEstimatorGradients est_grads(estimator_);
  double l_lat = 0.0, l_img = 0.0, l_src = 0.0;

  for (int c : batch) {
    const Camera& cam = cameras_[static_cast<std::size_t>(c)];
    RenderTape rtape;
    const Image x = render(scene_, shifts, cam, render_settings_, &rtape).rgb;
    const Latent z = codec_.encode(x);

    GuidanceRequest req;
    req.camera = c;
    req.image = x;
    req.init_image = mirror_render(c);
    req.mask = mirror_mask(c);
    for (const auto& p : spec_.points) {
      ControlPair2D q;
      const auto h = try_project_point(cam, p.handle);
      const auto g = try_project_point(cam, p.target);
      if (h) q.handle = {h->u, h->v};
      if (g) q.target = {g->u, g->v};
      auto inside = [&](const std::optional<PixelProjection>& pp) {
        return pp && pp->u >= -0.5 && pp->u < cam.width - 0.5 && pp->v >= -0.5 && pp->v < cam.height - 0.5;
      };
      q.on_screen = inside(h) && inside(g);
      req.points.push_back(q);
    }
    req.step = t;
    req.alpha_bar = abar;
    req.noise = standard_normal(z.height, z.width, z.channels, noise_seed(spec_.seed, it, c));
    req.cfg = omega;
    req.epoch_ratio = s;
    req.seed = noise_seed(spec_.seed, it, c);

    GuidanceResponse res;
    try {
      res = oracle_->predict(req, estimator_);
      if (!res.eps_tgt.same_shape(z) || !res.eps_src.same_shape(z))
        throw GuidanceUnavailable("guidance returned a latent of the wrong shape");
    } catch (const GuidanceUnavailable& e) {
      status_ = RunStatus::Paused;
      reason_ = std::string("guidance unavailable: ") + e.what();
      return;
    }

    const Latent z_hat = guided_estimate(z, res.eps_tgt, res.eps_src, abar);
    // x_hat = x - D(z - z_hat): the decoded correction applied to the render,
    // so the codec's own reconstruction error does not enter the image term.
    Latent dz = z;
    for (std::size_t i = 0; i < dz.data.size(); ++i) dz.data[i] = z.data[i] - z_hat.data[i];
    const Image correction = codec_.decode(dz);
    Image x_hat = x;
    for (std::size_t i = 0; i < x_hat.data.size(); ++i) x_hat.data[i] = x.data[i] - correction.data[i];

    const DragSdsTerms terms = drag_sds_losses(z, x, z_hat, x_hat, abar, schedule_.weight(t));
    l_lat += terms.latent * inv_b;
    l_img += terms.image * inv_b;

    const Image d_lat = codec_.encode_adjoint(terms.grad_latent);
    Image d_x(x.height, x.width, x.channels);
    const double k = lam.drag_sds * inv_b;
    for (std::size_t i = 0; i < d_x.data.size(); ++i)
      d_x.data[i] = k * (lam.latent * d_lat.data[i] + lam.image * terms.grad_image.data[i]);
    scene_grads += render_backward(rtape, scene_, shifts, cam, d_x);

    SourceEstimatorGradients g(estimator_);
    l_src += source_estimator_loss_clean(estimator_, c, z, abar, &g) * inv_b;
    const double ks = lam.drag_sds * lam.source * inv_b;
    for (std::size_t i = 0; i < g.offsets.size(); ++i) est_grads.offsets[i] += ks * g.offsets[i];
    for (std::size_t i = 0; i < g.embedding.size(); ++i) est_grads.embedding[i] += ks * g.embedding[i];
  }

  std::vector<Vec3> unmasked_shifts;
  unmasked_shifts.reserve(unmasked_.size());
  for (std::size_t i : unmasked_) unmasked_shifts.push_back(shifts[i]);
  const double l_rr = region_reg_loss(unmasked_shifts);
  const auto rr_grad = region_reg_gradient(unmasked_shifts);
  std::vector<Vec3> d_shift = scene_grads.shift;
  for (std::size_t r = 0; r < unmasked_.size(); ++r) d_shift[unmasked_[r]] += lam.region * rr_grad[r];

  const double total = lam.drag_sds * (lam.latent * l_lat + lam.image * l_img + lam.source * l_src) + lam.region * l_rr;
  if (!std::isfinite(total) || !all_finite(d_shift)) {
    status_ = RunStatus::Failed;
    reason_ = "non-finite loss at iteration " + std::to_string(it);
    return;
  }

  ModelGradients mgrads = model_.zero_gradients();
  model_.backward(tape, d_shift, mgrads);

  const RateTable rates = configure_learning_rates(hp, stage2);
  opt_planes_.step(model_.field().parameters(), mgrads.planes, rates.encoder);
  opt_fusion_.step(model_.fusion().parameters(), mgrads.fusion, rates.encoder);
  opt_masked_.step(model_.masked_decoder().parameters(), mgrads.masked_decoder, rates.decoder);
  opt_unmasked_.step(model_.unmasked_decoder().parameters(), mgrads.unmasked_decoder, rates.decoder);
  opt_offsets_.step(estimator_.offsets(), est_grads.offsets, rates.source);
  opt_embedding_.step(estimator_.embedding(), est_grads.embedding, rates.embedding);

  if (stage2) {
    opt_color_.step(flat(scene_.colors()), flat(scene_grads.color), rates.color, row_scale_, 3);
    opt_opacity_.step(scene_.opacity_logits(), scene_grads.opacity_logit, rates.opacity, row_scale_, 1);
    opt_scale_.step(flat(scene_.log_scales()), flat(scene_grads.log_scale), rates.scale, row_scale_, 3);
    opt_rotation_.step(flat(scene_.rotations()), flat(scene_grads.rotation), rates.rotation, row_scale_, 4);
    for (std::size_t i = 0; i < n; ++i) {
      if (row_scale_[i] == 0.0) continue;
      scene_.colors()[i] = scene_.colors()[i].cwiseMax(0.0).cwiseMin(1.0);
      scene_.rotations()[i] /= scene_.rotations()[i].norm();
    }
    // The densify threshold is meant for the gradient of an unweighted
    // per-element mean loss; ours is a sum over latent elements carrying the
    // sqrt(abar)/sqrt(1 - abar) weight.
    const double unweight = std::sqrt((1.0 - abar) / abar) / static_cast<double>(estimator_.offset_size());
    for (std::size_t i = 0; i < n; ++i) {
      if (!scene_.mask()[i]) continue;
      const double g = d_shift[i].norm() * unweight;
      if (g > 0.0) {
        grad_norm_sum_[i] += g;
        ++grad_norm_count_[i];
      }
    }
  }

  history_.push_back({it, s, t, l_lat, l_img, l_src, l_rr, total});
  ++iteration_;
  if (stage2 && plan_.densify_after(it)) densify();
  if (iteration_ >= plan_.total) status_ = RunStatus::Done;
}

void EditRun::densify() {
  const std::size_t n = scene_.size();
  std::vector<double> mean(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    if (grad_norm_count_[i] > 0) mean[i] = grad_norm_sum_[i] / grad_norm_count_[i];
  const double extent = mirror_.scene().bounds().extent().maxCoeff();
  DensifyReport report = densify_and_prune(scene_, mean, scene_.mask(), extent, spec_.hp.densify);

  if (report.changed()) {
    const std::size_t survivors = report.origin.size() - report.created.size();
    auto keep = std::make_unique<bool[]>(n);
    std::fill_n(keep.get(), n, false);
    for (std::size_t k = 0; k < survivors; ++k) keep[report.origin[k]] = true;
    const std::span<const bool> flags(keep.get(), n);
    for (auto* opt : {&opt_color_, &opt_scale_}) {
      opt->retain_rows(flags, 3);
      opt->resize(3 * scene_.size());
    }
    opt_opacity_.retain_rows(flags, 1);
    opt_opacity_.resize(scene_.size());
    opt_rotation_.retain_rows(flags, 4);
    opt_rotation_.resize(4 * scene_.size());
  }
  grad_norm_sum_.assign(scene_.size(), 0.0);
  grad_norm_count_.assign(scene_.size(), 0);
  densify_log_.push_back(std::move(report));
  rebuild_groups();
}

void EditRun::write(std::ostream& out) const {
  bin::write_magic(out, kRunMagic, kRunVersion);
  bin::write_string(out, edit_spec_to_json(spec_).dump());
  bin::write_string(out, cameras_to_json(cameras_).dump());
  bin::write_i64(out, round_);
  bin::write_i64(out, iteration_);
  bin::write_i64(out, static_cast<int>(status_));
  bin::write_string(out, reason_);
  write_scene_exact(out, scene_);
  write_scene_exact(out, mirror_.scene());
  model_.write(out);
  estimator_.write(out);
  for (const Adam* a : {&opt_color_, &opt_opacity_, &opt_scale_, &opt_rotation_, &opt_planes_, &opt_fusion_,
                        &opt_masked_, &opt_unmasked_, &opt_offsets_, &opt_embedding_})
    a->write(out);
  bin::write_f64s(out, grad_norm_sum_);
  bin::write_u64(out, grad_norm_count_.size());
  for (int c : grad_norm_count_) bin::write_i64(out, c);
  bin::write_u64(out, history_.size());
  for (const auto& r : history_) {
    bin::write_i64(out, r.iteration);
    bin::write_f64(out, r.s);
    bin::write_i64(out, r.t);
    for (double v : {r.latent, r.image, r.source, r.region, r.total}) bin::write_f64(out, v);
  }
  bin::write_u64(out, densify_log_.size());
  for (const auto& d : densify_log_) {
    bin::write_u64(out, d.before);
    bin::write_u64(out, d.after);
    for (const auto* v : {&d.cloned, &d.split, &d.pruned, &d.created, &d.origin}) {
      bin::write_u64(out, v->size());
      for (auto x : *v) bin::write_u64(out, x);
    }
  }
}

void EditRun::read(std::istream& in) {
  bin::read_magic(in, kRunMagic, kRunVersion);
  try {
    spec_ = edit_spec_from_json(nlohmann::json::parse(bin::read_string(in)));
    cameras_ = cameras_from_json(nlohmann::json::parse(bin::read_string(in)));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("run checkpoint: ") + e.what());
  }
  plan_ = make_stage_plan(spec_.hp);
  round_ = static_cast<int>(bin::read_i64(in));
  iteration_ = static_cast<int>(bin::read_i64(in));
  const auto status = bin::read_i64(in);
  if (status < 0 || status > 3) throw FormatError("run checkpoint: bad status");
  status_ = static_cast<RunStatus>(status);
  reason_ = bin::read_string(in);
  scene_ = read_scene_exact(in);
  mirror_ = MirroredScene(read_scene_exact(in));
  model_ = DeformationModel::read(in);
  estimator_ = SourceEstimator::read(in);
  for (Adam* a : {&opt_color_, &opt_opacity_, &opt_scale_, &opt_rotation_, &opt_planes_, &opt_fusion_, &opt_masked_,
                  &opt_unmasked_, &opt_offsets_, &opt_embedding_})
    *a = Adam::read(in);
  grad_norm_sum_ = bin::read_f64s(in);
  grad_norm_count_.resize(bin::read_u64(in));
  for (int& c : grad_norm_count_) c = static_cast<int>(bin::read_i64(in));
  history_.resize(bin::read_u64(in));
  for (auto& r : history_) {
    r.iteration = static_cast<int>(bin::read_i64(in));
    r.s = bin::read_f64(in);
    r.t = static_cast<int>(bin::read_i64(in));
    for (double* v : {&r.latent, &r.image, &r.source, &r.region, &r.total}) *v = bin::read_f64(in);
  }
  densify_log_.resize(bin::read_u64(in));
  for (auto& d : densify_log_) {
    d.before = bin::read_u64(in);
    d.after = bin::read_u64(in);
    for (auto* v : {&d.cloned, &d.split, &d.pruned, &d.created, &d.origin}) {
      v->resize(bin::read_u64(in));
      for (auto& x : *v) x = bin::read_u64(in);
    }
  }
  const std::size_t n = scene_.size();
  if (grad_norm_sum_.size() != n || grad_norm_count_.size() != n || opt_color_.size() != 3 * n ||
      opt_opacity_.size() != n || opt_scale_.size() != 3 * n || opt_rotation_.size() != 4 * n ||
      iteration_ < 0 || iteration_ > plan_.total)
    throw FormatError("run checkpoint: inconsistent state");
  mirror_renders_.assign(cameras_.size(), std::nullopt);
  mirror_masks_.assign(cameras_.size(), std::nullopt);
  rebuild_groups();
}

void EditRun::save_checkpoint(const std::filesystem::path& path) const {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp);
    write(out);
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

EditRun EditRun::load_checkpoint(const std::filesystem::path& path, std::shared_ptr<const GuidanceOracle> oracle) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  EditRun run;
  run.read(in);
  run.oracle_ = std::move(oracle);
  return run;
}

EditMetrics edit_metrics(const EditRun& run) {
  EditMetrics m;
  const std::vector<Vec3> shifts = run.shifts();
  const auto& mask = run.scene().mask();
  m.primitives = shifts.size();
  double unmasked = 0.0;
  for (std::size_t i = 0; i < shifts.size(); ++i) {
    if (mask[i]) {
      m.masked_mean_shift += shifts[i];
      ++m.masked;
    } else {
      unmasked += shifts[i].norm();
    }
  }
  if (m.masked) m.masked_mean_shift /= static_cast<double>(m.masked);
  if (m.primitives > m.masked) m.unmasked_mean_displacement = unmasked / static_cast<double>(m.primitives - m.masked);
  return m;
}

GaussianScene commit(const EditRun& run) {
  if (run.status() != RunStatus::Done) throw StateError("only a finished run can be committed");
  return run.deformed_scene();
}

EditRun start_round(const EditRun& previous, EditSpec spec, std::shared_ptr<const GuidanceOracle> oracle) {
  return EditRun(commit(previous), previous.cameras(), std::move(spec), std::move(oracle), previous.round() + 1);
}

}  // namespace gsdrag
