#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gsdrag/adam.hpp"
#include "gsdrag/camera.hpp"
#include "gsdrag/codec.hpp"
#include "gsdrag/densify.hpp"
#include "gsdrag/edit_spec.hpp"
#include "gsdrag/guidance.hpp"
#include "gsdrag/render.hpp"
#include "gsdrag/schedule.hpp"
#include "gsdrag/triplane.hpp"

namespace gsdrag {

enum class RunStatus { Running, Paused, Done, Failed };
std::string_view to_string(RunStatus status);

struct LossRecord {
  int iteration = 0;
  double s = 0.0;
  int t = 0;
  double latent = 0.0;
  double image = 0.0;
  double source = 0.0;
  double region = 0.0;
  double total = 0.0;
  bool operator==(const LossRecord&) const = default;
};

std::string loss_csv_header();
std::string loss_csv_row(const LossRecord& r);

struct StagePlan {
  int total = 0;
  /// First stage-2 iteration: floor(stage1_fraction * total).
  int stage2_start = 0;
  int densify_interval = 100;

  bool is_stage2(int iteration) const { return iteration >= stage2_start; }
  /// True after the stage-2 iteration that completes a densify interval
  /// (never after the final iteration).
  bool densify_after(int iteration) const;
};
StagePlan make_stage_plan(const Hyperparameters& hp);

struct RateTable {
  double color = 0.0, opacity = 0.0, scale = 0.0, rotation = 0.0;
  double encoder = 0.0, decoder = 0.0, embedding = 0.0, source = 0.0;
  /// Multiplier for soft-group primitives; masked use 1, the rest 0.
  double soft_multiplier = 0.0;
};
RateTable configure_learning_rates(const Hyperparameters& hp, bool stage2);

/// Cameras for one iteration: consecutive slices of a per-epoch permutation
/// seeded by (seed, epoch). A short final slice is topped up from the start
/// of the same permutation. Pure function of its arguments.
std::vector<int> camera_batch(std::uint64_t seed, int iteration, int camera_count, int batch_size);
std::uint64_t noise_seed(std::uint64_t seed, int iteration, int camera);

/// One edit: the scene being optimized, its frozen mirror, the deformation
/// model, the source estimator and all optimizer state.
///
/// Not thread-safe except request_pause(), which may be called from any
/// thread while run() executes.
class EditRun {
 public:
  EditRun(GaussianScene scene, std::vector<Camera> cameras, EditSpec spec,
          std::shared_ptr<const GuidanceOracle> oracle, int round = 0);

  const EditSpec& spec() const { return spec_; }
  const StagePlan& plan() const { return plan_; }
  const std::vector<Camera>& cameras() const { return cameras_; }
  int round() const { return round_; }
  int iteration() const { return iteration_; }
  double epoch_ratio() const { return static_cast<double>(iteration_) / plan_.total; }
  RunStatus status() const { return status_; }
  const std::string& status_reason() const { return reason_; }

  const GaussianScene& scene() const { return scene_; }
  const MirroredScene& mirror() const { return mirror_; }
  const DeformationModel& model() const { return model_; }
  const SourceEstimator& estimator() const { return estimator_; }
  const std::vector<std::size_t>& soft_group() const { return soft_group_; }
  const std::vector<LossRecord>& history() const { return history_; }
  const std::vector<DensifyReport>& densify_log() const { return densify_log_; }
  std::string history_csv() const;

  /// Current shifts from the model.
  std::vector<Vec3> shifts() const { return model_.deform(scene_); }
  /// The scene with shifts folded into positions.
  GaussianScene deformed_scene() const;

  /// Runs one iteration. A guidance failure pauses the run without advancing
  /// it; a non-finite loss fails it. Throws StateError unless running.
  void step();
  /// Steps until done, paused or failed. `observer` runs after every
  /// iteration.
  void run(const std::function<void(const EditRun&)>& observer = {});
  void request_pause() { *pause_requested_ = true; }
  void pause();
  void resume();

  void save_checkpoint(const std::filesystem::path& path) const;
  static EditRun load_checkpoint(const std::filesystem::path& path, std::shared_ptr<const GuidanceOracle> oracle);

  void set_oracle(std::shared_ptr<const GuidanceOracle> oracle) { oracle_ = std::move(oracle); }

 private:
  EditRun() = default;
  void initialize_state();
  void rebuild_groups();
  const Image& mirror_render(int camera);
  const Image& mirror_mask(int camera);
  void densify();
  void write(std::ostream& out) const;
  void read(std::istream& in);

  EditSpec spec_;
  StagePlan plan_;
  std::vector<Camera> cameras_;
  std::shared_ptr<const GuidanceOracle> oracle_;
  int round_ = 0;
  int iteration_ = 0;
  RunStatus status_ = RunStatus::Running;
  std::string reason_;
  std::unique_ptr<std::atomic<bool>> pause_requested_ = std::make_unique<std::atomic<bool>>(false);

  GaussianScene scene_;
  MirroredScene mirror_;
  DeformationModel model_;
  SourceEstimator estimator_;
  DiffusionSchedule schedule_;
  LatentCodec codec_;
  RenderSettings render_settings_;

  std::vector<std::size_t> soft_group_;
  std::vector<double> row_scale_;
  std::vector<std::size_t> unmasked_;

  Adam opt_color_, opt_opacity_, opt_scale_, opt_rotation_;
  Adam opt_planes_{1e-15}, opt_fusion_{1e-15}, opt_masked_{1e-15}, opt_unmasked_{1e-15};
  Adam opt_offsets_, opt_embedding_;

  std::vector<double> grad_norm_sum_;
  std::vector<int> grad_norm_count_;
  std::vector<LossRecord> history_;
  std::vector<DensifyReport> densify_log_;

  std::vector<std::optional<Image>> mirror_renders_;
  std::vector<std::optional<Image>> mirror_masks_;
};

/// Displacement summary of a run's current shifts.
struct EditMetrics {
  std::size_t primitives = 0;
  std::size_t masked = 0;
  /// Mean shift of the masked primitives.
  Vec3 masked_mean_shift = Vec3::Zero();
  /// Mean shift length of the unmasked primitives.
  double unmasked_mean_displacement = 0.0;
};
EditMetrics edit_metrics(const EditRun& run);

/// The finished run's scene with its shifts folded into positions. Throws
/// StateError unless the run is done.
GaussianScene commit(const EditRun& run);
/// Next round on the committed result of `previous`, with a fresh model and
/// a newly captured mirror.
EditRun start_round(const EditRun& previous, EditSpec spec, std::shared_ptr<const GuidanceOracle> oracle);

}  // namespace gsdrag
