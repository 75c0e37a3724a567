#include "run_config.hpp"

#include <fstream>

namespace gsdrag::cli {

namespace fs = std::filesystem;
using nlohmann::json;

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(path.string() + ": config must be a JSON object");
  const fs::path base = path.parent_path();
  RunConfig c;
  for (const auto& [key, value] : j.items()) {
    auto text = [&, &key = key, &value = value](bool is_path) {
      if (!value.is_string()) throw ConfigError(path.string() + ": '" + key + "' must be a string");
      std::string s = value.get<std::string>();
      if (is_path && !s.empty() && fs::path(s).is_relative()) s = (base / s).lexically_normal().string();
      return s;
    };
    if (key == "scene") c.scene = text(true);
    else if (key == "cameras") c.cameras = text(true);
    else if (key == "spec") c.spec = text(true);
    else if (key == "out") c.out = text(true);
    else if (key == "resume") c.resume = text(true);
    else if (key == "guidance") {
      c.guidance = text(false);
      const std::string prefix = "synthetic:";
      if (c.guidance.rfind(prefix, 0) == 0 && fs::path(c.guidance.substr(prefix.size())).is_relative())
        c.guidance = prefix + (base / c.guidance.substr(prefix.size())).lexically_normal().string();
    } else if (key == "seed") {
      if (!value.is_number_unsigned()) throw ConfigError(path.string() + ": seed must be a non-negative integer");
      c.seed = value.get<std::uint64_t>();
    } else if (key == "overrides") {
      if (!value.is_object()) throw ConfigError(path.string() + ": overrides must be an object");
      c.overrides = value;
    } else {
      throw ConfigError(path.string() + ": unknown key '" + key + "'");
    }
  }
  return c;
}

RunConfig layer(const RunConfig& file, const RunConfig& flags) {
  RunConfig c = file;
  for (auto [dst, src] : {std::pair{&c.scene, &flags.scene}, {&c.cameras, &flags.cameras}, {&c.spec, &flags.spec},
                          {&c.out, &flags.out}, {&c.guidance, &flags.guidance}, {&c.resume, &flags.resume}})
    if (!src->empty()) *dst = *src;
  if (flags.seed) c.seed = flags.seed;
  c.overrides.merge_patch(flags.overrides);
  return c;
}

EditSpec resolve_edit_spec(const RunConfig& cfg) {
  EditSpec spec;
  if (!cfg.spec.empty()) spec = load_edit_spec(cfg.spec);
  merge_edit_spec(spec, cfg.overrides);
  if (cfg.seed) spec.seed = *cfg.seed;
  return spec;
}

void HyperparameterFlags::attach(CLI::App& app) {
  struct Def {
    const char* flag;
    const char* pointer;
    bool integer;
    const char* help;
  };
  static const Def defs[] = {
      {"--iters", "/iterations", true, "total iterations (1200)"},
      {"--stage1-fraction", "/stage1_fraction", false, "fraction of iterations in stage 1 (0.36)"},
      {"--batch-size", "/batch_size", true, "cameras per iteration (4)"},
      {"--lambda-lat", "/lambdas/lat", false, "latent loss weight (1)"},
      {"--lambda-img", "/lambdas/img", false, "image loss weight (0.1)"},
      {"--lambda-lora", "/lambdas/lora", false, "source estimator loss weight (1)"},
      {"--lambda-dsds", "/lambdas/dsds", false, "drag score distillation weight (1)"},
      {"--lambda-rr", "/lambdas/rr", false, "region regularization weight (2500)"},
      {"--lr-color", "/learning_rates/color", false, "color rate (2.5e-3)"},
      {"--lr-opacity", "/learning_rates/opacity", false, "opacity rate (2.5e-3)"},
      {"--lr-scale", "/learning_rates/scale", false, "scale rate (2.5e-4)"},
      {"--lr-rotation", "/learning_rates/rotation", false, "rotation rate (2.5e-3)"},
      {"--lr-mtp-stage1", "/learning_rates/mtp_stage1", false, "encoder rate in stage 1 (1e-3)"},
      {"--lr-mtp-stage2", "/learning_rates/mtp_stage2", false, "encoder rate in stage 2 (1e-4)"},
      {"--lr-rsp", "/learning_rates/rsp", false, "shift decoder rate (5e-4)"},
      {"--lr-embedding", "/learning_rates/embedding", false, "source embedding rate (1e-3)"},
      {"--lr-source", "/learning_rates/source", false, "source estimator rate (5e-4)"},
      {"--soft-k", "/soft_k", true, "neighbors per masked primitive in the soft group (16)"},
      {"--soft-mu", "/soft_mu", false, "soft group rate multiplier (0.1)"},
      {"--densify-grad", "/densify/grad_threshold", false, "densify gradient threshold (2e-4)"},
      {"--densify-opacity", "/densify/min_opacity", false, "prune opacity threshold (0.05)"},
      {"--densify-interval", "/densify/interval", true, "stage-2 iterations between densify events (100)"},
      {"--split-factor", "/densify/split_factor", false, "scale divisor for split children (1.6)"},
      {"--dense-extent", "/densify/dense_extent", false, "clone/split size cut, fraction of scene extent (0.01)"},
      {"--dilation", "/dilation", true, "mask dilation radius in px (-1: 10 px per 512 px)"},
      {"--feature-dim", "/model/feature_dim", true, "triplane feature channels (16)"},
      {"--hidden-width", "/model/hidden_width", true, "encoder and decoder width (64)"},
      {"--plane-init", "/model/plane_init", false, "triplane init half-range (1e-4)"},
  };
  flags_.reserve(std::size(defs));
  for (const auto& d : defs) {
    flags_.push_back({d.pointer, d.integer, nullptr, 0.0});
    flags_.back().option = app.add_option(d.flag, flags_.back().value, d.help)->group("Hyperparameters");
    if (d.integer) flags_.back().option->type_name("INT");
  }
  resolutions_option_ = app.add_option("--triplane-res", resolutions_, "triplane resolutions (32 64 128)")
                            ->group("Hyperparameters")
                            ->expected(1, 8);
}

json HyperparameterFlags::collect() const {
  json out = json::object();
  for (const auto& f : flags_) {
    if (!f.option->count()) continue;
    const json::json_pointer p(f.pointer);
    if (f.integer) {
      if (f.value != std::floor(f.value)) throw ConfigError(f.option->get_name() + " needs an integer");
      out[p] = static_cast<long long>(f.value);
    } else {
      out[p] = f.value;
    }
  }
  if (resolutions_option_->count()) out["model"]["resolutions"] = resolutions_;
  return out;
}

}  // namespace gsdrag::cli
