#include "oct4d/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "oct4d/common.hpp"
#include "oct4d/report_io.hpp"

namespace oct4d {
namespace {

using nlohmann::json;

// Pulls known keys out of a section and rejects anything left over.
class SectionReader {
 public:
  SectionReader(json j, std::string name) : j_(std::move(j)), name_(std::move(name)) {}

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (j_.contains(key)) {
      try {
        out = j_.at(key).get<T>();
      } catch (const json::exception& e) {
        throw ConfigError(format_msg("config key ", name_, ".", key, ": ", e.what()));
      }
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw ConfigError(format_msg("unknown config key '", name_, ".", it.key(), "'"));
  }

 private:
  json j_;
  std::string name_;
  std::set<std::string> seen_;
};

json section(const json& root, const char* key) {
  if (!root.contains(key)) return json::object();
  if (!root.at(key).is_object())
    throw ConfigError(format_msg("config section '", key, "' must be an object"));
  return root.at(key);
}

std::vector<RotationMode> parse_modes(const std::vector<std::string>& names) {
  std::vector<RotationMode> modes;
  for (const auto& n : names) {
    if (n == "noise")
      modes.push_back(RotationMode::Noise);
    else if (n == "motion")
      modes.push_back(RotationMode::Motion);
    else
      throw ConfigError(format_msg("unknown rotation mode '", n, "' (noise|motion)"));
  }
  return modes;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(format_msg("config is not valid JSON: ", e.what()));
  }
  if (!root.is_object()) throw ConfigError("config root must be a JSON object");
  for (auto it = root.begin(); it != root.end(); ++it) {
    std::string k = it.key();
    if (k != "acquisition" && k != "model" && k != "training" && k != "evaluation")
      throw ConfigError(format_msg("unknown config section '", k, "'"));
  }

  RunConfig cfg;

  {
    SectionReader r(section(root, "acquisition"), "acquisition");
    r.get("n_rois", cfg.acquisition.n_rois);
    r.get("patterns_per_roi", cfg.acquisition.patterns_per_roi);
    r.get("magnitude_range_mm", cfg.acquisition.magnitude_range_mm);
    r.get("shift_bounds_mm", cfg.acquisition.shift_bounds_mm);
    r.get("sensor_noise_sigma", cfg.acquisition.sensor_noise_sigma);
    r.get("voxel_pitch_mm", cfg.acquisition.voxel_pitch_mm);
    r.get("volume_size", cfg.acquisition.volume_size);
    r.get("master_seed", cfg.acquisition.master_seed);
    r.get("phantom_size", cfg.acquisition.phantom_size);
    r.get("quantize_u8", cfg.acquisition.quantize_u8);
    r.finish();
  }
  {
    SectionReader r(section(root, "model"), "model");
    std::string variant = variant_name(cfg.model.variant);
    r.get("variant", variant);
    cfg.model.variant = variant_from_name(variant);
    r.get("growth_rate", cfg.model.growth_rate);
    r.get("dense_blocks", cfg.model.dense_blocks);
    r.get("layers_per_block", cfg.model.layers_per_block);
    r.get("stem_channels", cfg.model.stem_channels);
    r.get("spatial_kernel", cfg.model.spatial_kernel);
    r.get("temporal_kernel", cfg.model.temporal_kernel);
    r.get("regularized_head", cfg.model.regularized_head);
    r.get("volume_size", cfg.model.volume_size);
    r.finish();
  }
  {
    SectionReader r(section(root, "training"), "training");
    r.get("epochs", cfg.training.epochs);
    r.get("batch_size", cfg.training.batch_size);
    r.get("lr", cfg.training.adam.lr);
    r.get("beta1", cfg.training.adam.beta1);
    r.get("beta2", cfg.training.adam.beta2);
    r.get("adam_eps", cfg.training.adam.eps);
    r.get("w1", cfg.training.weights.w1);
    r.get("w2", cfg.training.weights.w2);
    r.get("seed", cfg.training.seed);
    r.get("micro_batch", cfg.training.micro_batch);
    r.get("checkpoint_every", cfg.training.checkpoint_every);
    r.get("train_distort_p", cfg.training.train_distort_p);
    r.get("train_distort_shift", cfg.training.train_distort_shift);
    r.get("train_rois", cfg.training.split.train_rois);
    r.get("val_rois", cfg.training.split.val_rois);
    r.get("test_rois", cfg.training.split.test_rois);
    r.finish();
  }
  {
    SectionReader r(section(root, "evaluation"), "evaluation");
    r.get("rotate_deg", cfg.evaluation.rotate_deg);
    std::vector<std::string> modes = {"noise", "motion"};
    r.get("rotate_modes", modes);
    cfg.evaluation.rotate_modes = parse_modes(modes);
    r.get("distort_pct", cfg.evaluation.distort_pct);
    r.get("distort_shift_px", cfg.evaluation.distort_shift_px);
    r.get("magnitude_groups", cfg.evaluation.magnitude_groups);
    r.finish();
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(format_msg("cannot open config file ", path));
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

std::string RunConfig::to_json() const {
  json root;
  auto& a = root["acquisition"];
  a["n_rois"] = acquisition.n_rois;
  a["patterns_per_roi"] = acquisition.patterns_per_roi;
  a["magnitude_range_mm"] = acquisition.magnitude_range_mm;
  a["shift_bounds_mm"] = acquisition.shift_bounds_mm;
  a["sensor_noise_sigma"] = acquisition.sensor_noise_sigma;
  a["voxel_pitch_mm"] = acquisition.voxel_pitch_mm;
  a["volume_size"] = acquisition.volume_size;
  a["master_seed"] = acquisition.master_seed;
  a["phantom_size"] = acquisition.phantom_size;
  a["quantize_u8"] = acquisition.quantize_u8;

  auto& m = root["model"];
  m["variant"] = variant_name(model.variant);
  m["growth_rate"] = model.growth_rate;
  m["dense_blocks"] = model.dense_blocks;
  m["layers_per_block"] = model.layers_per_block;
  m["stem_channels"] = model.stem_channels;
  m["spatial_kernel"] = model.spatial_kernel;
  m["temporal_kernel"] = model.temporal_kernel;
  m["regularized_head"] = model.regularized_head;
  m["volume_size"] = model.volume_size;

  auto& t = root["training"];
  t["epochs"] = training.epochs;
  t["batch_size"] = training.batch_size;
  t["lr"] = training.adam.lr;
  t["beta1"] = training.adam.beta1;
  t["beta2"] = training.adam.beta2;
  t["adam_eps"] = training.adam.eps;
  t["w1"] = training.weights.w1;
  t["w2"] = training.weights.w2;
  t["seed"] = training.seed;
  t["micro_batch"] = training.micro_batch;
  t["checkpoint_every"] = training.checkpoint_every;
  t["train_distort_p"] = training.train_distort_p;
  t["train_distort_shift"] = training.train_distort_shift;
  t["train_rois"] = training.split.train_rois;
  t["val_rois"] = training.split.val_rois;
  t["test_rois"] = training.split.test_rois;

  auto& e = root["evaluation"];
  e["rotate_deg"] = evaluation.rotate_deg;
  std::vector<std::string> modes;
  for (auto mo : evaluation.rotate_modes) modes.push_back(rotation_mode_name(mo));
  e["rotate_modes"] = modes;
  e["distort_pct"] = evaluation.distort_pct;
  e["distort_shift_px"] = evaluation.distort_shift_px;
  e["magnitude_groups"] = evaluation.magnitude_groups;

  return root.dump(2) + "\n";
}

uint64_t RunConfig::hash() const {
  std::string s = to_json();
  return fnv1a64(s.data(), s.size());
}

void write_run_config(const std::string& path, const RunConfig& cfg) {
  write_text_atomic(path, cfg.to_json());
}

}  // namespace oct4d
