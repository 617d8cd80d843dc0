#ifndef OCT4D_CONFIG_HPP
#define OCT4D_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "oct4d/acquisition.hpp"
#include "oct4d/model.hpp"
#include "oct4d/robustness.hpp"
#include "oct4d/train.hpp"

namespace oct4d {

// Evaluation sweep lists for the robustness command.
struct EvalConfig {
  std::vector<double> rotate_deg = {2, 5, 10, 20};
  std::vector<RotationMode> rotate_modes = {RotationMode::Noise, RotationMode::Motion};
  std::vector<double> distort_pct = {10, 25, 50};
  int distort_shift_px = 1;
  int magnitude_groups = 0;
};

// Whole-run configuration: a JSON file with four command-scoped sections
// (acquisition, model, training, evaluation), every field optional and
// defaulted. Unknown keys anywhere are rejected.
struct RunConfig {
  AcquisitionConfig acquisition;
  ModelSpec model;
  TrainConfig training;
  EvalConfig evaluation;

  // Hash of the canonical serialized form; embedded in emitted artifacts.
  uint64_t hash() const;
  std::string to_json() const;
};

RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);
void write_run_config(const std::string& path, const RunConfig& cfg);

}  // namespace oct4d

#endif
