#ifndef OCT4D_ROBUSTNESS_HPP
#define OCT4D_ROBUSTNESS_HPP

#include <string>
#include <vector>

#include "oct4d/metrics.hpp"
#include "oct4d/model.hpp"

namespace oct4d {

enum class RotationMode { Noise, Motion };

inline const char* rotation_mode_name(RotationMode m) {
  return m == RotationMode::Noise ? "noise" : "motion";
}

struct RotationSweepRow {
  double alpha_max_deg = 0;
  RotationMode mode = RotationMode::Noise;
  MetricsReport report;
};

// Evaluation-time rotation sweep: one report per (alpha, mode). Noise mode
// rotates only the volumes; motion mode also rotates the lateral target
// components.
std::vector<RotationSweepRow> eval_rotation_robustness(const Model& model,
                                                       const std::vector<const MotionSample*>& samples,
                                                       const std::vector<double>& alphas_deg,
                                                       const std::vector<RotationMode>& modes,
                                                       int batch_size = 50);

struct DistortionSweepRow {
  double p_dist = 0;
  int shift_px = 1;
  MetricsReport report;
};

// Evaluation-time B-scan distortion sweep; the seed fixes the per-sample
// distortion streams so repeated sweeps are identical.
std::vector<DistortionSweepRow> eval_distortion_robustness(const Model& model,
                                                           const std::vector<const MotionSample*>& samples,
                                                           const std::vector<double>& p_list,
                                                           int shift_px, uint64_t seed,
                                                           int batch_size = 50);

struct BenchResult {
  std::string model_id;
  int64_t params = 0;
  double mean_ms = 0;
  double std_ms = 0;
  double hz = 0;
};

// Wall-clock single-sequence forward latency after warmup.
BenchResult bench_inference(const Model& model, int reps = 50, int warmup = 5);

}  // namespace oct4d

#endif
