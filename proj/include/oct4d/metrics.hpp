#ifndef OCT4D_METRICS_HPP
#define OCT4D_METRICS_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "oct4d/acquisition.hpp"
#include "oct4d/model.hpp"

namespace oct4d {

struct AxisStat {
  double mean = 0;
  double stddev = 0;
};

// Evaluation battery over one sample set: per-axis MAE in mm, relative MAE
// (per-axis MAE over the targets' per-axis standard deviation; mean/std
// taken over per-sample relative absolute errors), and aCC = mean over the
// three axes of the Pearson correlation between predicted and true shifts.
struct MetricsReport {
  std::array<AxisStat, 3> mae_mm;
  AxisStat rmae;
  double acc = 0;                        // in [-1,1]; NaN when undefined
  std::array<bool, 3> axis_defined = {true, true, true};  // target variance > 0
  int64_t sample_count = 0;
  std::string model_id;
  std::string config_hash;

  // optional per-magnitude-group breakdown (equal-population groups of
  // ||final shift||)
  std::vector<double> group_mae;
  std::vector<int64_t> group_sizes;
  std::vector<double> group_mean_magnitude;
  bool degenerate_groups = false;
};

// Raw predictions for one sample set, batched forwards without gradients.
// Only the first three outputs (the final-shift prediction) are used when
// the head is regularized.
struct EvalArrays {
  std::vector<std::array<double, 3>> pred;
  std::vector<std::array<double, 3>> target;
  std::vector<double> magnitude;  // ||target t4||
};

EvalArrays run_inference(const Model& model, const std::vector<const MotionSample*>& samples,
                         int batch_size = 50);

// Computes the report from predictions; magnitude_groups > 0 adds the
// per-group MAE table. Needs >= 2 samples (correlations are undefined
// otherwise).
MetricsReport compute_metrics(const EvalArrays& arrays, int magnitude_groups = 0);

MetricsReport evaluate(const Model& model, const std::vector<const MotionSample*>& samples,
                       int batch_size = 50, int magnitude_groups = 0);

// Equal-population grouping by final-shift magnitude (sort and split;
// sizes differ by at most one). All-equal magnitudes degenerate to one
// group, flagged.
struct MagnitudeGroups {
  std::vector<int> label;           // per sample
  std::vector<int64_t> sizes;
  std::vector<double> mean_magnitude;
  bool degenerate = false;
};

MagnitudeGroups group_by_magnitude(const std::vector<double>& magnitudes, int k);

std::vector<const MotionSample*> sample_ptrs(const std::vector<MotionSample>& samples);

}  // namespace oct4d

#endif
