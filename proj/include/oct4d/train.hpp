#ifndef OCT4D_TRAIN_HPP
#define OCT4D_TRAIN_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "oct4d/dataset_io.hpp"
#include "oct4d/loss.hpp"
#include "oct4d/metrics.hpp"
#include "oct4d/model.hpp"
#include "oct4d/optim.hpp"

namespace oct4d {

// Region-of-interest split; held-out regions, never held-out patterns.
struct SplitSpec {
  std::vector<uint32_t> train_rois, val_rois, test_rois;
  bool empty() const { return train_rois.empty() && val_rois.empty() && test_rois.empty(); }
};

// Seeded shuffle of the ROI ids, then one eighth each (rounded, >= 1) for
// validation and testing: 8 -> 6/1/1, 40 -> 30/5/5.
SplitSpec derive_split(std::vector<uint32_t> roi_ids, uint64_t seed);

void validate_split(const SplitSpec& split, const std::vector<uint32_t>& roi_ids);

struct TrainConfig {
  int epochs = 150;
  int batch_size = 50;
  AdamConfig adam;           // lr 1e-3, betas 0.9/0.999, eps 1e-8
  LossWeights weights;       // only consulted for regularized heads
  uint64_t seed = 1;
  SplitSpec split;           // empty -> derive_split(dataset rois, dataset seed)
  int checkpoint_every = 0;  // epochs between periodic checkpoints, 0 = off
  std::string checkpoint_dir;

  // Gradient accumulation granularity. Losses are scaled so the update
  // equals the full-batch gradient; the value is part of the numeric
  // reproducibility contract (it fixes the summation bracketing).
  int micro_batch = 10;

  // B-scan distortion augmentation applied to training inputs (labels
  // untouched); 0 disables.
  double train_distort_p = 0.0;
  int train_distort_shift = 2;

  // per-epoch progress line on stderr
  bool verbose = false;
};

struct EpochStats {
  int epoch = 0;          // 1-based
  double train_loss = 0;  // mean objective over the epoch's samples
  double val_rmae = 0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = 0;
  double best_val_rmae = 0;
  SplitSpec split;
};

// Shuffled mini-batch epochs (last partial batch kept), Adam updates, one
// validation pass per epoch; the model ends at the parameters of the best
// validation-rMAE epoch. Throws NumericsError on a non-finite loss and
// ConfigError on overlapping splits.
TrainResult train(Model& model, const Dataset& dataset, const TrainConfig& cfg);

// Samples of the dataset belonging to the listed ROIs.
std::vector<const MotionSample*> split_samples(const Dataset& ds,
                                               const std::vector<uint32_t>& rois);

std::vector<uint32_t> dataset_roi_ids(const Dataset& ds);

}  // namespace oct4d

#endif
