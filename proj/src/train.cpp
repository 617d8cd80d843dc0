#include "oct4d/train.hpp"

#include <cstdio>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "oct4d/checkpoint.hpp"
#include "oct4d/common.hpp"
#include "oct4d/rng.hpp"

namespace oct4d {

SplitSpec derive_split(std::vector<uint32_t> roi_ids, uint64_t seed) {
  std::sort(roi_ids.begin(), roi_ids.end());
  Rng rng(derive_seed(seed, 0x5197));
  for (size_t i = roi_ids.size(); i > 1; --i)
    std::swap(roi_ids[i - 1], roi_ids[rng.uniform_index(i)]);

  size_t n = roi_ids.size();
  size_t held = std::max<size_t>(1, (n + 4) / 8);  // one eighth, rounded
  if (n < 3) throw ConfigError("need at least 3 ROIs to split into train/val/test");
  SplitSpec s;
  s.test_rois.assign(roi_ids.begin(), roi_ids.begin() + held);
  s.val_rois.assign(roi_ids.begin() + held, roi_ids.begin() + 2 * held);
  s.train_rois.assign(roi_ids.begin() + 2 * held, roi_ids.end());
  std::sort(s.test_rois.begin(), s.test_rois.end());
  std::sort(s.val_rois.begin(), s.val_rois.end());
  std::sort(s.train_rois.begin(), s.train_rois.end());
  return s;
}

void validate_split(const SplitSpec& split, const std::vector<uint32_t>& roi_ids) {
  std::set<uint32_t> seen;
  auto check = [&](const std::vector<uint32_t>& part, const char* what) {
    if (part.empty()) throw ConfigError(format_msg("empty ", what, " split"));
    for (uint32_t r : part) {
      if (!seen.insert(r).second)
        throw ConfigError(format_msg("ROI ", r, " appears in more than one split"));
      if (std::find(roi_ids.begin(), roi_ids.end(), r) == roi_ids.end())
        throw ConfigError(format_msg("ROI ", r, " in ", what, " split is not in the dataset"));
    }
  };
  check(split.train_rois, "train");
  check(split.val_rois, "val");
  check(split.test_rois, "test");
}

std::vector<uint32_t> dataset_roi_ids(const Dataset& ds) {
  std::set<uint32_t> ids;
  for (const auto& s : ds.samples) ids.insert(s.roi_id);
  return {ids.begin(), ids.end()};
}

std::vector<const MotionSample*> split_samples(const Dataset& ds,
                                               const std::vector<uint32_t>& rois) {
  std::vector<const MotionSample*> out;
  for (const auto& s : ds.samples)
    if (std::find(rois.begin(), rois.end(), s.roi_id) != rois.end()) out.push_back(&s);
  return out;
}

namespace {

double val_rmae_scalar(const Model& model, const std::vector<const MotionSample*>& val,
                       int batch_size) {
  auto rep = evaluate(model, val, batch_size);
  return rep.rmae.mean;
}

}  // namespace

TrainResult train(Model& model, const Dataset& dataset, const TrainConfig& cfg) {
  TrainResult result;
  result.split = cfg.split.empty()
                     ? derive_split(dataset_roi_ids(dataset), dataset.header.master_seed)
                     : cfg.split;
  validate_split(result.split, dataset_roi_ids(dataset));

  auto train_set = split_samples(dataset, result.split.train_rois);
  auto val_set = split_samples(dataset, result.split.val_rois);
  if (train_set.empty() || val_set.empty())
    throw ConfigError("train/val splits select no samples");

  const bool regularized = model.spec().regularized_head;
  AdamState<float> adam(cfg.adam);
  auto& params = model.params();

  double best_rmae = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  auto best_params = params.snapshot();

  std::vector<int64_t> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, 0xe90c, static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
    Rng distort_rng(derive_seed(cfg.seed, 0xd157, static_cast<uint64_t>(epoch)));

    double epoch_loss = 0;
    int64_t epoch_samples = 0;

    for (size_t bstart = 0; bstart < order.size(); bstart += cfg.batch_size) {
      size_t bend = std::min(order.size(), bstart + cfg.batch_size);
      int64_t batch_n = static_cast<int64_t>(bend - bstart);
      double batch_loss = 0;

      for (size_t mstart = bstart; mstart < bend; mstart += cfg.micro_batch) {
        size_t mend = std::min(bend, mstart + static_cast<size_t>(cfg.micro_batch));
        // augmented copies live only for this step; reserved up front so
        // the collected pointers stay valid
        std::vector<MotionSample> distorted;
        distorted.reserve(mend - mstart);
        std::vector<const MotionSample*> micro;
        for (size_t i = mstart; i < mend; ++i) {
          const MotionSample* s = train_set[order[i]];
          if (cfg.train_distort_p > 0) {
            distorted.push_back(*s);
            MotionSample& d = distorted.back();
            for (int t = 0; t < 5; ++t)
              apply_distortion(d.volume(t), d.volume_size, cfg.train_distort_p,
                               cfg.train_distort_shift, distort_rng);
            d.p_dist = static_cast<float>(cfg.train_distort_p);
            s = &d;
          }
          micro.push_back(s);
        }
        auto volumes = batch_to_tensors(micro);
        auto targets = batch_targets(micro, regularized);
        auto pred = model.forward(volumes);
        // scale micro losses by micro/batch so accumulated grads equal the
        // full-batch objective gradient
        Tensor<float> loss = regularized ? loss_eq2(pred, targets, cfg.weights)
                                         : loss_eq1(pred, targets);
        float w = static_cast<float>(micro.size()) / static_cast<float>(batch_n);
        auto scaled = scale(loss, w);
        double lv = scaled.item();
        if (!std::isfinite(lv))
          throw NumericsError(format_msg("non-finite loss at epoch ", epoch, " batch ",
                                         bstart / cfg.batch_size,
                                         "; lower the learning rate or check the data"));
        batch_loss += lv;
        scaled.backward();
      }
      adam_step(params, adam);
      epoch_loss += batch_loss * static_cast<double>(batch_n);
      epoch_samples += batch_n;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / static_cast<double>(epoch_samples);
    stats.val_rmae = val_rmae_scalar(model, val_set, cfg.batch_size);
    result.history.push_back(stats);
    if (cfg.verbose)
      std::fprintf(stderr, "epoch %3d/%d  train loss %.5f  val rMAE %.4f\n", epoch, cfg.epochs,
                   stats.train_loss, stats.val_rmae);

    if (stats.val_rmae < best_rmae) {
      best_rmae = stats.val_rmae;
      best_epoch = epoch;
      best_params = params.snapshot();
    }
    if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 &&
        !cfg.checkpoint_dir.empty()) {
      std::filesystem::create_directories(cfg.checkpoint_dir);
      save_checkpoint(cfg.checkpoint_dir + "/epoch_" + std::to_string(epoch) + ".ckpt", model,
                      0, cfg.seed);
    }
  }

  params.restore(best_params);
  result.best_epoch = best_epoch;
  result.best_val_rmae = best_rmae;
  return result;
}

}  // namespace oct4d
