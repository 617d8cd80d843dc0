#include "oct4d/robustness.hpp"

#include <chrono>
#include <cmath>

#include "oct4d/common.hpp"
#include "oct4d/rng.hpp"

namespace oct4d {

std::vector<RotationSweepRow> eval_rotation_robustness(
    const Model& model, const std::vector<const MotionSample*>& samples,
    const std::vector<double>& alphas_deg, const std::vector<RotationMode>& modes,
    int batch_size) {
  std::vector<RotationSweepRow> rows;
  for (RotationMode mode : modes)
    for (double alpha : alphas_deg) {
      std::vector<MotionSample> transformed;
      transformed.reserve(samples.size());
      for (const auto* s : samples)
        transformed.push_back(
            apply_rotation_sequence(*s, alpha, mode == RotationMode::Motion));
      RotationSweepRow row;
      row.alpha_max_deg = alpha;
      row.mode = mode;
      row.report = evaluate(model, sample_ptrs(transformed), batch_size);
      rows.push_back(std::move(row));
    }
  return rows;
}

std::vector<DistortionSweepRow> eval_distortion_robustness(
    const Model& model, const std::vector<const MotionSample*>& samples,
    const std::vector<double>& p_list, int shift_px, uint64_t seed, int batch_size) {
  std::vector<DistortionSweepRow> rows;
  for (double p : p_list) {
    std::vector<MotionSample> transformed;
    transformed.reserve(samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
      MotionSample copy = *samples[i];
      Rng rng(derive_seed(seed, 0xd15, i));
      for (int t = 0; t < 5; ++t)
        apply_distortion(copy.volume(t), copy.volume_size, p, shift_px, rng);
      copy.p_dist = static_cast<float>(p);
      transformed.push_back(std::move(copy));
    }
    DistortionSweepRow row;
    row.p_dist = p;
    row.shift_px = shift_px;
    row.report = evaluate(model, sample_ptrs(transformed), batch_size);
    rows.push_back(std::move(row));
  }
  return rows;
}

BenchResult bench_inference(const Model& model, int reps, int warmup) {
  const auto& vs = model.spec().volume_size;
  std::vector<Tensor<float>> volumes;
  Rng rng(404);
  for (int t = 0; t < model.spec().temporal_len; ++t) {
    auto v = Tensor<float>::zeros({1, 1, vs[0], vs[1], vs[2]});
    for (auto& x : v.data_vec()) x = static_cast<float>(rng.uniform());
    volumes.push_back(v);
  }
  NoGradGuard ng;
  for (int i = 0; i < warmup; ++i) (void)model.forward(volumes);

  std::vector<double> ms(reps);
  for (int i = 0; i < reps; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    (void)model.forward(volumes);
    auto t1 = std::chrono::steady_clock::now();
    ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  BenchResult r;
  r.model_id = variant_name(model.spec().variant);
  r.params = model.count_params();
  double sum = 0;
  for (double v : ms) sum += v;
  r.mean_ms = sum / reps;
  double var = 0;
  for (double v : ms) var += (v - r.mean_ms) * (v - r.mean_ms);
  r.std_ms = std::sqrt(var / reps);
  r.hz = 1000.0 / r.mean_ms;
  return r;
}

}  // namespace oct4d
