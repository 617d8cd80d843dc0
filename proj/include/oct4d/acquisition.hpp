#ifndef OCT4D_ACQUISITION_HPP
#define OCT4D_ACQUISITION_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "oct4d/phantom.hpp"
#include "oct4d/rng.hpp"

namespace oct4d {

using Vec3 = std::array<double, 3>;

// One motion pattern: five absolute target shifts relative to the start,
// produced by per-axis natural cubic splines through the origin, a random
// connection point at the half-way knot and the random final shift.
struct Trajectory {
  std::array<Vec3, 5> shifts;  // mm; shifts[0] == {0,0,0} exactly
  Vec3 connection_point;       // mm; equals shifts[2] by construction
  double magnitude;            // ||shifts[4]||_2
};

// One labeled example: five FOV-sized volumes plus the relative shifts of
// steps t1..t4 in mm. Volumes are stored [t][x][y][z], intensities in [0,1].
struct MotionSample {
  uint32_t roi_id = 0;
  std::array<Vec3, 4> targets;  // shifts of t1..t4 relative to t0
  std::array<int64_t, 3> volume_size = {32, 32, 32};
  std::vector<float> volumes;   // 5 * prod(volume_size)

  int64_t volume_voxels() const {
    return volume_size[0] * volume_size[1] * volume_size[2];
  }
  const float* volume(int t) const { return volumes.data() + t * volume_voxels(); }
  float* volume(int t) { return volumes.data() + t * volume_voxels(); }

  // augmentation bookkeeping
  float alpha_max_deg = 0.0f;
  float p_dist = 0.0f;
};

struct AcquisitionConfig {
  int64_t n_rois = 8;
  int64_t patterns_per_roi = 50;
  std::array<double, 2> magnitude_range_mm = {0.2, 2.2};
  Vec3 shift_bounds_mm = {2.0, 2.0, 1.2};  // per-axis cap keeping FOV-ROI overlap
  double sensor_noise_sigma = 0.01;
  std::array<double, 3> voxel_pitch_mm = {5.0 / 32.0, 5.0 / 32.0, 3.5 / 32.0};
  std::array<int64_t, 3> volume_size = {32, 32, 32};
  uint64_t master_seed = 77;
  std::array<int64_t, 3> phantom_size = {160, 160, 160};
  bool quantize_u8 = false;  // optional compact voxel storage

  void paper_scale() {
    n_rois = 40;
    patterns_per_roi = 200;
    phantom_size = {288, 288, 288};
  }
};

// Final shift with uniform random direction (axial component compressed by
// the axial/lateral bound ratio) and magnitude uniform in range; connection
// point at half the final shift plus an isotropic Gaussian perturbation;
// intermediate shifts read off per-axis natural cubic splines at
// t = 0.25/0.5/0.75. Resamples (bounded) until every shift respects the
// per-axis bounds.
Trajectory sample_trajectory(Rng& rng, const AcquisitionConfig& cfg);

// Five crops of the phantom at the trajectory offsets, each with its own
// sensor noise; targets copy shifts t1..t4.
MotionSample acquire_sequence(const TissuePhantom& ph, std::array<int64_t, 3> roi_origin,
                              const Trajectory& traj, const AcquisitionConfig& cfg, Rng& rng,
                              uint32_t roi_id);

// Rotates volume i about the axial axis by alpha_max/4 * i degrees
// (counter-clockwise positive when viewed along +axial), bilinear in-plane
// resampling with zero fill. adapt_labels additionally rotates the lateral
// target components by the matching per-volume angle; without it the labels
// are untouched (rotation treated as noise).
MotionSample apply_rotation_sequence(const MotionSample& s, double alpha_max_deg,
                                     bool adapt_labels);

// Shifts each B-scan (slice at fixed first lateral index) independently
// with probability p_dist by shift_px voxels along one uniformly chosen
// in-plane axis and sign, zero fill.
void apply_distortion(float* volume, std::array<int64_t, 3> dims, double p_dist, int shift_px,
                      Rng& rng);

// Dataset assembly -----------------------------------------------------

struct DatasetPlan {
  PhantomConfig phantom;
  std::vector<std::array<int64_t, 3>> roi_origins;  // disjoint, margin-respecting
  std::array<int64_t, 3> margin_vox;
  int64_t total_samples() const;
  int64_t n_rois = 0, patterns_per_roi = 0;
};

// Validates geometry and fixes ROI origins deterministically from the
// master seed. Throws ConfigError when the phantom cannot hold the
// requested ROIs with the configured shift bounds.
DatasetPlan plan_dataset(const AcquisitionConfig& cfg);

struct DatasetSummary {
  int64_t n_rois = 0;
  int64_t samples = 0;
  std::vector<int64_t> magnitude_histogram;  // 8 equal-width bins over the range
  double magnitude_min = 0, magnitude_max = 0;
};

// Generates plan + samples and writes the dataset container and a JSON
// manifest next to it. Sample i of ROI r draws from an independent stream
// derived from (master_seed, r, i), so the result does not depend on worker
// count. Returns a printable summary.
DatasetSummary build_dataset(const AcquisitionConfig& cfg, const std::string& dataset_path,
                             const std::string& manifest_path);

// Single-sample generation used by build_dataset and tests.
MotionSample generate_sample(const TissuePhantom& ph, std::array<int64_t, 3> roi_origin,
                             const AcquisitionConfig& cfg, uint32_t roi_id, int64_t pattern_idx);

}  // namespace oct4d

#endif
