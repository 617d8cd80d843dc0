#include "oct4d/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "oct4d/common.hpp"
#include "oct4d/dataset_io.hpp"
#include "oct4d/parallel.hpp"
#include "oct4d/spline.hpp"

#include <json.hpp>

namespace oct4d {
namespace {

double norm3(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

bool within_bounds(const Vec3& v, const Vec3& bounds) {
  for (int a = 0; a < 3; ++a)
    if (std::abs(v[a]) > bounds[a]) return false;
  return true;
}

}  // namespace

Trajectory sample_trajectory(Rng& rng, const AcquisitionConfig& cfg) {
  const auto& bounds = cfg.shift_bounds_mm;
  const double axial_scale = bounds[2] / std::max(bounds[0], bounds[1]);
  constexpr int kMaxRetries = 1000;

  for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
    // final shift: uniform direction (axial compressed), uniform magnitude
    Vec3 dir = {rng.normal(), rng.normal(), rng.normal() * axial_scale};
    double dn = norm3(dir);
    if (dn < 1e-12) continue;
    for (auto& d : dir) d /= dn;
    double mag = rng.uniform(cfg.magnitude_range_mm[0], cfg.magnitude_range_mm[1]);
    Vec3 s4 = {dir[0] * mag, dir[1] * mag, dir[2] * mag};
    if (!within_bounds(s4, bounds)) continue;

    // connection point: halfway plus isotropic jitter, clipped to bounds
    Vec3 c;
    double jitter = 0.2 * mag;
    for (int a = 0; a < 3; ++a) {
      c[a] = s4[a] / 2.0 + rng.normal(0.0, jitter);
      c[a] = std::clamp(c[a], -bounds[a], bounds[a]);
    }

    Trajectory traj;
    traj.shifts[0] = {0.0, 0.0, 0.0};
    traj.connection_point = c;
    traj.magnitude = mag;
    bool ok = true;
    for (int a = 0; a < 3; ++a) {
      NaturalCubicSpline sp({0.0, 0.5, 1.0}, {0.0, c[a], s4[a]});
      for (int i = 1; i <= 4; ++i) traj.shifts[i][a] = sp(i * 0.25);
    }
    for (int i = 1; i <= 4; ++i)
      if (!within_bounds(traj.shifts[i], bounds)) ok = false;
    if (!ok) continue;
    return traj;
  }
  throw ConfigError("trajectory sampling exhausted retries; magnitude range incompatible with shift bounds");
}

MotionSample acquire_sequence(const TissuePhantom& ph, std::array<int64_t, 3> roi_origin,
                              const Trajectory& traj, const AcquisitionConfig& cfg, Rng& rng,
                              uint32_t roi_id) {
  MotionSample s;
  s.roi_id = roi_id;
  s.volume_size = cfg.volume_size;
  s.volumes.reserve(5 * s.volume_voxels());
  for (int t = 0; t < 5; ++t) {
    auto vol = crop_fov(ph, roi_origin, traj.shifts[t], cfg.sensor_noise_sigma, rng,
                        cfg.volume_size);
    s.volumes.insert(s.volumes.end(), vol.begin(), vol.end());
  }
  for (int i = 0; i < 4; ++i) s.targets[i] = traj.shifts[i + 1];
  return s;
}

MotionSample apply_rotation_sequence(const MotionSample& s, double alpha_max_deg,
                                     bool adapt_labels) {
  MotionSample out = s;
  out.alpha_max_deg = static_cast<float>(alpha_max_deg);
  if (alpha_max_deg == 0.0) return out;

  const int64_t X = s.volume_size[0], Y = s.volume_size[1], Z = s.volume_size[2];
  const double cx = (X - 1) / 2.0, cy = (Y - 1) / 2.0;

  for (int t = 0; t < 5; ++t) {
    double alpha = alpha_max_deg / 4.0 * t * M_PI / 180.0;
    if (alpha == 0.0) continue;
    // content rotates by +alpha (CCW viewed along +axial); output voxels
    // sample the input at the inverse rotation
    double ca = std::cos(-alpha), sa = std::sin(-alpha);
    const float* src = s.volume(t);
    float* dst = out.volume(t);
    for (int64_t x = 0; x < X; ++x)
      for (int64_t y = 0; y < Y; ++y) {
        double rx = ca * (x - cx) - sa * (y - cy) + cx;
        double ry = sa * (x - cx) + ca * (y - cy) + cy;
        float* drow = dst + (x * Y + y) * Z;
        int64_t x0 = static_cast<int64_t>(std::floor(rx));
        int64_t y0 = static_cast<int64_t>(std::floor(ry));
        if (rx < 0 || ry < 0 || x0 >= X - 1 || y0 >= Y - 1) {
          // allow exact edge hits, zero-fill everything else
          bool on_x = rx >= 0 && rx <= X - 1;
          bool on_y = ry >= 0 && ry <= Y - 1;
          if (on_x && on_y && rx == std::floor(rx) && ry == std::floor(ry)) {
            const float* srow = src + (int64_t(rx) * Y + int64_t(ry)) * Z;
            for (int64_t z = 0; z < Z; ++z) drow[z] = srow[z];
          } else {
            for (int64_t z = 0; z < Z; ++z) drow[z] = 0.0f;
          }
          continue;
        }
        double tx = rx - x0, ty = ry - y0;
        double w00 = (1 - tx) * (1 - ty), w01 = (1 - tx) * ty;
        double w10 = tx * (1 - ty), w11 = tx * ty;
        const float* s00 = src + (x0 * Y + y0) * Z;
        const float* s01 = s00 + Z;
        const float* s10 = s00 + Y * Z;
        const float* s11 = s10 + Z;
        for (int64_t z = 0; z < Z; ++z)
          drow[z] = static_cast<float>(w00 * s00[z] + w01 * s01[z] + w10 * s10[z] + w11 * s11[z]);
      }
    if (adapt_labels && t >= 1) {
      double cr = std::cos(alpha), sr = std::sin(alpha);
      Vec3& tgt = out.targets[t - 1];
      double nx = cr * tgt[0] - sr * tgt[1];
      double ny = sr * tgt[0] + cr * tgt[1];
      tgt[0] = nx;
      tgt[1] = ny;
    }
  }
  return out;
}

void apply_distortion(float* volume, std::array<int64_t, 3> dims, double p_dist, int shift_px,
                      Rng& rng) {
  if (p_dist <= 0.0) return;
  const int64_t X = dims[0], Y = dims[1], Z = dims[2];
  std::vector<float> scan(Y * Z);
  for (int64_t x = 0; x < X; ++x) {
    if (!rng.bernoulli(p_dist)) continue;
    bool along_y = rng.bernoulli(0.5);       // second lateral vs axial
    int sign = rng.bernoulli(0.5) ? 1 : -1;  // displacement direction
    int64_t d = sign * shift_px;
    float* bscan = volume + x * Y * Z;
    std::copy(bscan, bscan + Y * Z, scan.begin());
    if (along_y) {
      for (int64_t y = 0; y < Y; ++y) {
        int64_t sy = y - d;
        if (sy < 0 || sy >= Y)
          std::fill(bscan + y * Z, bscan + (y + 1) * Z, 0.0f);
        else
          std::copy(scan.begin() + sy * Z, scan.begin() + (sy + 1) * Z, bscan + y * Z);
      }
    } else {
      for (int64_t y = 0; y < Y; ++y)
        for (int64_t z = 0; z < Z; ++z) {
          int64_t sz = z - d;
          bscan[y * Z + z] = (sz < 0 || sz >= Z) ? 0.0f : scan[y * Z + sz];
        }
    }
  }
}

int64_t DatasetPlan::total_samples() const { return n_rois * patterns_per_roi; }

DatasetPlan plan_dataset(const AcquisitionConfig& cfg) {
  if (cfg.n_rois < 1 || cfg.patterns_per_roi < 1)
    throw ConfigError("dataset needs at least one ROI and one pattern per ROI");
  if (cfg.magnitude_range_mm[0] < 0 || cfg.magnitude_range_mm[1] < cfg.magnitude_range_mm[0])
    throw ConfigError("invalid magnitude range");

  DatasetPlan plan;
  plan.n_rois = cfg.n_rois;
  plan.patterns_per_roi = cfg.patterns_per_roi;
  plan.phantom.size = cfg.phantom_size;
  plan.phantom.seed = derive_seed(cfg.master_seed, 0x9047);
  plan.phantom.voxel_pitch_mm = cfg.voxel_pitch_mm;

  for (int a = 0; a < 3; ++a) {
    // crop + maximum shift + one voxel of interpolation slack
    double max_shift_vox = cfg.shift_bounds_mm[a] / cfg.voxel_pitch_mm[a];
    plan.margin_vox[a] = static_cast<int64_t>(std::ceil(max_shift_vox)) + 1;
    int64_t span = cfg.phantom_size[a] - cfg.volume_size[a] - 2 * plan.margin_vox[a];
    if (span < 0)
      throw ConfigError(format_msg("phantom axis ", a, " (", cfg.phantom_size[a],
                                   " vox) too small for volume ", cfg.volume_size[a],
                                   " plus shift margin ", plan.margin_vox[a]));
  }

  // Disjoint ROI boxes on a maximally spread per-axis grid: slots sit at
  // least one volume apart by construction, so feasibility is a pure
  // capacity check and placement cannot wedge.
  std::array<std::vector<int64_t>, 3> slots;
  int64_t capacity = 1;
  for (int a = 0; a < 3; ++a) {
    int64_t lo = plan.margin_vox[a];
    int64_t hi = cfg.phantom_size[a] - cfg.volume_size[a] - plan.margin_vox[a];
    int64_t span = hi - lo;
    int64_t n = span / cfg.volume_size[a] + 1;
    for (int64_t k = 0; k < n; ++k)
      slots[a].push_back(n == 1 ? lo : lo + k * span / (n - 1));
    capacity *= n;
  }
  if (capacity < cfg.n_rois)
    throw ConfigError(format_msg("phantom holds at most ", capacity, " disjoint ROIs, ",
                                 cfg.n_rois, " requested; increase phantom_size"));

  std::vector<int64_t> cells(capacity);
  for (int64_t i = 0; i < capacity; ++i) cells[i] = i;
  Rng rng(derive_seed(cfg.master_seed, 0x2013));
  for (size_t i = cells.size(); i > 1; --i)
    std::swap(cells[i - 1], cells[rng.uniform_index(i)]);
  for (int64_t r = 0; r < cfg.n_rois; ++r) {
    int64_t c = cells[r];
    std::array<int64_t, 3> origin;
    for (int a = 2; a >= 0; --a) {
      origin[a] = slots[a][c % static_cast<int64_t>(slots[a].size())];
      c /= static_cast<int64_t>(slots[a].size());
    }
    plan.roi_origins.push_back(origin);
  }
  return plan;
}

MotionSample generate_sample(const TissuePhantom& ph, std::array<int64_t, 3> roi_origin,
                             const AcquisitionConfig& cfg, uint32_t roi_id, int64_t pattern_idx) {
  Rng rng(derive_seed(cfg.master_seed, 0xac0, roi_id, static_cast<uint64_t>(pattern_idx)));
  Trajectory traj = sample_trajectory(rng, cfg);
  return acquire_sequence(ph, roi_origin, traj, cfg, rng, roi_id);
}

DatasetSummary build_dataset(const AcquisitionConfig& cfg, const std::string& dataset_path,
                             const std::string& manifest_path) {
  DatasetPlan plan = plan_dataset(cfg);
  TissuePhantom ph = make_phantom(plan.phantom);

  DatasetHeader header;
  header.sample_count = static_cast<uint32_t>(plan.total_samples());
  header.temporal_len = 5;
  for (int a = 0; a < 3; ++a) {
    header.volume_dims[a] = static_cast<uint16_t>(cfg.volume_size[a]);
    header.voxel_pitch_mm[a] = static_cast<float>(cfg.voxel_pitch_mm[a]);
  }
  header.master_seed = cfg.master_seed;
  header.voxel_dtype = cfg.quantize_u8 ? 1 : 0;
  {
    // hash the generation-relevant config fields
    nlohmann::json j;
    j["n_rois"] = cfg.n_rois;
    j["patterns_per_roi"] = cfg.patterns_per_roi;
    j["magnitude_range_mm"] = cfg.magnitude_range_mm;
    j["shift_bounds_mm"] = cfg.shift_bounds_mm;
    j["sensor_noise_sigma"] = cfg.sensor_noise_sigma;
    j["voxel_pitch_mm"] = cfg.voxel_pitch_mm;
    j["volume_size"] = cfg.volume_size;
    j["master_seed"] = cfg.master_seed;
    j["phantom_size"] = cfg.phantom_size;
    j["quantize_u8"] = cfg.quantize_u8;
    std::string dump = j.dump();
    header.config_hash = fnv1a64(dump.data(), dump.size());
  }

  DatasetSummary summary;
  summary.n_rois = cfg.n_rois;
  summary.samples = plan.total_samples();
  summary.magnitude_histogram.assign(8, 0);
  summary.magnitude_min = cfg.magnitude_range_mm[0];
  summary.magnitude_max = cfg.magnitude_range_mm[1];

  DatasetWriter writer(dataset_path, header);
  const int64_t per_roi = cfg.patterns_per_roi;
  // Samples are generated in batches (parallel, independent streams) and
  // written in index order.
  std::vector<MotionSample> batch;
  for (int64_t r = 0; r < cfg.n_rois; ++r) {
    batch.assign(per_roi, MotionSample{});
    parallel_for(per_roi, [&](int64_t i) {
      batch[i] = generate_sample(ph, plan.roi_origins[r], cfg, static_cast<uint32_t>(r), i);
    });
    for (auto& s : batch) {
      double mag = norm3(s.targets[3]);
      double rel = (mag - summary.magnitude_min) /
                   std::max(1e-12, summary.magnitude_max - summary.magnitude_min);
      int bin = std::clamp(static_cast<int>(rel * 8.0), 0, 7);
      summary.magnitude_histogram[bin]++;
      writer.append(s);
    }
  }
  writer.finalize();

  if (!manifest_path.empty()) {
    nlohmann::json m;
    m["dataset"] = dataset_path;
    m["format_version"] = 1;
    m["config_hash"] = hex64(header.config_hash);
    m["master_seed"] = cfg.master_seed;
    m["n_rois"] = cfg.n_rois;
    m["patterns_per_roi"] = cfg.patterns_per_roi;
    m["sample_count"] = plan.total_samples();
    m["volume_size"] = cfg.volume_size;
    m["voxel_pitch_mm"] = cfg.voxel_pitch_mm;
    m["phantom_size"] = cfg.phantom_size;
    m["phantom_seed"] = plan.phantom.seed;
    m["sensor_noise_sigma"] = cfg.sensor_noise_sigma;
    m["magnitude_range_mm"] = cfg.magnitude_range_mm;
    m["shift_bounds_mm"] = cfg.shift_bounds_mm;
    m["quantize_u8"] = cfg.quantize_u8;
    auto origins = nlohmann::json::array();
    for (const auto& o : plan.roi_origins) origins.push_back(o);
    m["roi_origins"] = origins;
    m["magnitude_histogram"] = summary.magnitude_histogram;
    std::string tmp = manifest_path + ".tmp";
    std::ofstream os(tmp);
    if (!os) throw IoError(format_msg("cannot open ", tmp, " for writing"));
    os << m.dump(2) << "\n";
    os.close();
    std::filesystem::rename(tmp, manifest_path);
  }
  return summary;
}

}  // namespace oct4d
