#include "oct4d/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "oct4d/common.hpp"
#include "oct4d/parallel.hpp"

namespace oct4d {
namespace {

// Hashed lattice value in [0,1): no lattice storage, any coordinate maps
// straight to its value, so generation order is irrelevant.
double lattice_value(uint64_t seed, int octave, int64_t ix, int64_t iy, int64_t iz) {
  uint64_t h = derive_seed(seed, static_cast<uint64_t>(octave) + 1,
                           (static_cast<uint64_t>(ix) << 21) ^ static_cast<uint64_t>(iy),
                           static_cast<uint64_t>(iz));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(uint64_t seed, int octave, double cell, double x, double y, double z) {
  double fx = x / cell, fy = y / cell, fz = z / cell;
  int64_t ix = static_cast<int64_t>(std::floor(fx));
  int64_t iy = static_cast<int64_t>(std::floor(fy));
  int64_t iz = static_cast<int64_t>(std::floor(fz));
  double tx = smooth(fx - ix), ty = smooth(fy - iy), tz = smooth(fz - iz);
  double acc = 0;
  for (int dx = 0; dx < 2; ++dx)
    for (int dy = 0; dy < 2; ++dy)
      for (int dz = 0; dz < 2; ++dz) {
        double w = (dx ? tx : 1 - tx) * (dy ? ty : 1 - ty) * (dz ? tz : 1 - tz);
        acc += w * lattice_value(seed, octave, ix + dx, iy + dy, iz + dz);
      }
  return acc;
}

}  // namespace

TissuePhantom make_phantom(const PhantomConfig& cfg) {
  for (int a = 0; a < 3; ++a)
    if (cfg.size[a] < 64)
      throw ConfigError(format_msg("phantom size ", cfg.size[a], " on axis ", a,
                                   " below minimum 64 (ROI + shift margin)"));
  TissuePhantom ph;
  ph.size = cfg.size;
  ph.seed = cfg.seed;
  ph.voxel_pitch_mm = cfg.voxel_pitch_mm;
  ph.voxels.resize(static_cast<size_t>(cfg.size[0] * cfg.size[1] * cfg.size[2]));

  double wsum = 0;
  for (int o = 0; o < cfg.octaves; ++o) wsum += std::pow(cfg.persistence, o);

  const int64_t Y = cfg.size[1], Z = cfg.size[2];
  parallel_for(cfg.size[0], [&](int64_t x) {
    for (int64_t y = 0; y < Y; ++y)
      for (int64_t z = 0; z < Z; ++z) {
        double tex = 0;
        for (int o = 0; o < cfg.octaves; ++o) {
          double cell = cfg.base_cell_vox / static_cast<double>(1 << o);
          tex += std::pow(cfg.persistence, o) *
                 value_noise(cfg.seed, o, cell, double(x), double(y), double(z));
        }
        tex /= wsum;
        // per-voxel multiplicative speckle from its own hashed stream
        uint64_t h = derive_seed(cfg.seed, 0x5bec, static_cast<uint64_t>((x * Y + y) * Z + z));
        double u = static_cast<double>(h >> 11) * 0x1.0p-53;
        double speck = 1.0 + cfg.speckle * 2.0 * (u - 0.5);
        double atten = std::exp(-static_cast<double>(z) / cfg.attenuation_depth_vox);
        double v = tex * speck * atten;
        ph.voxels[(x * Y + y) * Z + z] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
  });
  return ph;
}

double TissuePhantom::sample_trilinear(double x, double y, double z) const {
  int64_t ix = static_cast<int64_t>(std::floor(x));
  int64_t iy = static_cast<int64_t>(std::floor(y));
  int64_t iz = static_cast<int64_t>(std::floor(z));
  double tx = x - ix, ty = y - iy, tz = z - iz;
  double acc = 0;
  for (int dx = 0; dx < 2; ++dx)
    for (int dy = 0; dy < 2; ++dy)
      for (int dz = 0; dz < 2; ++dz) {
        double w = (dx ? tx : 1 - tx) * (dy ? ty : 1 - ty) * (dz ? tz : 1 - tz);
        if (w == 0.0) continue;
        acc += w * at(ix + dx, iy + dy, iz + dz);
      }
  return acc;
}

std::vector<float> crop_fov(const TissuePhantom& ph, std::array<int64_t, 3> roi_origin,
                            std::array<double, 3> offset_mm, double noise_sigma, Rng& noise_rng,
                            std::array<int64_t, 3> out_size) {
  std::array<double, 3> off_vox;
  for (int a = 0; a < 3; ++a) off_vox[a] = offset_mm[a] / ph.voxel_pitch_mm[a];

  for (int a = 0; a < 3; ++a) {
    double lo = roi_origin[a] + off_vox[a];
    double hi = roi_origin[a] + out_size[a] - 1 + off_vox[a];
    if (std::floor(lo) < 0 || std::ceil(hi) > static_cast<double>(ph.size[a] - 1))
      throw AcquisitionError(format_msg("crop leaves phantom on axis ", a, ": [", lo, ", ", hi,
                                        "] vs extent ", ph.size[a]));
  }

  std::vector<float> out(static_cast<size_t>(out_size[0] * out_size[1] * out_size[2]));
  size_t i = 0;
  const bool integer_offset = off_vox[0] == std::floor(off_vox[0]) &&
                              off_vox[1] == std::floor(off_vox[1]) &&
                              off_vox[2] == std::floor(off_vox[2]);
  for (int64_t x = 0; x < out_size[0]; ++x)
    for (int64_t y = 0; y < out_size[1]; ++y)
      for (int64_t z = 0; z < out_size[2]; ++z, ++i) {
        double v;
        if (integer_offset) {
          // exact path: pure array slicing for integer-pitch shifts
          v = ph.at(roi_origin[0] + x + static_cast<int64_t>(off_vox[0]),
                    roi_origin[1] + y + static_cast<int64_t>(off_vox[1]),
                    roi_origin[2] + z + static_cast<int64_t>(off_vox[2]));
        } else {
          v = ph.sample_trilinear(roi_origin[0] + x + off_vox[0], roi_origin[1] + y + off_vox[1],
                                  roi_origin[2] + z + off_vox[2]);
        }
        if (noise_sigma > 0) v += noise_rng.normal(0.0, noise_sigma);
        out[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
  return out;
}

}  // namespace oct4d
