#ifndef OCT4D_PHANTOM_HPP
#define OCT4D_PHANTOM_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "oct4d/rng.hpp"

namespace oct4d {

// Procedural tissue stand-in: a large volume the acquisition simulator
// crops field-of-view sized windows out of. Texture = multi-octave value
// noise x multiplicative speckle x exponential depth attenuation along the
// axial (last) axis, clamped to [0,1].
struct PhantomConfig {
  std::array<int64_t, 3> size = {160, 160, 160};
  uint64_t seed = 0;
  std::array<double, 3> voxel_pitch_mm = {5.0 / 32.0, 5.0 / 32.0, 3.5 / 32.0};
  int octaves = 4;
  double base_cell_vox = 24.0;     // coarsest noise lattice cell
  double persistence = 0.55;       // octave amplitude falloff
  double speckle = 0.35;           // multiplicative speckle strength
  double attenuation_depth_vox = 110.0;  // e-folding depth of the axial decay
};

struct TissuePhantom {
  std::array<int64_t, 3> size;
  uint64_t seed;
  std::array<double, 3> voxel_pitch_mm;
  std::vector<float> voxels;  // [x][y][z] row-major, z fastest

  float at(int64_t x, int64_t y, int64_t z) const {
    return voxels[(x * size[1] + y) * size[2] + z];
  }

  // Trilinear sample at fractional voxel coordinates; caller guarantees
  // the 8-tap neighborhood is inside the volume.
  double sample_trilinear(double x, double y, double z) const;
};

// Deterministic in cfg.seed. Throws ConfigError for sizes below 64 voxels
// per axis (too small to hold one ROI plus shift margin).
TissuePhantom make_phantom(const PhantomConfig& cfg);

// Extracts an out_size window whose corner sits at roi_origin translated by
// offset_mm (converted to voxels through the pitch), trilinearly
// interpolated, plus i.i.d. Gaussian sensor noise, clamped back to [0,1].
// Throws AcquisitionError when the shifted window leaves the phantom.
std::vector<float> crop_fov(const TissuePhantom& ph, std::array<int64_t, 3> roi_origin,
                            std::array<double, 3> offset_mm, double noise_sigma, Rng& noise_rng,
                            std::array<int64_t, 3> out_size = {32, 32, 32});

}  // namespace oct4d

#endif
