#ifndef OCT4D_DATASET_IO_HPP
#define OCT4D_DATASET_IO_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "oct4d/acquisition.hpp"

namespace oct4d {

// OCT4D dataset container, little-endian throughout.
//
// header:
//   magic            7 bytes  "OCT4D1\n"
//   version          u16      (1)
//   sample_count     u32
//   temporal_len     u16      (5)
//   volume_dims      3 x u16
//   voxel_pitch_mm   3 x f32
//   master_seed      u64
//   config_hash      u64
//   voxel_dtype      u8       0 = f32, 1 = u8 (quantized, v = byte / 255)
// per sample:
//   roi_id           u32
//   targets          4 x 3 f32   (mm, shifts of t1..t4 relative to t0)
//   volumes          5 x prod(dims) voxels (f32 or u8 per voxel_dtype)
struct DatasetHeader {
  static constexpr char kMagic[7] = {'O', 'C', 'T', '4', 'D', '1', '\n'};
  uint16_t version = 1;
  uint32_t sample_count = 0;
  uint16_t temporal_len = 5;
  std::array<uint16_t, 3> volume_dims = {32, 32, 32};
  std::array<float, 3> voxel_pitch_mm = {5.0f / 32.0f, 5.0f / 32.0f, 3.5f / 32.0f};
  uint64_t master_seed = 0;
  uint64_t config_hash = 0;
  uint8_t voxel_dtype = 0;

  int64_t voxels_per_volume() const {
    return int64_t(volume_dims[0]) * volume_dims[1] * volume_dims[2];
  }
  int64_t sample_bytes() const;
};

struct Dataset {
  DatasetHeader header;
  std::vector<MotionSample> samples;
};

// Streaming writer: header up front, samples appended, then an atomic
// rename onto the target path so partially written files never surface.
class DatasetWriter {
 public:
  DatasetWriter(const std::string& path, DatasetHeader header);
  ~DatasetWriter();
  void append(const MotionSample& s);
  void finalize();  // flush + rename; implicit in destructor if not called

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Whole-file load. Validates magic, version, and that the declared count
// matches the byte length; throws IoError on any mismatch.
Dataset load_dataset(const std::string& path);

// Header-only peek (validates like load_dataset but reads no samples).
DatasetHeader read_dataset_header(const std::string& path);

// Streaming read: fn(sample_index, sample) per record.
void for_each_sample(const std::string& path,
                     const std::function<void(int64_t, const MotionSample&)>& fn);

void save_dataset(const std::string& path, const Dataset& ds);

}  // namespace oct4d

#endif
