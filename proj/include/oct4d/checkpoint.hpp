#ifndef OCT4D_CHECKPOINT_HPP
#define OCT4D_CHECKPOINT_HPP

#include <string>

#include "oct4d/model.hpp"

namespace oct4d {

// Checkpoint container, little-endian:
//   magic         9 bytes "OCT4DCKPT"
//   version       u16 (1)
//   model spec    variant u8, growth u16, blocks u16, layers u16,
//                 stem channels 3 x u16, spatial_kernel u8,
//                 temporal_kernel u8, regularized u8, temporal_len u16,
//                 volume dims 3 x u16
//   config_hash   u64
//   seed          u64
//   param count   u32
//   per param     name (u16 length + bytes), rank u8, dims rank x u32,
//                 payload f32[...]
//   checksum      u64 fnv-1a over everything before it
// Loading a stored model reproduces forward outputs bitwise.
void save_checkpoint(const std::string& path, const Model& model, uint64_t config_hash,
                     uint64_t seed);

struct LoadedCheckpoint {
  Model model;
  uint64_t config_hash = 0;
  uint64_t seed = 0;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace oct4d

#endif
