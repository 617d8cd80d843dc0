#include "oct4d/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oct4d/common.hpp"

namespace oct4d {
namespace {

constexpr char kMagic[9] = {'O', 'C', 'T', '4', 'D', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(const std::string& buf, size_t& off) {
  if (off + sizeof(T) > buf.size()) throw IoError("checkpoint truncated");
  T v{};
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, uint64_t config_hash,
                     uint64_t seed) {
  const ModelSpec& s = model.spec();
  std::string buf;
  buf.append(kMagic, 9);
  put<uint16_t>(buf, 1);  // version
  put<uint8_t>(buf, static_cast<uint8_t>(s.variant));
  put<uint16_t>(buf, static_cast<uint16_t>(s.growth_rate));
  put<uint16_t>(buf, static_cast<uint16_t>(s.dense_blocks));
  put<uint16_t>(buf, static_cast<uint16_t>(s.layers_per_block));
  for (int c : s.stem_channels) put<uint16_t>(buf, static_cast<uint16_t>(c));
  put<uint8_t>(buf, static_cast<uint8_t>(s.spatial_kernel));
  put<uint8_t>(buf, static_cast<uint8_t>(s.temporal_kernel));
  put<uint8_t>(buf, s.regularized_head ? 1 : 0);
  put<uint16_t>(buf, static_cast<uint16_t>(s.temporal_len));
  for (int64_t d : s.volume_size) put<uint16_t>(buf, static_cast<uint16_t>(d));
  put<uint64_t>(buf, config_hash);
  put<uint64_t>(buf, seed);

  put<uint32_t>(buf, static_cast<uint32_t>(model.params().size()));
  for (const auto& [name, t] : model.params()) {
    put<uint16_t>(buf, static_cast<uint16_t>(name.size()));
    buf.append(name);
    put<uint8_t>(buf, static_cast<uint8_t>(t.rank()));
    for (int64_t d : t.shape()) put<uint32_t>(buf, static_cast<uint32_t>(d));
    buf.append(reinterpret_cast<const char*>(t.data()), sizeof(float) * t.numel());
  }
  uint64_t checksum = fnv1a64(buf.data(), buf.size());
  put<uint64_t>(buf, checksum);

  std::string tmp = path + ".tmp";
  std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError(format_msg("cannot open ", tmp, " for writing"));
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  os.close();
  if (!os) throw IoError(format_msg("failed writing checkpoint ", path));
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(format_msg("cannot open checkpoint ", path));
  std::ostringstream ss;
  ss << is.rdbuf();
  std::string buf = ss.str();
  if (buf.size() < 9 + 8 || std::memcmp(buf.data(), kMagic, 9) != 0)
    throw IoError("not an OCT4D checkpoint (bad magic)");

  uint64_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - 8, 8);
  uint64_t computed = fnv1a64(buf.data(), buf.size() - 8);
  if (stored != computed)
    throw IoError("checkpoint checksum mismatch (corrupted file)");

  size_t off = 9;
  uint16_t version = take<uint16_t>(buf, off);
  if (version != 1) throw IoError(format_msg("unsupported checkpoint version ", version));

  ModelSpec s;
  s.variant = static_cast<Variant>(take<uint8_t>(buf, off));
  s.growth_rate = take<uint16_t>(buf, off);
  s.dense_blocks = take<uint16_t>(buf, off);
  s.layers_per_block = take<uint16_t>(buf, off);
  for (int& c : s.stem_channels) c = take<uint16_t>(buf, off);
  s.spatial_kernel = take<uint8_t>(buf, off);
  s.temporal_kernel = take<uint8_t>(buf, off);
  s.regularized_head = take<uint8_t>(buf, off) != 0;
  s.temporal_len = take<uint16_t>(buf, off);
  for (int64_t& d : s.volume_size) d = take<uint16_t>(buf, off);

  LoadedCheckpoint out{Model(s, 0), take<uint64_t>(buf, off), 0};
  out.seed = take<uint64_t>(buf, off);

  uint32_t count = take<uint32_t>(buf, off);
  if (count != out.model.params().size())
    throw IoError(format_msg("checkpoint has ", count, " parameters, topology expects ",
                             out.model.params().size()));
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t len = take<uint16_t>(buf, off);
    if (off + len > buf.size()) throw IoError("checkpoint truncated in parameter name");
    std::string name(buf.data() + off, len);
    off += len;
    uint8_t rank = take<uint8_t>(buf, off);
    std::vector<int64_t> shape(rank);
    for (auto& d : shape) d = take<uint32_t>(buf, off);
    if (!out.model.params().has(name))
      throw IoError(format_msg("checkpoint parameter '", name, "' not in topology"));
    auto& t = out.model.params().get(name);
    if (t.shape() != shape)
      throw IoError(format_msg("checkpoint parameter '", name, "' has shape mismatch"));
    size_t bytes = sizeof(float) * t.numel();
    if (off + bytes > buf.size() - 8) throw IoError("checkpoint truncated in payload");
    std::memcpy(t.data(), buf.data() + off, bytes);
    off += bytes;
  }
  return out;
}

}  // namespace oct4d
