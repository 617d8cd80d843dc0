#include "oct4d/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>

#include "oct4d/common.hpp"

namespace oct4d {
namespace {

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("dataset file truncated");
  return v;
}

constexpr int64_t kHeaderBytes = 7 + 2 + 4 + 2 + 6 + 12 + 8 + 8 + 1;

void write_header(std::ostream& os, const DatasetHeader& h) {
  os.write(DatasetHeader::kMagic, 7);
  put(os, h.version);
  put(os, h.sample_count);
  put(os, h.temporal_len);
  for (uint16_t d : h.volume_dims) put(os, d);
  for (float p : h.voxel_pitch_mm) put(os, p);
  put(os, h.master_seed);
  put(os, h.config_hash);
  put(os, h.voxel_dtype);
}

DatasetHeader parse_header(std::istream& is) {
  char magic[7];
  is.read(magic, 7);
  if (!is || std::memcmp(magic, DatasetHeader::kMagic, 7) != 0)
    throw IoError("not an OCT4D dataset (bad magic)");
  DatasetHeader h;
  h.version = take<uint16_t>(is);
  if (h.version != 1) throw IoError(format_msg("unsupported dataset version ", h.version));
  h.sample_count = take<uint32_t>(is);
  h.temporal_len = take<uint16_t>(is);
  for (auto& d : h.volume_dims) d = take<uint16_t>(is);
  for (auto& p : h.voxel_pitch_mm) p = take<float>(is);
  h.master_seed = take<uint64_t>(is);
  h.config_hash = take<uint64_t>(is);
  h.voxel_dtype = take<uint8_t>(is);
  if (h.voxel_dtype > 1) throw IoError(format_msg("unknown voxel dtype ", int(h.voxel_dtype)));
  return h;
}

void write_sample(std::ostream& os, const DatasetHeader& h, const MotionSample& s) {
  put(os, s.roi_id);
  for (const auto& t : s.targets)
    for (double v : t) put(os, static_cast<float>(v));
  int64_t n = int64_t(h.temporal_len) * h.voxels_per_volume();
  if (static_cast<int64_t>(s.volumes.size()) != n)
    throw IoError(format_msg("sample holds ", s.volumes.size(), " voxels, container expects ", n));
  if (h.voxel_dtype == 0) {
    os.write(reinterpret_cast<const char*>(s.volumes.data()), n * 4);
  } else {
    std::vector<uint8_t> q(n);
    for (int64_t i = 0; i < n; ++i)
      q[i] = static_cast<uint8_t>(std::lround(std::clamp(s.volumes[i], 0.0f, 1.0f) * 255.0f));
    os.write(reinterpret_cast<const char*>(q.data()), n);
  }
}

MotionSample read_sample(std::istream& is, const DatasetHeader& h) {
  MotionSample s;
  s.roi_id = take<uint32_t>(is);
  for (auto& t : s.targets)
    for (auto& v : t) v = take<float>(is);
  s.volume_size = {h.volume_dims[0], h.volume_dims[1], h.volume_dims[2]};
  int64_t n = int64_t(h.temporal_len) * h.voxels_per_volume();
  s.volumes.resize(n);
  if (h.voxel_dtype == 0) {
    is.read(reinterpret_cast<char*>(s.volumes.data()), n * 4);
  } else {
    std::vector<uint8_t> q(n);
    is.read(reinterpret_cast<char*>(q.data()), n);
    for (int64_t i = 0; i < n; ++i) s.volumes[i] = static_cast<float>(q[i]) / 255.0f;
  }
  if (!is) throw IoError("dataset file truncated inside a sample record");
  return s;
}

}  // namespace

int64_t DatasetHeader::sample_bytes() const {
  int64_t voxel_bytes = voxel_dtype == 0 ? 4 : 1;
  // roi_id + 4 target vectors of 3 f32 + voxel payload
  return 4 + 48 + int64_t(temporal_len) * voxels_per_volume() * voxel_bytes;
}

struct DatasetWriter::Impl {
  std::string final_path;
  std::string tmp_path;
  std::ofstream os;
  DatasetHeader header;
  uint32_t written = 0;
  bool finalized = false;
};

DatasetWriter::DatasetWriter(const std::string& path, DatasetHeader header)
    : impl_(std::make_unique<Impl>()) {
  impl_->final_path = path;
  impl_->tmp_path = path + ".tmp";
  impl_->header = header;
  impl_->os.open(impl_->tmp_path, std::ios::binary | std::ios::trunc);
  if (!impl_->os) throw IoError(format_msg("cannot open ", impl_->tmp_path, " for writing"));
  write_header(impl_->os, impl_->header);
}

DatasetWriter::~DatasetWriter() {
  if (impl_ && !impl_->finalized) {
    try {
      finalize();
    } catch (...) {
    }
  }
}

void DatasetWriter::append(const MotionSample& s) {
  write_sample(impl_->os, impl_->header, s);
  impl_->written++;
}

void DatasetWriter::finalize() {
  if (impl_->finalized) return;
  if (impl_->written != impl_->header.sample_count)
    throw IoError(format_msg("dataset writer got ", impl_->written, " samples, header declares ",
                             impl_->header.sample_count));
  impl_->os.flush();
  impl_->os.close();
  if (!impl_->os) throw IoError("dataset write failed");
  std::filesystem::rename(impl_->tmp_path, impl_->final_path);
  impl_->finalized = true;
}

DatasetHeader read_dataset_header(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(format_msg("cannot open dataset ", path));
  DatasetHeader h = parse_header(is);
  int64_t expected = kHeaderBytes + int64_t(h.sample_count) * h.sample_bytes();
  int64_t actual = static_cast<int64_t>(std::filesystem::file_size(path));
  if (expected != actual)
    throw IoError(format_msg("dataset length ", actual, " does not match declared count ",
                             h.sample_count, " (expected ", expected, " bytes)"));
  return h;
}

void for_each_sample(const std::string& path,
                     const std::function<void(int64_t, const MotionSample&)>& fn) {
  DatasetHeader h = read_dataset_header(path);
  std::ifstream is(path, std::ios::binary);
  is.seekg(kHeaderBytes);
  for (int64_t i = 0; i < h.sample_count; ++i) {
    MotionSample s = read_sample(is, h);
    fn(i, s);
  }
}

Dataset load_dataset(const std::string& path) {
  Dataset ds;
  ds.header = read_dataset_header(path);
  ds.samples.reserve(ds.header.sample_count);
  std::ifstream is(path, std::ios::binary);
  is.seekg(kHeaderBytes);
  for (int64_t i = 0; i < ds.header.sample_count; ++i)
    ds.samples.push_back(read_sample(is, ds.header));
  return ds;
}

void save_dataset(const std::string& path, const Dataset& ds) {
  DatasetHeader h = ds.header;
  h.sample_count = static_cast<uint32_t>(ds.samples.size());
  DatasetWriter w(path, h);
  for (const auto& s : ds.samples) w.append(s);
  w.finalize();
}

}  // namespace oct4d
