#include "oct4d/model.hpp"

#include <algorithm>
#include <sstream>

#include "oct4d/common.hpp"
#include "oct4d/ops.hpp"

namespace oct4d {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::TwoPath3D: return "two-path-3d";
    case Variant::STwoPath3D: return "s-two-path-3d";
    case Variant::FivePath3D: return "five-path-3d";
    case Variant::Dense4D: return "dense-4d";
    case Variant::FivePath4D: return "five-path-4d";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  for (Variant v : all_variants())
    if (variant_name(v) == name) return v;
  throw ConfigError(format_msg("unknown model variant '", name,
                               "' (expected one of: two-path-3d, s-two-path-3d, five-path-3d, "
                               "dense-4d, five-path-4d)"));
}

std::vector<Variant> all_variants() {
  return {Variant::TwoPath3D, Variant::STwoPath3D, Variant::FivePath3D, Variant::Dense4D,
          Variant::FivePath4D};
}

namespace {

int64_t strided_out(int64_t d, int k, int s) { return (d + 2 * (k / 2) - k) / s + 1; }

}  // namespace

int Model::dense_input_channels() const {
  int c3 = spec_.stem_channels[2];
  switch (spec_.variant) {
    case Variant::TwoPath3D:
    case Variant::STwoPath3D: return 2 * c3;
    case Variant::FivePath3D: return spec_.temporal_len * c3;
    case Variant::Dense4D:
    case Variant::FivePath4D: return c3;
  }
  return c3;
}

void Model::validate_geometry() const {
  if (spec_.temporal_len != 5)
    throw ConfigError("sequence length is fixed at 5 volumes");
  if (spec_.growth_rate < 1 || spec_.dense_blocks < 1 || spec_.layers_per_block < 1)
    throw ConfigError("growth rate, dense blocks and layers per block must be >= 1");
  if (spec_.spatial_kernel % 2 == 0 || spec_.temporal_kernel % 2 == 0)
    throw ConfigError("kernel extents must be odd (zero padding keeps extents)");
  // stem halves the grid once; each pooling between blocks halves it again
  std::array<int64_t, 3> d = spec_.volume_size;
  for (int a = 0; a < 3; ++a) {
    d[a] = strided_out(d[a], spec_.spatial_kernel, 2);
    for (int b = 0; b + 1 < spec_.dense_blocks; ++b) {
      if (d[a] < 2)
        throw ConfigError(format_msg("volume axis ", a, " collapses below the pooling window ",
                                     "after block ", b, "; need larger volumes or fewer blocks"));
      d[a] /= 2;
    }
    if (d[a] < 1) throw ConfigError(format_msg("volume axis ", a, " collapses to zero"));
  }
}

Model::Model(const ModelSpec& spec, uint64_t seed) : spec_(spec) {
  validate_geometry();
  build_params(seed);
}

void Model::build_params(uint64_t seed) {
  const int ks = spec_.spatial_kernel;
  const int kt = spec_.temporal_kernel;
  const bool stem4d = spec_.variant == Variant::Dense4D;
  const int64_t k3 = int64_t(ks) * ks * ks;
  (void)k3;

  auto add_conv = [&](const std::string& name, int cin, int cout, bool rank4) {
    std::vector<int64_t> wshape = {cout, cin};
    if (rank4) wshape.push_back(kt);
    wshape.insert(wshape.end(), {int64_t(ks), int64_t(ks), int64_t(ks)});
    params_.add(name + ".weight", Tensor<float>::zeros(wshape));
    params_.add(name + ".bias", Tensor<float>::zeros({cout}));
  };

  int c1 = spec_.stem_channels[0], c2 = spec_.stem_channels[1], c3 = spec_.stem_channels[2];
  add_conv("stem.conv1", 1, c1, stem4d);
  add_conv("stem.conv2", c1, c2, stem4d);
  add_conv("stem.conv3", c2, c3, stem4d);

  int cin = dense_input_channels();
  for (int b = 0; b < spec_.dense_blocks; ++b) {
    for (int l = 0; l < spec_.layers_per_block; ++l) {
      add_conv(format_msg("dense.b", b + 1, ".l", l + 1), cin + l * spec_.growth_rate,
               spec_.growth_rate, spec_.is_4d());
    }
    cin += spec_.layers_per_block * spec_.growth_rate;
  }

  params_.add("head.weight", Tensor<float>::zeros({spec_.head_outputs(), cin}));
  params_.add("head.bias", Tensor<float>::zeros({spec_.head_outputs()}));

  init_fan_in(params_, seed);
}

Tensor<float> Model::stem_forward(const Tensor<float>& x) const {
  const bool rank4 = spec_.variant == Variant::Dense4D;
  const int64_t ps = spec_.spatial_kernel / 2;
  const int64_t pt = spec_.temporal_kernel / 2;
  std::vector<int64_t> s1, s2, pad;
  if (rank4) {
    s1 = {1, 1, 1, 1};
    s2 = {1, 2, 2, 2};  // never stride the temporal axis
    pad = {pt, ps, ps, ps};
  } else {
    s1 = {1, 1, 1};
    s2 = {2, 2, 2};
    pad = {ps, ps, ps};
  }
  auto h1 = conv_nd(x, params_.get("stem.conv1.weight"), params_.get("stem.conv1.bias"), s1, pad);
  auto h2 = conv_nd(relu(h1), params_.get("stem.conv2.weight"), params_.get("stem.conv2.bias"),
                    s2, pad);
  auto h3 = conv_nd(relu(h2), params_.get("stem.conv3.weight"), params_.get("stem.conv3.bias"),
                    s1, pad);
  return h3;
}

Tensor<float> Model::dense_forward(const Tensor<float>& x) const {
  const bool rank4 = spec_.is_4d();
  const int64_t ps = spec_.spatial_kernel / 2;
  const int64_t pt = spec_.temporal_kernel / 2;
  std::vector<int64_t> stride1 = rank4 ? std::vector<int64_t>{1, 1, 1, 1}
                                       : std::vector<int64_t>{1, 1, 1};
  std::vector<int64_t> pad = rank4 ? std::vector<int64_t>{pt, ps, ps, ps}
                                   : std::vector<int64_t>{ps, ps, ps};
  std::vector<int64_t> pool_w = rank4 ? std::vector<int64_t>{1, 2, 2, 2}
                                      : std::vector<int64_t>{2, 2, 2};

  Tensor<float> cur = x;
  for (int b = 0; b < spec_.dense_blocks; ++b) {
    std::vector<Tensor<float>> feats = {cur};
    for (int l = 0; l < spec_.layers_per_block; ++l) {
      Tensor<float> in = feats.size() == 1 ? feats[0] : concat(feats, 1);
      auto name = format_msg("dense.b", b + 1, ".l", l + 1);
      auto y = conv_nd(relu(in), params_.get(name + ".weight"), params_.get(name + ".bias"),
                       stride1, pad);
      feats.push_back(y);
    }
    cur = concat(feats, 1);
    if (b + 1 < spec_.dense_blocks) cur = avg_pool_nd(cur, pool_w, pool_w);
  }
  return cur;
}

Tensor<float> Model::head_forward(const Tensor<float>& features) const {
  auto pooled = global_avg_pool(features);
  return linear(pooled, params_.get("head.weight"), params_.get("head.bias"));
}

Tensor<float> Model::pair_core_forward(const Tensor<float>& a, const Tensor<float>& b) const {
  auto ha = stem_forward(a);
  auto hb = stem_forward(b);
  auto h = concat<float>({ha, hb}, 1);
  return head_forward(dense_forward(h));
}

Tensor<float> Model::forward(const std::vector<Tensor<float>>& volumes, Trace* trace) const {
  if (static_cast<int>(volumes.size()) != spec_.temporal_len)
    fail_contract("forward expects a sequence of ", spec_.temporal_len, " volumes, got ",
                  volumes.size());
  for (const auto& v : volumes) {
    if (v.rank() != 5 || v.shape()[1] != 1)
      fail_contract("volumes must have shape [B,1,X,Y,Z], got ", shape_str(v.shape()));
    for (int a = 0; a < 3; ++a)
      if (v.shape()[2 + a] != spec_.volume_size[a])
        fail_contract("volume extent ", v.shape()[2 + a], " on axis ", a,
                      " does not match the model's ", spec_.volume_size[a]);
  }

  switch (spec_.variant) {
    case Variant::TwoPath3D:
      return pair_core_forward(volumes.front(), volumes.back());
    case Variant::STwoPath3D: {
      Tensor<float> sum;
      for (int i = 0; i + 1 < spec_.temporal_len; ++i) {
        auto y = pair_core_forward(volumes[i], volumes[i + 1]);
        sum = i == 0 ? y : add(sum, y);
      }
      return sum;
    }
    case Variant::FivePath3D: {
      std::vector<Tensor<float>> stems;
      stems.reserve(volumes.size());
      for (const auto& v : volumes) stems.push_back(stem_forward(v));
      return head_forward(dense_forward(concat(stems, 1)));
    }
    case Variant::Dense4D: {
      auto seq = stack(volumes, 2);  // [B,1,T,X,Y,Z]
      return head_forward(dense_forward(stem_forward(seq)));
    }
    case Variant::FivePath4D: {
      std::vector<Tensor<float>> stems;
      stems.reserve(volumes.size());
      for (const auto& v : volumes) stems.push_back(stem_forward(v));
      auto seq = stack(stems, 2);  // temporal reassembly: [B,C,T,X',Y',Z']
      if (trace) trace->temporal_stack = seq;
      return head_forward(dense_forward(seq));
    }
  }
  fail_contract("unreachable variant");
}

std::string Model::describe() const {
  std::ostringstream os;
  const int c3 = spec_.stem_channels[2];
  os << "model: " << variant_name(spec_.variant) << "\n";
  os << "input: " << spec_.temporal_len << " x [B,1," << spec_.volume_size[0] << ","
     << spec_.volume_size[1] << "," << spec_.volume_size[2] << "]\n";
  std::string dims = spec_.is_4d() ? "4d" : "3d";
  os << "stem (" << (spec_.variant == Variant::Dense4D ? "4d" : "3d")
     << ", shared across paths): conv " << spec_.stem_channels[0] << " -> relu -> conv(s2) "
     << spec_.stem_channels[1] << " -> relu -> conv " << c3 << "\n";
  switch (spec_.variant) {
    case Variant::TwoPath3D:
      os << "fusion: channel concat of stems(x_t0, x_t4) -> " << 2 * c3 << " ch\n";
      break;
    case Variant::STwoPath3D:
      os << "fusion: pairwise cores on consecutive volumes, predictions summed\n";
      break;
    case Variant::FivePath3D:
      os << "fusion: channel concat of five stems -> " << 5 * c3 << " ch\n";
      break;
    case Variant::Dense4D:
      os << "fusion: none (temporal dim convolved throughout)\n";
      break;
    case Variant::FivePath4D:
      os << "fusion: five stems stacked into a temporal axis -> [B," << c3 << ",5,...]\n";
      break;
  }
  int cin = dense_input_channels();
  for (int b = 0; b < spec_.dense_blocks; ++b) {
    os << "dense block " << b + 1 << " (" << dims << "): ";
    for (int l = 0; l < spec_.layers_per_block; ++l) {
      os << "relu-conv(" << cin + l * spec_.growth_rate << "->" << spec_.growth_rate << ") ";
    }
    cin += spec_.layers_per_block * spec_.growth_rate;
    os << "=> " << cin << " ch\n";
    if (b + 1 < spec_.dense_blocks) os << "avg pool 2 (spatial)\n";
  }
  os << "global avg pool -> linear " << cin << " -> " << spec_.head_outputs() << "\n";
  os << "parameters: " << count_params() << "\n";
  return os.str();
}

std::vector<Tensor<float>> batch_to_tensors(const std::vector<const MotionSample*>& batch) {
  if (batch.empty()) fail_contract("empty batch");
  const auto& dims = batch[0]->volume_size;
  const int64_t vox = batch[0]->volume_voxels();
  const int64_t B = static_cast<int64_t>(batch.size());
  std::vector<Tensor<float>> out;
  for (int t = 0; t < 5; ++t) {
    auto tensor = Tensor<float>::zeros({B, 1, dims[0], dims[1], dims[2]});
    for (int64_t i = 0; i < B; ++i) {
      const float* src = batch[i]->volume(t);
      float* dst = tensor.data() + i * vox;
      // recentre [0,1] intensities; the DC component otherwise dominates
      // early features and stalls optimization
      for (int64_t j = 0; j < vox; ++j) dst[j] = src[j] - 0.5f;
    }
    out.push_back(tensor);
  }
  return out;
}

Tensor<float> batch_targets(const std::vector<const MotionSample*>& batch, bool regularized) {
  const int64_t B = static_cast<int64_t>(batch.size());
  const int cols = regularized ? 9 : 3;
  auto t = Tensor<float>::zeros({B, cols});
  for (int64_t i = 0; i < B; ++i) {
    const auto& tg = batch[i]->targets;
    for (int a = 0; a < 3; ++a) t.data()[i * cols + a] = static_cast<float>(tg[3][a]);
    if (regularized)
      for (int a = 0; a < 3; ++a) {
        t.data()[i * cols + 3 + a] = static_cast<float>(tg[2][a]);  // t3 = t_{n-1}
        t.data()[i * cols + 6 + a] = static_cast<float>(tg[1][a]);  // t2 = t_{n-2}
      }
  }
  return t;
}

}  // namespace oct4d
