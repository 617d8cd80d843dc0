#ifndef OCT4D_MODEL_HPP
#define OCT4D_MODEL_HPP

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "oct4d/acquisition.hpp"
#include "oct4d/optim.hpp"
#include "oct4d/tensor.hpp"

namespace oct4d {

enum class Variant { TwoPath3D, STwoPath3D, FivePath3D, Dense4D, FivePath4D };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);
std::vector<Variant> all_variants();

// Declarative description of one architecture. All five variants share the
// same three-layer stem (weights tied across paths) and the same densely
// connected trunk: dense_blocks blocks of layers_per_block ReLU->conv
// layers adding growth_rate channels each, spatial 2x average pooling
// between blocks, global average pooling, and a linear regression head
// with 3 outputs (9 when regularized_head, predicting the current and two
// preceding shifts).
struct ModelSpec {
  Variant variant = Variant::FivePath4D;
  int growth_rate = 10;
  int dense_blocks = 3;
  int layers_per_block = 2;
  std::array<int, 3> stem_channels = {10, 15, 20};
  int spatial_kernel = 3;
  int temporal_kernel = 3;  // rank-4 convs only; temporal extent stays zero-padded
  bool regularized_head = false;
  int temporal_len = 5;
  std::array<int64_t, 3> volume_size = {32, 32, 32};

  int head_outputs() const { return regularized_head ? 9 : 3; }
  bool is_4d() const { return variant == Variant::Dense4D || variant == Variant::FivePath4D; }
};

class Model {
 public:
  // Builds the topology and initializes parameters (fan-in normal weights,
  // zero biases) deterministically from the seed.
  Model(const ModelSpec& spec, uint64_t seed);

  // Optional intermediate taps for tests and inspection.
  struct Trace {
    std::optional<Tensor<float>> temporal_stack;  // 4D variants: [B,C,T,X,Y,Z]
  };

  // volumes[t]: [B,1,X,Y,Z] in [0,1], t = 0..temporal_len-1. Returns [B,3]
  // ([B,9] regularized). Throws on wrong sequence length or geometry.
  Tensor<float> forward(const std::vector<Tensor<float>>& volumes, Trace* trace = nullptr) const;

  // The weight-shared two-volume core (stems -> channel concat -> dense
  // trunk -> head); the pairwise-sum variant applies it to each
  // consecutive pair. Exposed for the summation-identity checks.
  Tensor<float> pair_core_forward(const Tensor<float>& a, const Tensor<float>& b) const;

  int64_t count_params() const { return params_.total_params(); }
  std::string describe() const;

  const ModelSpec& spec() const { return spec_; }
  ParameterStore<float>& params() { return params_; }
  const ParameterStore<float>& params() const { return params_; }

 private:
  Tensor<float> stem_forward(const Tensor<float>& x) const;
  Tensor<float> dense_forward(const Tensor<float>& x) const;
  Tensor<float> head_forward(const Tensor<float>& features) const;
  void build_params(uint64_t seed);
  void validate_geometry() const;
  int dense_input_channels() const;

  ModelSpec spec_;
  ParameterStore<float> params_;
};

// Assembles [B,1,X,Y,Z] per-time-step tensors from a batch of samples,
// recentring [0,1] intensities to [-0.5, 0.5].
std::vector<Tensor<float>> batch_to_tensors(const std::vector<const MotionSample*>& batch);

// Regression targets: [B,3] final shift, or [B,9] = (t4, t3, t2) when
// `regularized` (the two preceding shifts supervise the extra outputs).
Tensor<float> batch_targets(const std::vector<const MotionSample*>& batch, bool regularized);

}  // namespace oct4d

#endif
