#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "poseref/graph.hpp"
#include "poseref/ops.hpp"
#include "poseref/skeleton.hpp"
#include "poseref/tensor.hpp"

namespace poseref {

struct RefinerConfig {
  int frames = 3;           // window length, odd
  int joints = 17;
  int in_channels = 3;
  int hidden = 64;
  int layers = 3;
  int temporal_kernel = 3;  // odd, "same" padding
  bool use_nonlocal = true;
  bool residual_output = true;  // add the raw center-frame input to the head output

  void validate() const;  // throws std::invalid_argument
};

// Pose refinement trunk: input standardization, a stack of graph-convolution
// layers (six-class spatial step, temporal convolution, batch norm, residual,
// relu), a global attention block, then a linear head on the center frame. The
// head and the attention output projection start at zero, so a freshly built
// model with residual_output returns its center-frame input bit for bit.
class RefinerModel {
 public:
  RefinerModel(const RefinerConfig& config, const SkeletonTopology& topology,
               std::uint64_t seed);

  // x is (N, C, T, V) or (N, C, T, V, M); returns (N, 3, V) or (N, 3, V, M).
  // Training mode drives batch-norm batch statistics, inference uses the frozen
  // running averages.
  Tensor forward(const Tensor& x, bool training);

  const RefinerConfig& config() const { return config_; }
  const SkeletonTopology& topology() const { return topology_; }
  const StGraph& graph() const { return graph_; }
  std::uint64_t init_seed() const { return init_seed_; }

  std::vector<Tensor> parameters() const;
  // Stable text names, in the same order as parameters(); checkpoints key blobs
  // by these names.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  // Non-trainable state: batch-norm running statistics and the input
  // standardization vectors.
  std::vector<std::pair<std::string, std::vector<double>*>> named_buffers();
  std::vector<std::pair<std::string, const std::vector<double>*>> named_buffers() const;

  // Per-channel statistics of the training inputs; the forward pass standardizes
  // with them and scales predicted offsets back by the std.
  void set_input_stats(std::vector<double> mean, std::vector<double> std);
  const std::vector<double>& input_mean() const { return input_mean_; }
  const std::vector<double>& input_std() const { return input_std_; }

  std::size_t parameter_count() const;

 private:
  struct Layer {
    std::array<Tensor, 6> class_kernels;  // (C_in, C_out) each
    Tensor temporal;                      // (C_out, C_out, k_t)
    Tensor bn_gamma, bn_beta;             // (C_out)
    BatchNormStats bn_stats;
    Tensor res_proj;                      // (C_in, C_out); undefined when C_in == C_out
  };

  Tensor forward4(const Tensor& x, bool training);
  Tensor layer_forward(const Tensor& x, Layer& layer, bool training);
  Tensor attention_forward(const Tensor& x);

  RefinerConfig config_;
  SkeletonTopology topology_;
  StGraph graph_;
  std::uint64_t init_seed_ = 0;

  std::vector<Layer> layers_;
  Tensor attn_q_, attn_k_, attn_v_, attn_out_;  // (C,d) x3 and (d,C)
  Tensor head_w_, head_b_;                      // (C,3), (3)
  std::vector<double> input_mean_, input_std_;
};

}  // namespace poseref
