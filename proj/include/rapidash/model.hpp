#pragma once

#include <string>
#include <vector>

#include "rapidash/nn.hpp"

namespace rapidash {

enum class ReadoutKind { invariant_global, invariant_perpoint, vector_out };
std::string readout_name(ReadoutKind r);
ReadoutKind readout_from_name(const std::string& name);

enum class EffectiveEquivariance { se3, so3, t3, none };
std::string effective_equivariance_name(EffectiveEquivariance e);

struct ModelConfig {
  Regime regime = Regime::se3_r3s2;
  int layers = 7;
  int channels = 256;
  int inflated_channels = 0;  // > 0 replaces channels at build time
  int fiber_size = 8;         // 0 selects the R^3 base (O = 1 internally)
  InputSpec input_spec;
  ReadoutKind readout = ReadoutKind::invariant_global;
  std::vector<double> scales;  // FPS ratios, first must be 1.0; empty = single scale
  uint64_t seed = 0;

  // Input signature and task plumbing.
  int in_scalars = 1;      // scalar feature channels the clouds carry
  int in_aux_vectors = 0;  // auxiliary vector features the clouds carry
  int target_dim = 1;      // invariant readout width
  int neighbors_k = 16;
  GridMethod grid_method = GridMethod::fibonacci;

  int grid_size() const { return fiber_size == 0 ? 1 : fiber_size; }
  int width() const { return inflated_channels > 0 ? inflated_channels : channels; }
};

void validate_config(const ModelConfig& cfg);

// The largest group the configured model is actually equivariant under,
// given both the internal kernel constraint and the input specification.
// The global frame is not a breaking flag: it transforms jointly.
EffectiveEquivariance effective_equivariance(const ModelConfig& cfg);

// Geometry-derived constants for one input cloud, reusable across forward
// passes and training steps on that cloud.
struct ForwardPlan {
  struct Level {
    PointCloud cloud;
    ConvContext ctx;
    std::vector<std::pair<int, int>> groups;
    std::vector<int> down_indices;  // FPS selection into this level (empty on last)
    InterpPlan up_plan;             // interpolation from next level back to this one
  };
  std::vector<Level> levels;
  Tensor embed_raw;
};

class Model {
 public:
  ModelConfig config;
  SphereGrid grid;
  EmbedLayer embed;
  std::vector<ConvBlock> blocks;
  std::vector<int> blocks_per_stage;  // encoder stages then decoder stages
  std::vector<LinearLayer> fuse;      // one per decoder stage (skip concat -> C)
  InvariantReadout inv_readout;
  VectorReadout vec_readout;

  // Attribute normalization scale; set from the training set.
  double geometry_scale = 1.0;

  int num_stages() const { return static_cast<int>(blocks_per_stage.size()); }
  int num_levels() const { return (num_stages() + 1) / 2; }

  ForwardPlan prepare(const PointCloud& cloud) const;
  Tensor forward(const ForwardPlan& plan) const;
  Tensor forward(const PointCloud& cloud) const;

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  long parameter_count() const;
};

Model build_model(const ModelConfig& cfg);

// Closed-form parameter count implied by the config; build_model must agree.
long expected_parameter_count(const ModelConfig& cfg);

}  // namespace rapidash
