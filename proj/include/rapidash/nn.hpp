#pragma once

#include <string>
#include <vector>

#include "rapidash/invariants.hpp"
#include "rapidash/tensor.hpp"

namespace rapidash {

// Which geometric inputs are fed to the network and how. Supplying vector
// quantities "as scalars" feeds their global components as plain channels,
// which breaks part of the equivariance; supplying them "as vectors" projects
// them onto the orientation fiber, which preserves it.
struct InputSpec {
  bool coords_as_scalars = false;
  bool coords_as_vectors = false;
  bool aux_as_scalars = false;
  bool aux_as_vectors = false;
  bool global_frame = false;
  int onehot_channels = 0;
};

// Feature field f(x_i, n_k) stored as a (P, O, C) tensor. O = 1 degenerates
// to a plain R^3 feature field.
struct FiberField {
  Tensor values;

  int points() const { return values.dim(0); }
  int orientations() const { return values.dim(1); }
  int channels() const { return values.dim(2); }
};

// Input channel count produced by embed_features for a cloud with n_scalar
// scalar features and n_aux auxiliary vector features.
int embed_channels(const InputSpec& spec, int n_scalar, int n_aux);

// Raw (constant) embedding channels, concatenated in this fixed order:
//   [scalar features, broadcast over fiber]
//   [coords_as_scalars: 3 channels x_i, broadcast]
//   [coords_as_vectors: 1 channel x_i . n_k]
//   [aux_as_scalars: 3 channels per aux vector, broadcast]
//   [aux_as_vectors: 1 channel v_i . n_k per aux vector]
//   [global_frame: 3 channels e_m . n_k for the cloud's pose frame axes]
// Vector-style inputs require a real fiber (O >= 2).
Tensor embed_features(const PointCloud& cloud, const SphereGrid& grid, const InputSpec& spec);

// ---- polynomial kernels ----------------------------------------------------

// Number of monomials of total degree <= degree in n_vars variables.
int monomial_count(int n_vars, int degree = 2);

// N x M monomial matrix in graded lexicographic order:
// 1; a1 .. aV; a1*a1, a1*a2, .., a1*aV, a2*a2, .., aV*aV.
MatX monomial_matrix(const MatX& attrs, int degree = 2);

// Depthwise kernel values (N, C) from monomials (N, M) and coefficients
// (C, M).
Tensor poly_kernel(const Tensor& monomials, const Tensor& coeffs);

// ---- convolution context ----------------------------------------------------

// Geometry-derived constants shared by every block at one resolution level.
// spatial_monomials rows follow the edge order of the graph; for fiber
// regimes they are per (edge, fiber) with row index e*O + k. fiber_ops[m] is
// gram^m scaled by the quadrature weights column-wise.
struct ConvContext {
  int points = 0;
  int fiber = 1;
  int edges = 0;
  std::vector<int> edge_src;
  std::vector<int> edge_dst;
  Tensor spatial_monomials;
  int spatial_vars = 0;
  std::vector<MatX> fiber_ops;
};

ConvContext make_conv_context(const PointCloud& cloud, const NeighborGraph& graph,
                              const SphereGrid& grid, Regime regime, double geom_scale);

// ---- layers ----------------------------------------------------------------

struct LinearLayer {
  Tensor w, b;  // (Cin, Cout), (Cout)
  Tensor forward(const Tensor& x) const;  // x (..., Cin) flattened to rows
};

// ConvNext-style block around the separable group convolution:
//   (1) depthwise spatial message passing, kernel on the spatial attributes,
//       matched fiber transport (l = k) for fiber regimes
//   (2) depthwise fiber convolution keyed on n_k . n_l (fiber regimes only)
//   (3) LayerNorm over channels, learnable affine
//   (4) pointwise linear C -> 4C, GELU, linear 4C -> C
//   (5) residual add of the block input
struct ConvBlock {
  Regime regime = Regime::se3_r3s2;
  int channels = 0;
  Tensor spatial_coeffs;  // (C, M_spatial)
  Tensor fiber_coeffs;    // (C, 3), fiber regimes only
  Tensor ln_gamma, ln_beta;
  LinearLayer mlp1, mlp2;

  // Stages 1-2 only; the pre-norm, pre-residual convolution output.
  Tensor conv_stages(const Tensor& field, const ConvContext& ctx) const;
  Tensor forward(const Tensor& field, const ConvContext& ctx, int layer_index) const;
};

struct EmbedLayer {
  LinearLayer lift;
  Tensor forward(const Tensor& raw) const;  // (P, O, Cin) -> (P, O, C)
};

// Weighted fiber mean (1/4pi) sum_k w_k f(., k, .), shape (P, C).
Tensor fiber_mean(const Tensor& field, const SphereGrid& grid);

enum class ReadoutScope { per_point, global };

struct InvariantReadout {
  LinearLayer head;
  ReadoutScope scope = ReadoutScope::per_point;
  // groups: half-open point ranges of the batch groups (global scope).
  Tensor forward(const Tensor& field, const SphereGrid& grid,
                 const std::vector<std::pair<int, int>>& groups) const;
};

// v_i = (3/4pi) sum_k w_k s(x_i, n_k) n_k after a learnable channel-to-1 map;
// the 3/(4pi) factor makes the projection exact on linear signals under
// exact quadrature.
struct VectorReadout {
  Tensor w;  // (C, 1)
  Tensor forward(const Tensor& field, const SphereGrid& grid) const;  // (P, 3)
};

// Inverse-distance upsampling of a coarse field through an InterpPlan.
Tensor interpolate_up(const Tensor& coarse_field, const InterpPlan& plan);

// Gaussian init helper; values drawn in a fixed coordinate order.
ArrayX normal_init(Rng& rng, Eigen::Index n, double stddev);

}  // namespace rapidash
