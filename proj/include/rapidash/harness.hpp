#pragma once

#include <string>
#include <vector>

#include "rapidash/model.hpp"

namespace rapidash {

enum class SymmetryGroup { rotation, translation, permutation };
enum class GridMode { fixed, joint };

// Measured symmetry violation over randomized trials. Violations are
// relative with a 1e-8 floor; reports are reproducible from the seed.
struct SymmetryReport {
  std::string group;   // rotation | translation | permutation | joint-rotation-with-grid
  std::string mode;    // fixed-grid | joint-grid
  std::string metric;  // relative | vector-rotated-difference
  int trials = 0;
  double max_violation = 0;
  double mean_violation = 0;
  uint64_t seed = 0;
};

// Invariance of a scalar readout under the group action. Rotation trials use
// pure rotations and translation trials pure translations, so each subgroup
// is probed on its own; full SE(3) invariance is their conjunction. In joint
// mode the sphere grid rotates together with the cloud, which removes
// discretization error and tests the exact weight-sharing constraint; fixed
// mode quantifies the practical approximate equivariance of the discretized
// fiber.
SymmetryReport measure_invariance(const Model& model, const std::vector<PointCloud>& clouds,
                                  int n_trials, SymmetryGroup group, GridMode mode,
                                  uint64_t seed);

// Equivariance of a vector readout: compares f(gX) with R f(X).
SymmetryReport measure_vector_equivariance(const Model& model,
                                           const std::vector<PointCloud>& clouds, int n_trials,
                                           SymmetryGroup group, GridMode mode, uint64_t seed);

// CSV with header group,mode,trials,max,mean,seed.
std::string reports_to_csv(const std::vector<SymmetryReport>& reports);

// Direct double-sum evaluation of the separable kernel coupling, no staging:
//   out(i,k,c) = sum_j sum_l kR3_c(a1, a2 at fiber l) kS2_c(n_k.n_l) w_l f(j,l,c)
// (R^3 regimes collapse to plain message passing with the polynomial kernel).
// Tiny instances only; the reference the separable implementation must match.
Tensor brute_force_conv_oracle(const PointCloud& cloud, const NeighborGraph& graph,
                               const SphereGrid& grid, Regime regime, const Tensor& field,
                               const MatX& spatial_coeffs, const MatX& fiber_coeffs,
                               double geom_scale);

// Random test cloud: positions ~ N(0, spread^2), scalar features ~ N(0,1),
// aux vectors ~ N(0,1); one batch group.
PointCloud make_random_cloud(Rng& rng, int n_points, int n_scalars, int n_aux,
                             double spread = 1.0);

}  // namespace rapidash
