#pragma once

#include <string>

#include "rapidash/geom.hpp"
#include "rapidash/pointcloud.hpp"

namespace rapidash {

// Weight-sharing regime of the convolution kernels: base space plus the
// group the pairwise attributes are invariant under.
enum class Regime { se3_r3, t3_r3, se3_r3s2, none_r3, none_r3s2 };

std::string regime_name(Regime r);
Regime regime_from_name(const std::string& name);
bool regime_has_fiber(Regime r);

// Pairwise attributes conditioning the kernels.
//
// Row layouts by regime:
//   se3_r3     E x 1    |x_j - x_i|
//   t3_r3      E x 3    x_j - x_i
//   none_r3    E x 6    (x_j - x_i, x_i)
//   none_r3s2  E x 6    same as none_r3; the fiber stage keys on the grid Gram
//   se3_r3s2   (E*O*O) x 3   (a1, a2, a3) for every edge-fiber pair, row
//              index (e*O + k)*O + l with k the fiber at target i and l the
//              fiber at source j:
//                a1 = n_k . (x_j - x_i)
//                a2 = |(x_j - x_i) - a1 n_k|
//                a3 = n_k . n_l
struct PairAttributes {
  MatX values;
  Regime regime = Regime::se3_r3;
  int fiber_size = 1;

  int channels() const { return static_cast<int>(values.cols()); }
};

PairAttributes attrs_se3_r3(const PointCloud& cloud, const NeighborGraph& graph);
PairAttributes attrs_t3_r3(const PointCloud& cloud, const NeighborGraph& graph);
PairAttributes attrs_se3_r3s2(const PointCloud& cloud, const NeighborGraph& graph,
                              const SphereGrid& grid);
PairAttributes attrs_none(const PointCloud& cloud, const NeighborGraph& graph);

// Matched-fiber (l = k) spatial attributes used by the separable scheme:
// (E*O) x 2 rows of (a1, a2), row index e*O + k.
MatX spatial_attrs_r3s2(const PointCloud& cloud, const NeighborGraph& graph,
                        const SphereGrid& grid);

// Mean neighbor distance; the geometric normalization scale for kernel
// attributes with length units.
double mean_neighbor_distance(const PointCloud& cloud, const NeighborGraph& graph);

}  // namespace rapidash
