#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rapidash/common.hpp"
#include "rapidash/geom.hpp"

namespace rapidash {

// Point cloud with optional per-point scalar/vector features and labels.
// batch_ids partition points into contiguous groups; neighborhoods, sampling
// and pooled readouts never cross group boundaries.
//
// `poses` holds one canonical reference frame per batch group (empty means
// identity everywhere, i.e. aligned data). transform_cloud rotates the poses
// together with the geometry, which is what makes a global-frame input
// transform jointly in equivariance tests.
struct PointCloud {
  Mat3X positions;                        // P x 3
  MatX scalar_features;                   // P x S (S >= 0)
  std::vector<Mat3X> vector_features;     // V entries, each P x 3
  std::vector<int> batch_ids;             // P, monotone non-decreasing
  std::vector<int> labels_int;            // optional, size P or empty
  Mat3X labels_vec;                       // optional, P x 3 or 0 x 3
  std::vector<Rotation3> poses;           // per group; empty = identity

  int size() const { return static_cast<int>(positions.rows()); }
  int num_scalar_features() const { return static_cast<int>(scalar_features.cols()); }
  int num_vector_features() const { return static_cast<int>(vector_features.size()); }
  int num_groups() const;
  // Half-open [begin, end) point ranges of the batch groups.
  std::vector<std::pair<int, int>> group_ranges() const;
  Rotation3 group_pose(int group) const {
    return poses.empty() ? Rotation3::identity() : poses.at(group);
  }
};

void validate_cloud(const PointCloud& cloud);

enum class NeighborMode { knn, radius };

// Neighborhoods in CSR form. For each target i, neighbors[offsets[i] ..
// offsets[i+1]) are sorted by (distance, index), so reduction order does not
// depend on point labels on tie-free clouds.
struct NeighborGraph {
  NeighborMode mode = NeighborMode::knn;
  double param = 0;
  std::vector<int> offsets;    // P+1
  std::vector<int> neighbors;  // E, source index j per edge
  std::vector<int> targets;    // E, target index i per edge (expanded CSR)

  int num_targets() const { return static_cast<int>(offsets.size()) - 1; }
  int num_edges() const { return static_cast<int>(neighbors.size()); }
};

// knn: the min(k, group size) nearest points of the group. Non-self
// candidates are ranked by (distance, index); the self loop is appended last
// and only used when k >= group size.
// radius: all j != i with |x_j - x_i| <= r, plus a self loop when empty.
NeighborGraph build_neighbors(const PointCloud& cloud, NeighborMode mode, double param);

// Greedy max-min subsampling per batch group, seeded at the group's lowest
// index. Returns ceil(ratio * group size) indices per group, sorted.
std::vector<int> farthest_point_sample(const PointCloud& cloud, double ratio);

// Inverse-distance interpolation stencil from coarse to fine positions:
// fine value i = sum_m w(i,m) * coarse[idx(i,m)], weights 1/(d + 1e-8)
// normalized over the k nearest coarse points.
struct InterpPlan {
  Eigen::MatrixXi indices;  // P_fine x k
  MatX weights;             // P_fine x k, rows sum to 1
};
InterpPlan make_interp_plan(const Mat3X& coarse_pos, const Mat3X& fine_pos, int k);

PointCloud transform_cloud(const PointCloud& cloud, const RigidMotion& g);

// Restriction to a subset of points (feature/label rows follow).
PointCloud subset_cloud(const PointCloud& cloud, const std::vector<int>& indices);

// Concatenates clouds into one batch; batch_ids are renumbered consecutively.
PointCloud merge_clouds(const std::vector<PointCloud>& clouds,
                        const std::vector<int>& which);

// CSV format: header x,y,z[,s0..][,v0x,v0y,v0z..][,lx,ly,lz][,label][,batch].
std::string cloud_to_csv(const PointCloud& cloud);
PointCloud cloud_from_csv(const std::string& csv);

}  // namespace rapidash
