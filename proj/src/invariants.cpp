#include "rapidash/invariants.hpp"

#include <cmath>

namespace rapidash {

std::string regime_name(Regime r) {
  switch (r) {
    case Regime::se3_r3: return "se3_r3";
    case Regime::t3_r3: return "t3_r3";
    case Regime::se3_r3s2: return "se3_r3s2";
    case Regime::none_r3: return "none_r3";
    case Regime::none_r3s2: return "none_r3s2";
  }
  return "?";
}

Regime regime_from_name(const std::string& name) {
  if (name == "se3_r3") return Regime::se3_r3;
  if (name == "t3_r3") return Regime::t3_r3;
  if (name == "se3_r3s2") return Regime::se3_r3s2;
  if (name == "none_r3") return Regime::none_r3;
  if (name == "none_r3s2") return Regime::none_r3s2;
  throw std::invalid_argument("unknown regime: " + name);
}

bool regime_has_fiber(Regime r) {
  return r == Regime::se3_r3s2 || r == Regime::none_r3s2;
}

namespace {

void check_graph(const PointCloud& cloud, const NeighborGraph& graph) {
  check(graph.num_targets() == cloud.size(), "attrs: graph does not match cloud");
}

}  // namespace

PairAttributes attrs_se3_r3(const PointCloud& cloud, const NeighborGraph& graph) {
  check_graph(cloud, graph);
  const int e = graph.num_edges();
  PairAttributes out;
  out.regime = Regime::se3_r3;
  out.values.resize(e, 1);
  for (int m = 0; m < e; ++m)
    out.values(m, 0) =
        (cloud.positions.row(graph.neighbors[m]) - cloud.positions.row(graph.targets[m])).norm();
  return out;
}

PairAttributes attrs_t3_r3(const PointCloud& cloud, const NeighborGraph& graph) {
  check_graph(cloud, graph);
  const int e = graph.num_edges();
  PairAttributes out;
  out.regime = Regime::t3_r3;
  out.values.resize(e, 3);
  for (int m = 0; m < e; ++m)
    out.values.row(m) =
        cloud.positions.row(graph.neighbors[m]) - cloud.positions.row(graph.targets[m]);
  return out;
}

PairAttributes attrs_none(const PointCloud& cloud, const NeighborGraph& graph) {
  check_graph(cloud, graph);
  const int e = graph.num_edges();
  PairAttributes out;
  out.regime = Regime::none_r3;
  out.values.resize(e, 6);
  for (int m = 0; m < e; ++m) {
    out.values.block(m, 0, 1, 3) =
        cloud.positions.row(graph.neighbors[m]) - cloud.positions.row(graph.targets[m]);
    out.values.block(m, 3, 1, 3) = cloud.positions.row(graph.targets[m]);
  }
  return out;
}

PairAttributes attrs_se3_r3s2(const PointCloud& cloud, const NeighborGraph& graph,
                              const SphereGrid& grid) {
  check_graph(cloud, graph);
  check(grid.size() >= 1, "attrs_se3_r3s2: empty grid");
  const int e = graph.num_edges();
  const int o = grid.size();
  PairAttributes out;
  out.regime = Regime::se3_r3s2;
  out.fiber_size = o;
  out.values.resize(static_cast<Eigen::Index>(e) * o * o, 3);
  const MatX gram = grid.gram();
  for (int m = 0; m < e; ++m) {
    Vec3 rel = (cloud.positions.row(graph.neighbors[m]) - cloud.positions.row(graph.targets[m]))
                   .transpose();
    for (int k = 0; k < o; ++k) {
      Vec3 nk = grid.direction(k);
      double a1 = nk.dot(rel);
      double a2 = (rel - a1 * nk).norm();
      Eigen::Index base = (static_cast<Eigen::Index>(m) * o + k) * o;
      for (int l = 0; l < o; ++l) out.values.row(base + l) << a1, a2, gram(k, l);
    }
  }
  return out;
}

MatX spatial_attrs_r3s2(const PointCloud& cloud, const NeighborGraph& graph,
                        const SphereGrid& grid) {
  check_graph(cloud, graph);
  const int e = graph.num_edges();
  const int o = grid.size();
  MatX out(static_cast<Eigen::Index>(e) * o, 2);
  for (int m = 0; m < e; ++m) {
    Vec3 rel = (cloud.positions.row(graph.neighbors[m]) - cloud.positions.row(graph.targets[m]))
                   .transpose();
    for (int k = 0; k < o; ++k) {
      Vec3 nk = grid.direction(k);
      double a1 = nk.dot(rel);
      double a2 = (rel - a1 * nk).norm();
      out.row(static_cast<Eigen::Index>(m) * o + k) << a1, a2;
    }
  }
  return out;
}

double mean_neighbor_distance(const PointCloud& cloud, const NeighborGraph& graph) {
  const int e = graph.num_edges();
  check(e > 0, "mean_neighbor_distance: no edges");
  double total = 0;
  for (int m = 0; m < e; ++m)
    total += (cloud.positions.row(graph.neighbors[m]) - cloud.positions.row(graph.targets[m])).norm();
  return total / e;
}

}  // namespace rapidash
