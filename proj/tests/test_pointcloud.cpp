#include <doctest.h>

#include <algorithm>
#include <set>

#include "rapidash/pointcloud.hpp"

using namespace rapidash;

namespace {

PointCloud collinear3() {
  PointCloud c;
  c.positions.resize(3, 3);
  c.positions << 0, 0, 0, 1, 0, 0, 2, 0, 0;
  c.batch_ids = {0, 0, 0};
  return c;
}

PointCloud random_cloud(Rng& rng, int n, int groups = 1) {
  PointCloud c;
  c.positions.resize(n, 3);
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < 3; ++d) c.positions(i, d) = normal_double(rng);
  c.batch_ids.resize(n);
  for (int i = 0; i < n; ++i) c.batch_ids[i] = i * groups / n;
  return c;
}

std::set<std::pair<int, int>> edge_set(const NeighborGraph& g) {
  std::set<std::pair<int, int>> out;
  for (int e = 0; e < g.num_edges(); ++e) out.insert({g.targets[e], g.neighbors[e]});
  return out;
}

// Brute-force knn oracle: per point, the k nearest others by (distance, index).
std::set<std::pair<int, int>> knn_oracle(const PointCloud& c, int k) {
  std::set<std::pair<int, int>> out;
  for (int i = 0; i < c.size(); ++i) {
    std::vector<std::pair<double, int>> cand;
    for (int j = 0; j < c.size(); ++j)
      if (j != i) cand.push_back({(c.positions.row(j) - c.positions.row(i)).norm(), j});
    std::sort(cand.begin(), cand.end());
    for (int m = 0; m < k && m < static_cast<int>(cand.size()); ++m)
      out.insert({i, cand[m].second});
  }
  return out;
}

}  // namespace

TEST_CASE("knn on collinear points breaks the tie at the middle point to the lower index") {
  NeighborGraph g = build_neighbors(collinear3(), NeighborMode::knn, 1);
  CHECK(edge_set(g) == std::set<std::pair<int, int>>{{0, 1}, {1, 0}, {2, 1}});
}

TEST_CASE("radius smaller than any gap yields only self loops") {
  NeighborGraph g = build_neighbors(collinear3(), NeighborMode::radius, 0.5);
  CHECK(edge_set(g) == std::set<std::pair<int, int>>{{0, 0}, {1, 1}, {2, 2}});
}

TEST_CASE("knn returns min(k, group size) neighbors, padding with the self loop") {
  PointCloud c = collinear3();
  NeighborGraph g = build_neighbors(c, NeighborMode::knn, 5);
  for (int i = 0; i < 3; ++i) CHECK(g.offsets[i + 1] - g.offsets[i] == 3);
  CHECK(edge_set(g).count({0, 0}) == 1);  // self loop fills the third slot
}

TEST_CASE("empty cloud is rejected") {
  PointCloud c;
  c.positions.resize(0, 3);
  CHECK_THROWS_AS(build_neighbors(c, NeighborMode::knn, 4), std::invalid_argument);
}

TEST_CASE("knn is permutation-consistent") {
  Rng rng(11);
  PointCloud c = random_cloud(rng, 10);
  NeighborGraph g = build_neighbors(c, NeighborMode::knn, 3);
  CHECK(edge_set(g) == knn_oracle(c, 3));

  std::vector<int> perm = {7, 2, 9, 0, 4, 1, 8, 3, 6, 5};
  PointCloud p = subset_cloud(c, perm);
  NeighborGraph gp = build_neighbors(p, NeighborMode::knn, 3);
  // Relabeling points relabels edges identically: new index m holds old
  // point perm[m].
  std::set<std::pair<int, int>> expected;
  std::vector<int> inv(perm.size());
  for (size_t m = 0; m < perm.size(); ++m) inv[perm[m]] = static_cast<int>(m);
  for (auto [i, j] : edge_set(g)) expected.insert({inv[i], inv[j]});
  CHECK(edge_set(gp) == expected);
}

TEST_CASE("edges never cross batch boundaries") {
  Rng rng(4);
  PointCloud c = random_cloud(rng, 12, 3);
  NeighborGraph g = build_neighbors(c, NeighborMode::knn, 8);
  for (int e = 0; e < g.num_edges(); ++e)
    CHECK(c.batch_ids[g.targets[e]] == c.batch_ids[g.neighbors[e]]);
}

TEST_CASE("neighbor graph is invariant under rigid motion") {
  Rng rng(21);
  PointCloud c = random_cloud(rng, 24);
  RigidMotion g = random_rigid_motion(rng);
  NeighborGraph before = build_neighbors(c, NeighborMode::knn, 5);
  NeighborGraph after = build_neighbors(transform_cloud(c, g), NeighborMode::knn, 5);
  CHECK(before.neighbors == after.neighbors);
  CHECK(before.offsets == after.offsets);
}

TEST_CASE("farthest point sampling") {
  SUBCASE("three collinear points at ratio 2/3 keep the endpoints") {
    std::vector<int> idx = farthest_point_sample(collinear3(), 2.0 / 3.0);
    CHECK(idx == std::vector<int>{0, 2});
  }
  SUBCASE("ratio 1 is the identity selection in index order") {
    Rng rng(8);
    PointCloud c = random_cloud(rng, 9, 2);
    std::vector<int> idx = farthest_point_sample(c, 1.0);
    std::vector<int> expect(9);
    for (int i = 0; i < 9; ++i) expect[i] = i;
    CHECK(idx == expect);
  }
  SUBCASE("max-min separation beats random subsets of equal size") {
    // Oracle: the greedy selection's minimum pairwise distance compared
    // against many random subsets on small clouds.
    Rng rng(15);
    auto min_pairwise = [](const PointCloud& c, const std::vector<int>& idx) {
      double best = std::numeric_limits<double>::infinity();
      for (size_t a = 0; a < idx.size(); ++a)
        for (size_t b = a + 1; b < idx.size(); ++b)
          best = std::min(best, (c.positions.row(idx[a]) - c.positions.row(idx[b])).norm());
      return best;
    };
    for (int trial = 0; trial < 5; ++trial) {
      PointCloud c = random_cloud(rng, 20);
      std::vector<int> fps = farthest_point_sample(c, 0.25);  // 5 of 20
      double fps_sep = min_pairwise(c, fps);
      for (int draw = 0; draw < 200; ++draw) {
        std::vector<int> all(20);
        for (int i = 0; i < 20; ++i) all[i] = i;
        for (int i = 19; i > 0; --i) std::swap(all[i], all[uniform_int(rng, i + 1)]);
        all.resize(fps.size());
        CHECK(fps_sep >= min_pairwise(c, all) - 1e-12);
      }
    }
  }
  SUBCASE("commutes with rigid motion on tie-free clouds") {
    Rng rng(31);
    for (int trial = 0; trial < 10; ++trial) {
      PointCloud c = random_cloud(rng, 16);
      RigidMotion g = random_rigid_motion(rng);
      CHECK(farthest_point_sample(c, 0.5) ==
            farthest_point_sample(transform_cloud(c, g), 0.5));
    }
  }
}

TEST_CASE("interpolation plan") {
  Mat3X coarse(2, 3);
  coarse << 0, 0, 0, 2, 0, 0;
  SUBCASE("coincident fine point copies the coarse value") {
    Mat3X fine(1, 3);
    fine << 0, 0, 0;
    InterpPlan plan = make_interp_plan(coarse, fine, 2);
    MatX vals(2, 1);
    vals << 5.0, -3.0;
    double out = 0;
    for (int m = 0; m < plan.indices.cols(); ++m)
      out += plan.weights(0, m) * vals(plan.indices(0, m), 0);
    CHECK(out == doctest::Approx(5.0).epsilon(1e-9));
  }
  SUBCASE("equidistant fine point averages the two coarse values") {
    Mat3X fine(1, 3);
    fine << 1, 0, 0;
    InterpPlan plan = make_interp_plan(coarse, fine, 2);
    MatX vals(2, 1);
    vals << 0.0, 2.0;
    double out = 0;
    for (int m = 0; m < plan.indices.cols(); ++m)
      out += plan.weights(0, m) * vals(plan.indices(0, m), 0);
    CHECK(out == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(plan.weights.row(0).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("transform_cloud") {
  Rng rng(42);
  PointCloud c = random_cloud(rng, 6);
  c.vector_features.assign(1, Mat3X(6, 3));
  for (int i = 0; i < 6; ++i)
    for (int d = 0; d < 3; ++d) c.vector_features[0](i, d) = normal_double(rng);
  c.labels_vec = c.vector_features[0];

  SUBCASE("identity motion is bitwise") {
    PointCloud t = transform_cloud(c, RigidMotion::identity());
    CHECK((t.positions - c.positions).cwiseAbs().maxCoeff() == 0.0);
    CHECK((t.vector_features[0] - c.vector_features[0]).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("pure translation leaves vector features untouched") {
    RigidMotion g;
    g.translation = Vec3(1, -2, 3);
    PointCloud t = transform_cloud(c, g);
    CHECK((t.vector_features[0] - c.vector_features[0]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((t.positions.row(0).transpose() - (c.positions.row(0).transpose() + g.translation))
              .norm() == 0.0);
  }
  SUBCASE("composed motion equals sequential application") {
    RigidMotion g = random_rigid_motion(rng);
    RigidMotion h = random_rigid_motion(rng);
    PointCloud once = transform_cloud(c, g * h);
    PointCloud twice = transform_cloud(transform_cloud(c, h), g);
    CHECK((once.positions - twice.positions).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((once.vector_features[0] - twice.vector_features[0]).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((once.group_pose(0).matrix() - twice.group_pose(0).matrix()).cwiseAbs().maxCoeff() <
          1e-12);
  }
}

TEST_CASE("cloud CSV round trip") {
  Rng rng(7);
  PointCloud c = random_cloud(rng, 5, 2);
  c.scalar_features = MatX::Random(5, 2);
  c.vector_features.assign(2, Mat3X::Random(5, 3).eval());
  c.labels_int = {0, 1, 2, 1, 0};
  c.labels_vec = Mat3X::Random(5, 3);
  PointCloud back = cloud_from_csv(cloud_to_csv(c));
  CHECK((back.positions - c.positions).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.scalar_features - c.scalar_features).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.vector_features[1] - c.vector_features[1]).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.labels_vec - c.labels_vec).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.labels_int == c.labels_int);
  CHECK(back.batch_ids == c.batch_ids);
  CHECK_THROWS_AS(cloud_from_csv("x,y,z,bogus\n1,2,3,4\n"), std::invalid_argument);
}
