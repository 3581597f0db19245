#include <doctest.h>

#include <cmath>
#include <deque>

#include "rapidash/geom.hpp"

using namespace rapidash;

namespace {

// Feeds scripted words first, then falls back to a real generator.
struct ScriptedRng {
  std::deque<uint64_t> script;
  Rng fallback{12345};
  uint64_t operator()() {
    if (!script.empty()) {
      uint64_t v = script.front();
      script.pop_front();
      return v;
    }
    return fallback();
  }
};

double max_abs(const Mat3& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("rotation constructor validates orthogonality and handedness") {
  CHECK_THROWS_AS(Rotation3(Mat3::Identity() * 2.0), std::invalid_argument);
  Mat3 reflect = Mat3::Identity();
  reflect(2, 2) = -1;  // det -1
  CHECK_THROWS_AS(Rotation3(Mat3(reflect)), std::invalid_argument);
  Rotation3 r = Rotation3::from_axis_angle(Vec3(1, 2, 3), 0.7);
  CHECK(max_abs(r.matrix().transpose() * r.matrix() - Mat3::Identity()) < 1e-12);
  CHECK(std::abs(r.matrix().determinant() - 1.0) < 1e-12);
}

TEST_CASE("random rotations are orthogonal for any seed") {
  for (uint64_t seed : {1ull, 7ull, 99ull, 123456789ull}) {
    Rng rng(seed);
    Rotation3 r = random_rotation(rng);
    CHECK(max_abs(r.matrix().transpose() * r.matrix() - Mat3::Identity()) < 1e-12);
    CHECK(std::abs(r.matrix().determinant() - 1.0) < 1e-12);
  }
}

TEST_CASE("degenerate quaternion draw is rejected and resampled") {
  // uniform_double maps the word 1<<63 to exactly 0.5, which the sampler
  // turns into coordinate 0. Four of those give the zero quaternion.
  ScriptedRng rng;
  for (int i = 0; i < 4; ++i) rng.script.push_back(1ull << 63);
  Rotation3 r = random_rotation(rng);
  CHECK(rng.script.empty());  // the scripted zero draw was consumed
  CHECK(max_abs(r.matrix().transpose() * r.matrix() - Mat3::Identity()) < 1e-12);
}

TEST_CASE("random rotations are Haar-uniform: mean of R e3 vanishes") {
  // Monte-Carlo oracle: the image of a fixed vector under Haar rotations is
  // uniform on the sphere, so the sample mean must shrink toward 0.
  Rng rng(2024);
  Vec3 mean = Vec3::Zero();
  const int n = 100000;
  for (int i = 0; i < n; ++i) mean += random_rotation(rng) * Vec3(0, 0, 1);
  CHECK((mean / n).norm() < 0.02);
}

TEST_CASE("group laws hold on random triples") {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    RigidMotion g = random_rigid_motion(rng);
    RigidMotion h = random_rigid_motion(rng);
    RigidMotion p = random_rigid_motion(rng);
    RigidMotion lhs = (g * h) * p;
    RigidMotion rhs = g * (h * p);
    CHECK((lhs.translation - rhs.translation).norm() < 1e-12);
    CHECK(max_abs(lhs.rotation.matrix() - rhs.rotation.matrix()) < 1e-12);

    RigidMotion gi = g * g.inverse();
    CHECK(gi.translation.norm() < 1e-12);
    CHECK(max_abs(gi.rotation.matrix() - Mat3::Identity()) < 1e-12);

    Vec3 x(normal_double(rng), normal_double(rng), normal_double(rng));
    CHECK(((g * h) * x - g * (h * x)).norm() < 1e-12);
  }
}

TEST_CASE("align_axis_to maps e3 onto the target") {
  const Vec3 e3(0, 0, 1);
  SUBCASE("identity case") {
    Rotation3 r = align_axis_to(UnitVector3(e3));
    CHECK(max_abs(r.matrix() - Mat3::Identity()) < 1e-12);
  }
  SUBCASE("antipodal case") {
    Rotation3 r = align_axis_to(UnitVector3(Vec3(0, 0, -1)));
    CHECK((r * e3 - Vec3(0, 0, -1)).norm() < 1e-12);
    CHECK(max_abs(r.matrix().transpose() * r.matrix() - Mat3::Identity()) < 1e-12);
    CHECK(r.matrix().allFinite());
  }
  SUBCASE("x axis") {
    Rotation3 r = align_axis_to(UnitVector3(Vec3(1, 0, 0)));
    CHECK((r * e3 - Vec3(1, 0, 0)).norm() < 1e-12);
  }
  SUBCASE("random directions, including near-antipodal") {
    Rng rng(77);
    for (int t = 0; t < 200; ++t) {
      Vec3 n(normal_double(rng), normal_double(rng), normal_double(rng));
      n.normalize();
      if (t % 5 == 0)
        n = Vec3(1e-7 * normal_double(rng), 1e-7 * normal_double(rng), -1).normalized();
      Rotation3 r = align_axis_to(UnitVector3(n));
      CHECK(r.matrix().allFinite());
      CHECK((r * e3 - n).norm() < 1e-12);
    }
  }
  SUBCASE("non-unit input rejected") {
    CHECK_THROWS_AS(UnitVector3(Vec3(0, 0, 2)), std::invalid_argument);
  }
}

TEST_CASE("sphere grid invariants") {
  SUBCASE("single direction degenerates to the R^3 base") {
    SphereGrid g = make_sphere_grid(1);
    CHECK((g.direction(0) - Vec3(0, 0, 1)).norm() == 0.0);
    CHECK(g.weights(0) == doctest::Approx(4 * M_PI).epsilon(1e-12));
  }
  SUBCASE("two fibonacci points face away from each other") {
    SphereGrid g = make_sphere_grid(2);
    CHECK(g.direction(0).dot(g.direction(1)) < 0);
  }
  SUBCASE("zero points rejected") { CHECK_THROWS_AS(make_sphere_grid(0), std::invalid_argument); }
  for (int n : {4, 8, 16, 32, 64}) {
    SphereGrid g = make_sphere_grid(n);
    for (int k = 0; k < n; ++k) CHECK(std::abs(g.direction(k).norm() - 1.0) < 1e-12);
    CHECK(std::abs(g.weights.sum() - 4 * M_PI) < 1e-9);
    if (n >= 16) CHECK((g.directions.colwise().mean()).norm() < 0.05);
  }
}

TEST_CASE("covering radius of the 32-point grid is under 40 degrees") {
  // Oracle: dense sampling of test directions; every direction must have a
  // grid point within 40 degrees.
  SphereGrid g = make_sphere_grid(32);
  SphereGrid probes = make_sphere_grid(4096);
  Rng rng(3);
  double worst = 0;
  auto probe = [&](const Vec3& u) {
    double best = -1;
    for (int k = 0; k < g.size(); ++k) best = std::max(best, u.dot(g.direction(k)));
    worst = std::max(worst, std::acos(std::min(1.0, best)));
  };
  for (int i = 0; i < probes.size(); ++i) probe(probes.direction(i));
  for (int t = 0; t < 2000; ++t) {
    Vec3 u(normal_double(rng), normal_double(rng), normal_double(rng));
    probe(u.normalized());
  }
  CHECK(worst < 40.0 * M_PI / 180.0);
}

TEST_CASE("repulsion refinement keeps invariants and lowers energy") {
  auto energy = [](const SphereGrid& g) {
    double e = 0;
    for (int i = 0; i < g.size(); ++i)
      for (int j = i + 1; j < g.size(); ++j)
        e += 1.0 / (g.direction(i) - g.direction(j)).norm();
    return e;
  };
  SphereGrid fib = make_sphere_grid(24, GridMethod::fibonacci);
  SphereGrid rep = make_sphere_grid(24, GridMethod::repulsion);
  SphereGrid rep2 = make_sphere_grid(24, GridMethod::repulsion);
  CHECK((rep.directions - rep2.directions).cwiseAbs().maxCoeff() == 0.0);  // deterministic
  for (int k = 0; k < rep.size(); ++k) CHECK(std::abs(rep.direction(k).norm() - 1.0) < 1e-12);
  CHECK(std::abs(rep.weights.sum() - 4 * M_PI) < 1e-9);
  CHECK(energy(rep) < energy(fib));
}

TEST_CASE("rotate_grid") {
  SphereGrid g = make_sphere_grid(16);
  Rng rng(9);
  Rotation3 rot = random_rotation(rng);
  SUBCASE("identity leaves the grid bitwise unchanged") {
    SphereGrid r = rotate_grid(g, Rotation3::identity());
    CHECK((r.directions - g.directions).cwiseAbs().maxCoeff() == 0.0);
    CHECK((r.weights - g.weights).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("applying R then R^T returns the original directions") {
    SphereGrid back = rotate_grid(rotate_grid(g, rot), rot.inverse());
    CHECK((back.directions - g.directions).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("the Gram matrix is rotation invariant") {
    MatX before = g.gram();
    MatX after = rotate_grid(g, rot).gram();
    CHECK((before - after).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("grid CSV round trip is exact") {
  SphereGrid g = make_sphere_grid(12, GridMethod::repulsion);
  SphereGrid back = grid_from_csv(grid_to_csv(g));
  CHECK((back.directions - g.directions).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.weights - g.weights).cwiseAbs().maxCoeff() == 0.0);
}
