#pragma once

#include <vector>

#include "rapidash/common.hpp"

namespace rapidash {

// Proper rotation in 3D. Construction validates R^T R = I and det R = +1
// to 1e-12.
class Rotation3 {
 public:
  Rotation3() : m_(Mat3::Identity()) {}
  explicit Rotation3(const Mat3& m);

  static Rotation3 identity() { return Rotation3(); }
  static Rotation3 from_axis_angle(const Vec3& axis, double angle);
  static Rotation3 from_quaternion(double w, double x, double y, double z);

  const Mat3& matrix() const { return m_; }
  Rotation3 inverse() const;
  Vec3 operator*(const Vec3& p) const { return m_ * p; }
  Rotation3 operator*(const Rotation3& o) const;

 private:
  struct unchecked_t {};
  Rotation3(const Mat3& m, unchecked_t) : m_(m) {}
  Mat3 m_;
};

// Roto-translation g = (t, R), acting as g p = R p + t.
struct RigidMotion {
  Vec3 translation = Vec3::Zero();
  Rotation3 rotation;

  static RigidMotion identity() { return {}; }
  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }
  // (t,R)(t',R') = (R t' + t, R R')
  RigidMotion operator*(const RigidMotion& o) const {
    return {rotation * o.translation + translation, rotation * o.rotation};
  }
  RigidMotion inverse() const {
    Rotation3 ri = rotation.inverse();
    return {-(ri * translation), ri};
  }
};

// Unit direction on S^2.
struct UnitVector3 {
  Vec3 v;
  UnitVector3() : v(0, 0, 1) {}
  explicit UnitVector3(const Vec3& u);
  static UnitVector3 normalized(const Vec3& u);
};

// Discretized orientation fiber: N unit directions with quadrature weights
// summing to 4*pi.
struct SphereGrid {
  Mat3X directions;  // N x 3, unit rows
  VecX weights;      // N, non-negative, sums to 4*pi

  int size() const { return static_cast<int>(directions.rows()); }
  Vec3 direction(int k) const { return directions.row(k).transpose(); }
  // Pairwise inner products n_k . n_l ; invariant under rotate_grid.
  MatX gram() const { return directions * directions.transpose(); }
};

enum class GridMethod { fibonacci, repulsion };

// Haar-uniform rotation. Samples a uniform point in the 4-ball (rejection,
// re-drawing near-zero quaternions) and normalizes onto S^3.
template <class Generator>
Rotation3 random_rotation(Generator& rng) {
  for (;;) {
    double q[4];
    for (double& c : q) c = uniform_double(rng, -1.0, 1.0);
    double n2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3];
    if (n2 < 1e-12 || n2 > 1.0) continue;
    double inv = 1.0 / std::sqrt(n2);
    return Rotation3::from_quaternion(q[0] * inv, q[1] * inv, q[2] * inv,
                                      q[3] * inv);
  }
}

template <class Generator>
RigidMotion random_rigid_motion(Generator& rng, double translation_scale = 1.0) {
  Rotation3 r = random_rotation(rng);
  Vec3 t(normal_double(rng), normal_double(rng), normal_double(rng));
  return {t * translation_scale, r};
}

// R_n with R_n e3 = n. Antipodal n = -e3 maps to a half-turn about e1.
Rotation3 align_axis_to(const UnitVector3& n);

SphereGrid make_sphere_grid(int n_points, GridMethod method = GridMethod::fibonacci);

SphereGrid rotate_grid(const SphereGrid& grid, const Rotation3& r);

// CSV with header x,y,z,weight; values at 17 significant digits.
std::string grid_to_csv(const SphereGrid& grid);
SphereGrid grid_from_csv(const std::string& csv);

}  // namespace rapidash
