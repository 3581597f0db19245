#include "rapidash/geom.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace rapidash {

Rotation3::Rotation3(const Mat3& m) : m_(m) {
  check((m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12,
        "Rotation3: matrix is not orthogonal");
  check(std::abs(m.determinant() - 1.0) < 1e-12,
        "Rotation3: determinant is not +1");
}

Rotation3 Rotation3::inverse() const { return Rotation3(m_.transpose(), unchecked_t{}); }

Rotation3 Rotation3::operator*(const Rotation3& o) const {
  return Rotation3(m_ * o.m_, unchecked_t{});
}

Rotation3 Rotation3::from_axis_angle(const Vec3& axis, double angle) {
  double n = axis.norm();
  check(n > 0, "from_axis_angle: zero axis");
  Vec3 a = axis / n;
  Mat3 k;
  k << 0, -a.z(), a.y(), a.z(), 0, -a.x(), -a.y(), a.x(), 0;
  Mat3 m = Mat3::Identity() + std::sin(angle) * k + (1 - std::cos(angle)) * k * k;
  return Rotation3(m, unchecked_t{});
}

Rotation3 Rotation3::from_quaternion(double w, double x, double y, double z) {
  double n = std::sqrt(w * w + x * x + y * y + z * z);
  check(n > 1e-12, "from_quaternion: near-zero quaternion");
  w /= n; x /= n; y /= n; z /= n;
  Mat3 m;
  m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return Rotation3(m, unchecked_t{});
}

UnitVector3::UnitVector3(const Vec3& u) : v(u) {
  check(std::abs(u.norm() - 1.0) < 1e-9, "UnitVector3: input is not unit length");
}

UnitVector3 UnitVector3::normalized(const Vec3& u) {
  double n = u.norm();
  check(n > 0, "UnitVector3::normalized: zero vector");
  UnitVector3 out;
  out.v = u / n;
  return out;
}

namespace {

// Rodrigues rotation taking unit u onto unit v; requires u.v > -0.9.
Mat3 rotation_between(const Vec3& u, const Vec3& v) {
  double c = u.dot(v);
  Vec3 a = u.cross(v);
  Mat3 k;
  k << 0, -a.z(), a.y(), a.z(), 0, -a.x(), -a.y(), a.x(), 0;
  return Mat3::Identity() + k + k * k / (1.0 + c);
}

}  // namespace

Rotation3 align_axis_to(const UnitVector3& n) {
  const Vec3 e1(1, 0, 0), e3(0, 0, 1);
  double c = e3.dot(n.v);
  if (e3.cross(n.v).norm() < 1e-14 && c < 0) {
    // Antipodal: half turn about e1.
    return Rotation3::from_axis_angle(e1, M_PI);
  }
  if (c < -0.9) {
    // Route through e1 so both Rodrigues steps stay well conditioned.
    Mat3 m = rotation_between(e1, n.v) * rotation_between(e3, e1);
    return Rotation3(m);
  }
  return Rotation3(rotation_between(e3, n.v));
}

namespace {

Mat3X fibonacci_directions(int n) {
  Mat3X dirs(n, 3);
  if (n == 1) {
    dirs.row(0) << 0, 0, 1;
    return dirs;
  }
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    // Midpoint offset keeps points off the poles and the mean at zero in z.
    double z = 1.0 - 2.0 * (i + 0.5) / n;
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    double t = golden * i;
    dirs.row(i) << r * std::cos(t), r * std::sin(t), z;
  }
  return dirs;
}

// Tangential gradient descent on sum_{i<j} 1/|n_i - n_j|.
void repulsion_refine(Mat3X& dirs, int steps, double step_size) {
  int n = static_cast<int>(dirs.rows());
  if (n < 2) return;
  Mat3X grad(n, 3);
  for (int it = 0; it < steps; ++it) {
    grad.setZero();
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        Vec3 d = (dirs.row(i) - dirs.row(j)).transpose();
        double dist = d.norm();
        Vec3 g = d / (dist * dist * dist);  // -grad of 1/dist w.r.t. n_i
        grad.row(i) += g.transpose();
        grad.row(j) -= g.transpose();
      }
    }
    for (int i = 0; i < n; ++i) {
      Vec3 x = dirs.row(i).transpose();
      Vec3 g = grad.row(i).transpose();
      g -= x * x.dot(g);
      x += step_size * g;
      dirs.row(i) = (x / x.norm()).transpose();
    }
  }
}

}  // namespace

SphereGrid make_sphere_grid(int n_points, GridMethod method) {
  check(n_points >= 1, "make_sphere_grid: n_points must be >= 1");
  SphereGrid g;
  g.directions = fibonacci_directions(n_points);
  if (method == GridMethod::repulsion)
    repulsion_refine(g.directions, 200, 0.01);
  g.weights = VecX::Constant(n_points, 4.0 * M_PI / n_points);
  return g;
}

SphereGrid rotate_grid(const SphereGrid& grid, const Rotation3& r) {
  SphereGrid out;
  out.directions = grid.directions * r.matrix().transpose();
  out.weights = grid.weights;
  return out;
}

std::string grid_to_csv(const SphereGrid& grid) {
  std::ostringstream os;
  os << "x,y,z,weight\n";
  char buf[128];
  for (int k = 0; k < grid.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g\n",
                  grid.directions(k, 0), grid.directions(k, 1),
                  grid.directions(k, 2), grid.weights(k));
    os << buf;
  }
  return os.str();
}

SphereGrid grid_from_csv(const std::string& csv) {
  std::istringstream is(csv);
  std::string line;
  std::vector<std::array<double, 4>> rows;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (first && line.find("x,") == 0) { first = false; continue; }
    first = false;
    std::array<double, 4> r{};
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &r[0], &r[1], &r[2], &r[3]) != 4)
      throw std::invalid_argument("grid_from_csv: bad row: " + line);
    rows.push_back(r);
  }
  check(!rows.empty(), "grid_from_csv: no rows");
  SphereGrid g;
  g.directions.resize(static_cast<int>(rows.size()), 3);
  g.weights.resize(static_cast<int>(rows.size()));
  for (size_t k = 0; k < rows.size(); ++k) {
    g.directions.row(static_cast<int>(k)) << rows[k][0], rows[k][1], rows[k][2];
    g.weights(static_cast<int>(k)) = rows[k][3];
  }
  return g;
}

}  // namespace rapidash
