#include "rapidash/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace rapidash {

namespace {

double rel_diff(const ArrayX& a, const ArrayX& b) {
  double scale = static_cast<double>(a.abs().maxCoeff());
  return static_cast<double>((b - a).abs().maxCoeff()) / (scale + 1e-8);
}

std::vector<int> random_group_permutation(Rng& rng, const PointCloud& cloud) {
  std::vector<int> perm(cloud.size());
  for (auto [begin, end] : cloud.group_ranges()) {
    for (int i = begin; i < end; ++i) perm[i] = i;
    for (int i = end - 1; i > begin; --i)
      std::swap(perm[i], perm[begin + uniform_int(rng, i - begin + 1)]);
  }
  return perm;
}

struct TrialSetup {
  PointCloud transformed;
  Model eval_model;  // shares parameters; grid may be rotated
  Mat3 rot = Mat3::Identity();
  std::vector<int> perm;
};

TrialSetup make_trial(const Model& model, const PointCloud& cloud, SymmetryGroup group,
                      GridMode mode, Rng& rng) {
  TrialSetup t;
  t.eval_model = model;
  switch (group) {
    case SymmetryGroup::rotation: {
      RigidMotion g;
      g.rotation = random_rotation(rng);  // pure rotation; translation probes separately
      t.transformed = transform_cloud(cloud, g);
      t.rot = g.rotation.matrix();
      if (mode == GridMode::joint) t.eval_model.grid = rotate_grid(model.grid, g.rotation);
      break;
    }
    case SymmetryGroup::translation: {
      RigidMotion g;
      g.translation = Vec3(normal_double(rng), normal_double(rng), normal_double(rng));
      t.transformed = transform_cloud(cloud, g);
      break;
    }
    case SymmetryGroup::permutation: {
      t.perm = random_group_permutation(rng, cloud);
      t.transformed = subset_cloud(cloud, t.perm);
      break;
    }
  }
  return t;
}

std::string group_label(SymmetryGroup group, GridMode mode) {
  switch (group) {
    case SymmetryGroup::rotation:
      return mode == GridMode::joint ? "joint-rotation-with-grid" : "rotation";
    case SymmetryGroup::translation: return "translation";
    case SymmetryGroup::permutation: return "permutation";
  }
  return "?";
}

}  // namespace

SymmetryReport measure_invariance(const Model& model, const std::vector<PointCloud>& clouds,
                                  int n_trials, SymmetryGroup group, GridMode mode,
                                  uint64_t seed) {
  check(!clouds.empty() && n_trials > 0, "measure_invariance: needs clouds and trials");
  check(model.config.readout != ReadoutKind::vector_out,
        "measure_invariance: model must have an invariant readout");
  SymmetryReport rep;
  rep.group = group_label(group, mode);
  rep.mode = mode == GridMode::joint ? "joint-grid" : "fixed-grid";
  rep.metric = "relative";
  rep.trials = n_trials;
  rep.seed = seed;
  Rng rng(seed);
  double total = 0;
  for (int trial = 0; trial < n_trials; ++trial) {
    const PointCloud& cloud = clouds[trial % clouds.size()];
    TrialSetup t = make_trial(model, cloud, group, mode, rng);
    Tensor base = model.forward(cloud);
    Tensor moved = t.eval_model.forward(t.transformed);
    double v;
    if (group == SymmetryGroup::permutation &&
        model.config.readout == ReadoutKind::invariant_perpoint) {
      // moved row m corresponds to base row perm[m]
      ArrayX reordered(base.numel());
      int cols = base.dim(1);
      for (int m = 0; m < base.dim(0); ++m)
        reordered.segment(static_cast<Eigen::Index>(t.perm[m]) * cols, cols) =
            moved.values().segment(static_cast<Eigen::Index>(m) * cols, cols);
      v = rel_diff(base.values(), reordered);
    } else {
      v = rel_diff(base.values(), moved.values());
    }
    rep.max_violation = std::max(rep.max_violation, v);
    total += v;
  }
  rep.mean_violation = total / n_trials;
  return rep;
}

SymmetryReport measure_vector_equivariance(const Model& model,
                                           const std::vector<PointCloud>& clouds, int n_trials,
                                           SymmetryGroup group, GridMode mode, uint64_t seed) {
  check(!clouds.empty() && n_trials > 0, "measure_vector_equivariance: needs clouds and trials");
  check(model.config.readout == ReadoutKind::vector_out,
        "measure_vector_equivariance: model must have a vector readout");
  SymmetryReport rep;
  rep.group = group_label(group, mode);
  rep.mode = mode == GridMode::joint ? "joint-grid" : "fixed-grid";
  rep.metric = "vector-rotated-difference";
  rep.trials = n_trials;
  rep.seed = seed;
  Rng rng(seed);
  double total = 0;
  for (int trial = 0; trial < n_trials; ++trial) {
    const PointCloud& cloud = clouds[trial % clouds.size()];
    TrialSetup t = make_trial(model, cloud, group, mode, rng);
    MatX base = model.forward(cloud).to_matrix();      // P x 3
    MatX moved = t.eval_model.forward(t.transformed).to_matrix();
    MatX expected;
    if (group == SymmetryGroup::permutation) {
      expected.resize(base.rows(), 3);
      for (int m = 0; m < base.rows(); ++m) expected.row(m) = base.row(t.perm[m]);
    } else {
      expected = base * t.rot.transpose();
    }
    double v = (moved - expected).norm() / (base.norm() + 1e-8);
    rep.max_violation = std::max(rep.max_violation, v);
    total += v;
  }
  rep.mean_violation = total / n_trials;
  return rep;
}

std::string reports_to_csv(const std::vector<SymmetryReport>& reports) {
  std::ostringstream os;
  os << "group,mode,trials,max,mean,seed\n";
  char buf[128];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%d,%.17g,%.17g,%llu\n", r.group.c_str(),
                  r.mode.c_str(), r.trials, r.max_violation, r.mean_violation,
                  static_cast<unsigned long long>(r.seed));
    os << buf;
  }
  return os.str();
}

Tensor brute_force_conv_oracle(const PointCloud& cloud, const NeighborGraph& graph,
                               const SphereGrid& grid, Regime regime, const Tensor& field,
                               const MatX& spatial_coeffs, const MatX& fiber_coeffs,
                               double geom_scale) {
  const int p = cloud.size();
  const int o = regime_has_fiber(regime) ? grid.size() : 1;
  const int c = field.dim(2);
  check(p <= 5 && o <= 4, "brute_force_conv_oracle: tiny instances only");
  check(field.dim(0) == p && field.dim(1) == o, "brute_force_conv_oracle: field shape mismatch");
  const double inv = 1.0 / geom_scale;
  const MatX gram = o > 1 ? grid.gram() : MatX::Ones(1, 1);

  auto spatial_kernel = [&](int i, int j, int l, int ch) {
    MatX a;
    Vec3 rel = (cloud.positions.row(j) - cloud.positions.row(i)).transpose();
    switch (regime) {
      case Regime::se3_r3: a.resize(1, 1); a(0, 0) = rel.norm() * inv; break;
      case Regime::t3_r3: a = (rel * inv).transpose(); break;
      case Regime::none_r3:
      case Regime::none_r3s2:
        a.resize(1, 6);
        a.block(0, 0, 1, 3) = (rel * inv).transpose();
        a.block(0, 3, 1, 3) = cloud.positions.row(i) * inv;
        break;
      case Regime::se3_r3s2: {
        Vec3 nl = grid.direction(l);
        double a1 = nl.dot(rel);
        double a2 = (rel - a1 * nl).norm();
        a.resize(1, 2);
        a << a1 * inv, a2 * inv;
        break;
      }
    }
    MatX mon = monomial_matrix(a);
    return (mon * spatial_coeffs.row(ch).transpose())(0, 0);
  };
  auto fiber_kernel = [&](double t, int ch) {
    return fiber_coeffs(ch, 0) + fiber_coeffs(ch, 1) * t + fiber_coeffs(ch, 2) * t * t;
  };

  ArrayX out = ArrayX::Zero(static_cast<Eigen::Index>(p) * o * c);
  const ArrayX& f = field.values();
  for (int e = 0; e < graph.num_edges(); ++e) {
    int i = graph.targets[e];
    int j = graph.neighbors[e];
    for (int k = 0; k < o; ++k) {
      for (int l = 0; l < o; ++l) {
        for (int ch = 0; ch < c; ++ch) {
          double ks = spatial_kernel(i, j, l, ch);
          double kf = regime_has_fiber(regime)
                          ? fiber_kernel(gram(k, l), ch) * grid.weights(l)
                          : (k == l ? 1.0 : 0.0);
          out[(static_cast<Eigen::Index>(i) * o + k) * c + ch] +=
              static_cast<real_t>(ks * kf *
                                  static_cast<double>(f[(static_cast<Eigen::Index>(j) * o + l) * c + ch]));
        }
      }
    }
  }
  return Tensor::constant({p, o, c}, std::move(out));
}

PointCloud make_random_cloud(Rng& rng, int n_points, int n_scalars, int n_aux, double spread) {
  PointCloud cloud;
  cloud.positions.resize(n_points, 3);
  for (int i = 0; i < n_points; ++i)
    for (int d = 0; d < 3; ++d) cloud.positions(i, d) = spread * normal_double(rng);
  if (n_scalars > 0) {
    cloud.scalar_features.resize(n_points, n_scalars);
    for (int i = 0; i < n_points; ++i)
      for (int s = 0; s < n_scalars; ++s) cloud.scalar_features(i, s) = normal_double(rng);
  }
  cloud.vector_features.assign(n_aux, Mat3X(n_points, 3));
  for (int a = 0; a < n_aux; ++a)
    for (int i = 0; i < n_points; ++i)
      for (int d = 0; d < 3; ++d) cloud.vector_features[a](i, d) = normal_double(rng);
  cloud.batch_ids.assign(n_points, 0);
  return cloud;
}

}  // namespace rapidash
