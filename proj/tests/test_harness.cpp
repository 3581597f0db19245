#include <doctest.h>

#include "rapidash/harness.hpp"

using namespace rapidash;

namespace {

ModelConfig audit_config(Regime regime, int fiber, ReadoutKind readout = ReadoutKind::invariant_global) {
  ModelConfig cfg;
  cfg.regime = regime;
  cfg.layers = 2;
  cfg.channels = 6;
  cfg.fiber_size = fiber;
  cfg.readout = readout;
  cfg.neighbors_k = 4;
  cfg.seed = 3;
  return cfg;
}

std::vector<PointCloud> audit_clouds(uint64_t seed, int n_clouds, int points, int n_aux = 0) {
  Rng rng(seed);
  std::vector<PointCloud> out;
  for (int s = 0; s < n_clouds; ++s) out.push_back(make_random_cloud(rng, points, 1, n_aux));
  return out;
}

}  // namespace

TEST_CASE("separable stages equal the brute-force double sum") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    PointCloud c = make_random_cloud(rng, 4, 1, 0);
    SphereGrid grid = make_sphere_grid(3);
    NeighborGraph g = build_neighbors(c, NeighborMode::knn, 2);
    ConvContext ctx = make_conv_context(c, g, grid, Regime::se3_r3s2, 1.0);
    const int ch = 3;
    ConvBlock blk;
    blk.regime = Regime::se3_r3s2;
    blk.channels = ch;
    blk.spatial_coeffs = Tensor::param({ch, 6}, normal_init(rng, ch * 6, 0.5));
    blk.fiber_coeffs = Tensor::param({ch, 3}, normal_init(rng, ch * 3, 0.5));
    Tensor field = Tensor::constant({4, 3, ch}, normal_init(rng, 4 * 3 * ch, 1.0));
    Tensor fast = blk.conv_stages(field, ctx);
    Tensor slow = brute_force_conv_oracle(c, g, grid, Regime::se3_r3s2, field,
                                          blk.spatial_coeffs.to_matrix(),
                                          blk.fiber_coeffs.to_matrix(), 1.0);
    CHECK((fast.values() - slow.values()).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("oracle matches plain message passing for the t3 regime") {
  Rng rng(2);
  PointCloud c = make_random_cloud(rng, 3, 1, 0);
  NeighborGraph g = build_neighbors(c, NeighborMode::knn, 2);
  SphereGrid grid = make_sphere_grid(1);
  ConvContext ctx = make_conv_context(c, g, grid, Regime::t3_r3, 1.0);
  const int ch = 2;
  ConvBlock blk;
  blk.regime = Regime::t3_r3;
  blk.channels = ch;
  blk.spatial_coeffs = Tensor::param({ch, 10}, normal_init(rng, ch * 10, 0.5));
  Tensor field = Tensor::constant({3, 1, ch}, normal_init(rng, 3 * ch, 1.0));
  Tensor fast = blk.conv_stages(field, ctx);
  Tensor slow = brute_force_conv_oracle(c, g, grid, Regime::t3_r3, field,
                                        blk.spatial_coeffs.to_matrix(), MatX(), 1.0);
  CHECK((fast.values() - slow.values()).abs().maxCoeff() < 1e-12);

  // Independent check: hand-rolled message passing over the edge list.
  MatX attrs = attrs_t3_r3(c, g).values;
  MatX mon = monomial_matrix(attrs);
  MatX coeffs = blk.spatial_coeffs.to_matrix();
  ArrayX expect = ArrayX::Zero(3 * ch);
  for (int e = 0; e < g.num_edges(); ++e)
    for (int cc = 0; cc < ch; ++cc) {
      double k = (mon.row(e) * coeffs.row(cc).transpose())(0, 0);
      expect[g.targets[e] * ch + cc] +=
          static_cast<real_t>(k * field.values()[g.neighbors[e] * ch + cc]);
    }
  CHECK((fast.values() - expect).abs().maxCoeff() < 1e-12);
}

TEST_CASE("zero weights give a zero pre-residual output") {
  Rng rng(3);
  PointCloud c = make_random_cloud(rng, 2, 1, 0);
  SphereGrid grid = make_sphere_grid(2);
  NeighborGraph g = build_neighbors(c, NeighborMode::knn, 1);
  Tensor field = Tensor::constant({2, 2, 2}, normal_init(rng, 8, 1.0));
  Tensor out = brute_force_conv_oracle(c, g, grid, Regime::se3_r3s2, field, MatX::Zero(2, 6),
                                       MatX::Zero(2, 3), 1.0);
  CHECK(out.values().abs().maxCoeff() == 0.0);
}

TEST_CASE("joint-grid invariance of the se3_r3s2 model is exact") {
  Model m = build_model(audit_config(Regime::se3_r3s2, 8));
  auto clouds = audit_clouds(10, 3, 12);
  SymmetryReport rep = measure_invariance(m, clouds, 12, SymmetryGroup::rotation,
                                          GridMode::joint, 77);
  CHECK(rep.max_violation < 1e-9);
  CHECK(rep.group == "joint-rotation-with-grid");
}

TEST_CASE("translation invariance holds without coordinate inputs") {
  for (Regime regime : {Regime::se3_r3, Regime::t3_r3, Regime::se3_r3s2}) {
    Model m = build_model(audit_config(regime, regime_has_fiber(regime) ? 4 : 0));
    auto clouds = audit_clouds(11, 2, 10);
    SymmetryReport rep = measure_invariance(m, clouds, 8, SymmetryGroup::translation,
                                            GridMode::fixed, 5);
    INFO(regime_name(regime));
    CHECK(rep.max_violation < 1e-12);
  }
}

TEST_CASE("fixed-grid violation shrinks when the fiber refines") {
  // Grid-refinement oracle on matched seeds: the same model family and the
  // same trials, only O changes.
  auto run = [&](int fiber) {
    ModelConfig cfg = audit_config(Regime::se3_r3s2, fiber);
    Model m = build_model(cfg);
    auto clouds = audit_clouds(21, 3, 10);
    return measure_invariance(m, clouds, 16, SymmetryGroup::rotation, GridMode::fixed, 99)
        .mean_violation;
  };
  CHECK(run(32) < run(8));
}

TEST_CASE("vector equivariance measurements") {
  ModelConfig cfg = audit_config(Regime::se3_r3s2, 8, ReadoutKind::vector_out);
  cfg.in_aux_vectors = 1;
  cfg.input_spec.aux_as_vectors = true;
  Model m = build_model(cfg);
  auto clouds = audit_clouds(31, 3, 10, 1);
  SUBCASE("joint-grid equivariance is exact for vector inputs") {
    SymmetryReport rep = measure_vector_equivariance(m, clouds, 10, SymmetryGroup::rotation,
                                                     GridMode::joint, 7);
    CHECK(rep.max_violation < 1e-9);
  }
  SUBCASE("velocity-as-scalars model breaks under rotation") {
    ModelConfig broken = cfg;
    broken.input_spec.aux_as_vectors = false;
    broken.input_spec.aux_as_scalars = true;
    Model bm = build_model(broken);
    SymmetryReport rep = measure_vector_equivariance(bm, clouds, 10, SymmetryGroup::rotation,
                                                     GridMode::joint, 7);
    CHECK(rep.max_violation > 0.1);
  }
  SUBCASE("the identity motion gives zero violation") {
    MatX a = m.forward(clouds[0]).to_matrix();
    MatX b = m.forward(transform_cloud(clouds[0], RigidMotion::identity())).to_matrix();
    CHECK((a - b).norm() / (a.norm() + 1e-8) == 0.0);
  }
}

TEST_CASE("reports serialize to the documented CSV schema") {
  SymmetryReport r;
  r.group = "rotation";
  r.mode = "fixed-grid";
  r.metric = "relative";
  r.trials = 5;
  r.max_violation = 0.25;
  r.mean_violation = 0.125;
  r.seed = 42;
  std::string csv = reports_to_csv({r});
  CHECK(csv.find("group,mode,trials,max,mean,seed\n") == 0);
  CHECK(csv.find("rotation,fixed-grid,5,0.25,0.125,42") != std::string::npos);
}
