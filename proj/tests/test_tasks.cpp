#include <doctest.h>

#include <cmath>

#include "rapidash/tasks.hpp"

using namespace rapidash;

TEST_CASE("pairwise exponential target") {
  SUBCASE("single point gives zero") {
    Mat3X p(1, 3);
    p << 4, 5, 6;
    CHECK(pairwise_exp_target(p) == 0.0);
  }
  SUBCASE("two points at distance d give 2 exp(-d)") {
    Mat3X p(2, 3);
    p << 0, 0, 0, 0, 0, 1.7;
    CHECK(pairwise_exp_target(p) == doctest::Approx(2 * std::exp(-1.7)).epsilon(1e-12));
  }
  SUBCASE("rotation leaves the target unchanged exactly") {
    Rng rng(2);
    TaskSpec spec;
    spec.kind = TaskKind::inv_regression;
    spec.train_size = 4;
    spec.test_size = 2;
    TaskData data = generate_task(spec);
    for (int s = 0; s < 4; ++s) {
      RigidMotion g;
      g.rotation = random_rotation(rng);
      PointCloud rotated = transform_cloud(data.train[s], g);
      CHECK(pairwise_exp_target(rotated.positions) ==
            doctest::Approx(data.train_targets[s]).epsilon(1e-12));
    }
  }
}

TEST_CASE("c4 table has the exact symmetry and quadrant labels") {
  TaskSpec spec;
  spec.kind = TaskKind::symmetric_disambiguation;
  spec.train_size = 3;
  spec.test_size = 1;
  spec.seed = 5;
  TaskData data = generate_task(spec);
  const PointCloud& c = data.train[0];
  const int per_leg = c.size() / 4;
  Mat3 rz = Rotation3::from_axis_angle(Vec3(0, 0, 1), M_PI / 2).matrix();
  for (int m = 0; m < 4; ++m)
    for (int i = 0; i < per_leg; ++i) {
      Vec3 rotated = rz * c.positions.row(m * per_leg + i).transpose();
      Vec3 next = c.positions.row(((m + 1) % 4) * per_leg + i).transpose();
      CHECK((rotated - next).norm() < 1e-12);  // legs map onto each other
      CHECK(c.labels_int[m * per_leg + i] ==
            canonical_quadrant(c.positions(m * per_leg + i, 0), c.positions(m * per_leg + i, 1)));
    }
  std::vector<int> counts(4, 0);
  for (int l : c.labels_int) counts[l]++;
  for (int m = 0; m < 4; ++m) CHECK(counts[m] == per_leg);  // balanced classes
}

TEST_CASE("constant predictor sits at chance on the c4 task") {
  TaskSpec spec;
  spec.kind = TaskKind::symmetric_disambiguation;
  spec.train_size = 1;
  spec.test_size = 8;
  TaskData data = generate_task(spec);
  long hits = 0, total = 0;
  for (const PointCloud& c : data.test) {
    for (int l : c.labels_int) hits += l == 2;
    total += c.size();
  }
  CHECK(static_cast<double>(hits) / total == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("nearest-canonical-quadrant oracle classifies aligned tables perfectly") {
  TaskSpec spec;
  spec.kind = TaskKind::symmetric_disambiguation;
  spec.train_size = 1;
  spec.test_size = 6;
  spec.rotate_test = false;  // aligned
  TaskData data = generate_task(spec);
  for (const PointCloud& c : data.test)
    for (int i = 0; i < c.size(); ++i)
      CHECK(canonical_quadrant(c.positions(i, 0), c.positions(i, 1)) == c.labels_int[i]);
}

TEST_CASE("rotated tables keep labels attached to the geometry") {
  TaskSpec spec;
  spec.kind = TaskKind::symmetric_disambiguation;
  spec.train_size = 1;
  spec.test_size = 4;
  spec.rotate_test = true;
  TaskData data = generate_task(spec);
  for (const PointCloud& c : data.test) {
    RigidMotion inv;
    inv.rotation = c.group_pose(0).inverse();
    PointCloud canonical = transform_cloud(c, inv);
    for (int i = 0; i < c.size(); ++i)
      CHECK(canonical_quadrant(canonical.positions(i, 0), canonical.positions(i, 1)) ==
            c.labels_int[i]);
  }
}

TEST_CASE("motion task targets") {
  TaskSpec spec;
  spec.kind = TaskKind::vector_motion;
  spec.train_size = 6;
  spec.test_size = 2;
  TaskData data = generate_task(spec);
  SUBCASE("velocity field is rigid about the centroid") {
    for (const PointCloud& c : data.train) {
      Vec3 centroid = c.positions.colwise().mean().transpose();
      Vec3 vmean = c.vector_features[0].colwise().mean().transpose();
      for (int i = 0; i < c.size(); ++i) {
        Vec3 rel = c.positions.row(i).transpose() - centroid;
        Vec3 v = c.vector_features[0].row(i).transpose();
        CHECK(std::abs((v - vmean).dot(rel)) < 1e-9);  // w x rel is orthogonal to rel
      }
    }
  }
  SUBCASE("zero velocity and zero spin give zero displacement") {
    PointCloud still = data.train[0];
    motion_targets(still, Vec3::Zero(), Vec3::Zero());
    CHECK(still.vector_features[0].cwiseAbs().maxCoeff() == 0.0);
    CHECK(still.labels_vec.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("pure drift moves every node by the drift") {
    PointCloud c = data.train[0];
    Vec3 v(0.3, -0.8, 0.1);
    motion_targets(c, v, Vec3::Zero());
    for (int i = 0; i < c.size(); ++i) {
      CHECK((c.vector_features[0].row(i).transpose() - v).norm() < 1e-12);
      CHECK((c.labels_vec.row(i).transpose() - v).norm() < 1e-12);
    }
  }
  SUBCASE("rotating inputs rotates targets exactly") {
    Rng rng(3);
    for (const PointCloud& c : data.train) {
      RigidMotion g = random_rigid_motion(rng);
      PointCloud t = transform_cloud(c, g);
      MatX expected = c.labels_vec * g.rotation.matrix().transpose();
      CHECK((t.labels_vec - expected).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("mean displacement equals mean velocity (both are the drift)") {
    const PointCloud& c = data.train[1];
    Vec3 vmean = c.vector_features[0].colwise().mean().transpose();
    Vec3 dmean = c.labels_vec.colwise().mean().transpose();
    CHECK((dmean - vmean).norm() < 1e-9);
  }
}

TEST_CASE("segmentation metrics") {
  SUBCASE("perfect labels give IoU 1") {
    std::vector<int> y = {0, 1, 2, 1, 0, 2};
    CHECK(instance_iou(y, y, 3) == 1.0);
  }
  SUBCASE("single-class predictor on balanced parts: 1/3 on its class, 0 elsewhere") {
    std::vector<int> target = {0, 0, 1, 1, 2, 2};
    std::vector<int> pred(6, 0);
    Eigen::MatrixXi m = confusion_matrix(pred, target, 3);
    CHECK(m(0, 0) == 2);
    CHECK(m(1, 0) == 2);
    CHECK(instance_iou(pred, target, 3) == doctest::Approx((1.0 / 3 + 0 + 0) / 3));
  }
  SUBCASE("IoU is invariant to a consistent label permutation") {
    Rng rng(4);
    std::vector<int> pred(40), target(40);
    for (int i = 0; i < 40; ++i) {
      pred[i] = uniform_int(rng, 3);
      target[i] = uniform_int(rng, 3);
    }
    int perm[3] = {2, 0, 1};
    std::vector<int> pred2(40), target2(40);
    for (int i = 0; i < 40; ++i) {
      pred2[i] = perm[pred[i]];
      target2[i] = perm[target[i]];
    }
    CHECK(instance_iou(pred, target, 3) == doctest::Approx(instance_iou(pred2, target2, 3)));
  }
  SUBCASE("instance IoU agrees with a brute-force confusion computation") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<int> pred(30), target(30);
      for (int i = 0; i < 30; ++i) {
        pred[i] = uniform_int(rng, 4);
        target[i] = uniform_int(rng, 4);
      }
      double total = 0;
      int used = 0;
      for (int c = 0; c < 4; ++c) {
        int tp = 0, fp = 0, fn = 0;
        for (int i = 0; i < 30; ++i) {
          tp += pred[i] == c && target[i] == c;
          fp += pred[i] == c && target[i] != c;
          fn += pred[i] != c && target[i] == c;
        }
        if (tp + fp + fn == 0) continue;
        total += static_cast<double>(tp) / (tp + fp + fn);
        ++used;
      }
      CHECK(instance_iou(pred, target, 4) == doctest::Approx(total / used).epsilon(1e-12));
    }
  }
}

TEST_CASE("segmentation clouds contain all three parts") {
  TaskSpec spec;
  spec.kind = TaskKind::part_segmentation;
  spec.train_size = 2;
  spec.test_size = 1;
  TaskData data = generate_task(spec);
  CHECK(data.num_classes == 3);
  int seen[3] = {0, 0, 0};
  for (int l : data.train[0].labels_int) seen[l]++;
  CHECK(seen[0] > 0);
  CHECK(seen[1] > 0);
  CHECK(seen[2] > 0);
}

TEST_CASE("generators are deterministic and splits are disjoint") {
  TaskSpec spec;
  spec.kind = TaskKind::part_segmentation;
  spec.train_size = 3;
  spec.test_size = 3;
  spec.seed = 9;
  TaskData a = generate_task(spec);
  TaskData b = generate_task(spec);
  CHECK((a.train[1].positions - b.train[1].positions).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.test[2].positions - b.test[2].positions).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.train[0].positions - a.test[0].positions).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("lr zero freezes the metrics") {
  TaskSpec spec;
  spec.kind = TaskKind::inv_regression;
  spec.train_size = 6;
  spec.test_size = 3;
  TaskData data = generate_task(spec);
  ModelConfig mc;
  mc.regime = Regime::se3_r3;
  mc.fiber_size = 0;
  mc.layers = 1;
  mc.channels = 4;
  mc.neighbors_k = 4;
  Model model = build_model(mc);
  TrainOptions opts;
  opts.epochs = 5;
  opts.lr = 0.0;
  opts.warmup = 0;
  opts.weight_decay = 0;
  TrainResult r = train_model(model, data, opts);
  for (const MetricRow& row : r.history)
    if (row.split == "train")
      CHECK(row.value == doctest::Approx(r.history.front().value).epsilon(1e-12));
}

TEST_CASE("training is deterministic given the seed") {
  TaskSpec spec;
  spec.kind = TaskKind::inv_regression;
  spec.train_size = 8;
  spec.test_size = 4;
  TaskData data = generate_task(spec);
  auto run = [&]() {
    ModelConfig mc;
    mc.regime = Regime::se3_r3;
    mc.fiber_size = 0;
    mc.layers = 2;
    mc.channels = 6;
    mc.neighbors_k = 4;
    mc.seed = 42;
    Model model = build_model(mc);
    TrainOptions opts;
    opts.epochs = 10;
    opts.lr = 1e-3;
    opts.warmup = 2;
    opts.seed = 7;
    return history_to_csv(train_model(model, data, opts).history);
  };
  CHECK(run() == run());
}

TEST_CASE("a tiny training set is overfit by every regime") {
  // Capacity sanity oracle: 4 samples must be driven to near-zero loss.
  TaskSpec spec;
  spec.kind = TaskKind::inv_regression;
  spec.train_size = 4;
  spec.test_size = 2;
  spec.seed = 3;
  TaskData data = generate_task(spec);
  double mean = data.train_targets.mean();
  data.train_targets.array() -= mean;  // keep the bias from absorbing a big offset
  data.test_targets.array() -= mean;
  for (Regime regime : {Regime::se3_r3, Regime::t3_r3, Regime::se3_r3s2, Regime::none_r3,
                        Regime::none_r3s2}) {
    ModelConfig mc;
    mc.regime = regime;
    mc.fiber_size = regime_has_fiber(regime) ? 4 : 0;
    mc.layers = 2;
    mc.channels = 16;
    mc.neighbors_k = 8;
    mc.seed = 1;
    Model model = build_model(mc);
    TrainOptions opts;
    opts.epochs = 500;
    opts.lr = 5e-3;
    opts.warmup = 20;
    opts.batch = 4;
    opts.seed = 2;
    TrainResult r = train_model(model, data, opts);
    INFO(regime_name(regime));
    CHECK(r.final_train_loss < 1e-3);
  }
}

TEST_CASE("divergence aborts with the epoch index") {
  TaskSpec spec;
  spec.kind = TaskKind::inv_regression;
  spec.train_size = 4;
  spec.test_size = 2;
  TaskData data = generate_task(spec);
  ModelConfig mc;
  mc.regime = Regime::se3_r3;
  mc.fiber_size = 0;
  mc.layers = 2;
  mc.channels = 8;
  mc.neighbors_k = 4;
  Model model = build_model(mc);
  TrainOptions opts;
  opts.epochs = 60;
  opts.lr = 1e14;  // guaranteed blow-up
  opts.warmup = 0;
  CHECK_THROWS_WITH_AS(train_model(model, data, opts), doctest::Contains("epoch"),
                       std::runtime_error);
}
