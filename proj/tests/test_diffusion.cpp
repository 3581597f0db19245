#include <doctest.h>

#include <cmath>

#include "rapidash/diffusion.hpp"

using namespace rapidash;

TEST_CASE("edm scalings") {
  SUBCASE("c_skip is 1/2 at sigma = sigma_data") {
    // substitute sigma = sd into sd^2 / (sigma^2 + sd^2)
    EdmScalings c = edm_scalings(0.5, 0.5);
    CHECK(c.c_skip == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("identity limit as sigma goes to zero") {
    EdmScalings c = edm_scalings(1e-9, 0.5);
    CHECK(c.c_skip == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(c.c_out) < 1e-8);
  }
  SUBCASE("c_in normalizes the total variance for all sigma") {
    for (double sigma : {0.01, 0.3, 1.0, 7.5}) {
      EdmScalings c = edm_scalings(sigma, 0.42);
      CHECK(c.c_in * c.c_in * (sigma * sigma + 0.42 * 0.42) ==
            doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("sigma ladder") {
  DiffusionSchedule sched;
  sched.sigma_min = 0.02;
  sched.sigma_max = 5.0;
  sched.n_steps = 18;
  VecX s = sigma_ladder(sched);
  CHECK(s.size() == 19);
  CHECK(std::abs(s[0] - 5.0) < 1e-12);
  CHECK(std::abs(s[17] - 0.02) < 1e-12);
  CHECK(s[18] == 0.0);
  for (int i = 0; i + 1 < s.size(); ++i) CHECK(s[i] > s[i + 1]);  // strictly decreasing
}

TEST_CASE("single-step schedule is one Euler step from pure noise") {
  DiffusionSchedule sched;
  sched.n_steps = 1;
  sched.sigma_max = 3.0;
  sched.sigma_min = 0.02;
  Mat3X clean = Mat3X::Zero(5, 3);
  clean.col(0).setConstant(0.7);
  int calls = 0;
  DenoiseFn oracle = [&](const Mat3X&, double) {
    ++calls;
    return clean;
  };
  Rng rng(1);
  Mat3X out = karras_sample(oracle, sched, 5, rng);
  CHECK(calls == 1);  // no second-order correction on the final step
  CHECK((out - clean).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("a perfect oracle denoiser recovers the clean shape for any step count") {
  // Plug-in oracle: with D(x, sigma) = x_clean the probability-flow update
  // contracts exactly onto x_clean when sigma reaches zero.
  Mat3X clean(4, 3);
  clean << 0.2, -0.1, 0.4, -0.3, 0.25, 0.0, 0.1, 0.1, -0.2, 0.0, -0.4, 0.3;
  DenoiseFn oracle = [&](const Mat3X&, double) { return clean; };
  for (int steps : {1, 2, 8, 31}) {
    for (double churn : {0.0, 2.0}) {
      DiffusionSchedule sched;
      sched.n_steps = steps;
      sched.churn = churn;
      Rng rng(7);
      Mat3X out = karras_sample(oracle, sched, 4, rng);
      INFO("steps ", steps, " churn ", churn);
      CHECK((out - clean).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("edm denoiser wiring") {
  TaskSpec spec;
  spec.kind = TaskKind::diffusion_gen;
  spec.train_size = 8;
  spec.test_size = 1;
  TaskData data = generate_task(spec);
  double sd = empirical_sigma_data(data.train);
  CHECK(sd > 0.1);
  CHECK(sd < 2.0);

  ModelConfig mc;
  mc.regime = Regime::se3_r3s2;
  mc.fiber_size = 4;
  mc.layers = 1;
  mc.channels = 6;
  mc.neighbors_k = 6;
  mc.readout = ReadoutKind::vector_out;
  mc.in_scalars = 2;
  mc.input_spec.coords_as_scalars = true;
  Model model = build_model(mc);
  const Mat3X& x = data.train[0].positions;
  SUBCASE("sigma to zero reduces the denoiser to the identity") {
    Mat3X d = edm_denoise_positions(model, x, 1e-10, sd);
    CHECK((d - x).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("the denoised output is differentiable w.r.t. parameters") {
    Tape tape;
    TapeScope scope(tape);
    Tensor d = edm_denoise(model, x, 0.8, sd);
    Tensor loss = mse_loss(d, Tensor::from_matrix(x));
    tape.backward(loss);
    double g = 0;
    for (Tensor& p : model.parameters()) g += static_cast<double>(p.grad().abs().sum());
    CHECK(g > 0);
  }
}

TEST_CASE("edm training loss is finite and decreasing over the first 50 epochs") {
  // Seed-averaged over 5 seeds on the toy shape dataset.
  TaskSpec spec;
  spec.kind = TaskKind::diffusion_gen;
  spec.train_size = 64;
  spec.test_size = 1;
  spec.points = 24;
  spec.seed = 11;
  TaskData data = generate_task(spec);
  DiffusionSchedule sched;
  sched.sigma_data = empirical_sigma_data(data.train);
  VecX first = VecX::Zero(5), last = VecX::Zero(5);
  for (int seed = 0; seed < 5; ++seed) {
    ModelConfig mc;
    mc.regime = Regime::se3_r3s2;
    mc.fiber_size = 4;
    mc.layers = 1;
    mc.channels = 8;
    mc.neighbors_k = 6;
    mc.readout = ReadoutKind::vector_out;
    mc.in_scalars = 2;
    mc.input_spec.coords_as_scalars = true;
    mc.seed = seed;
    Model model = build_model(mc);
    TrainOptions opts;
    opts.epochs = 50;
    opts.lr = 2e-3;
    opts.warmup = 5;
    opts.batch = 16;
    opts.seed = seed;
    DiffusionTrainResult r = train_diffusion(model, data.train, sched, opts);
    for (double l : r.epoch_losses) CHECK(std::isfinite(l));
    for (int e = 0; e < 10; ++e) {
      first[seed] += r.epoch_losses[e] / 10;
      last[seed] += r.epoch_losses[40 + e] / 10;
    }
  }
  CHECK(last.mean() < first.mean());
}

TEST_CASE("chamfer distance") {
  Mat3X a(2, 3), b(2, 3);
  a << 0, 0, 0, 1, 0, 0;
  b = a;
  CHECK(chamfer_distance(a, b) == 0.0);
  b(1, 0) = 2;  // second point moves one unit away
  // one-way a->b: 0 + 1; one-way b->a: 0 + 1; each averaged over 2 points
  CHECK(chamfer_distance(a, b) == doctest::Approx(1.0).epsilon(1e-12));
}
