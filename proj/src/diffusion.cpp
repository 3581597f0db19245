#include "rapidash/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rapidash {

VecX sigma_ladder(const DiffusionSchedule& sched) {
  check(sched.n_steps >= 1, "sigma_ladder: n_steps must be >= 1");
  check(sched.sigma_max > sched.sigma_min && sched.sigma_min > 0,
        "sigma_ladder: need sigma_max > sigma_min > 0");
  VecX out(sched.n_steps + 1);
  if (sched.n_steps == 1) {
    out[0] = sched.sigma_max;
  } else {
    double hi = std::pow(sched.sigma_max, 1.0 / sched.rho);
    double lo = std::pow(sched.sigma_min, 1.0 / sched.rho);
    for (int i = 0; i < sched.n_steps; ++i) {
      double t = static_cast<double>(i) / (sched.n_steps - 1);
      out[i] = std::pow(hi + t * (lo - hi), sched.rho);
    }
  }
  out[sched.n_steps] = 0.0;
  return out;
}

EdmScalings edm_scalings(double sigma, double sigma_data) {
  check(sigma > 0 && sigma_data > 0, "edm_scalings: sigma and sigma_data must be positive");
  double s2 = sigma * sigma, d2 = sigma_data * sigma_data;
  EdmScalings c;
  c.c_skip = d2 / (s2 + d2);
  c.c_out = sigma * sigma_data / std::sqrt(s2 + d2);
  c.c_in = 1.0 / std::sqrt(s2 + d2);
  c.c_noise = std::log(sigma) / 4.0;
  return c;
}

Tensor edm_denoise(const Model& model, const Mat3X& x_noisy, double sigma, double sigma_data) {
  check(model.config.readout == ReadoutKind::vector_out,
        "edm_denoise: denoiser model needs a vector readout");
  check(model.config.in_scalars == 2,
        "edm_denoise: denoiser model expects 2 scalar channels (bias, noise embedding)");
  EdmScalings c = edm_scalings(sigma, sigma_data);
  const int p = static_cast<int>(x_noisy.rows());
  PointCloud cloud;
  cloud.positions = c.c_in * x_noisy;
  cloud.scalar_features.resize(p, 2);
  cloud.scalar_features.col(0).setOnes();
  cloud.scalar_features.col(1).setConstant(c.c_noise);
  cloud.batch_ids.assign(p, 0);
  Tensor f = model.forward(cloud);  // (P, 3)
  Tensor skip = Tensor::from_matrix(c.c_skip * x_noisy);
  return add(skip, scale(f, static_cast<real_t>(c.c_out)));
}

Mat3X edm_denoise_positions(const Model& model, const Mat3X& x_noisy, double sigma,
                            double sigma_data) {
  MatX m = edm_denoise(model, x_noisy, sigma, sigma_data).to_matrix();
  return Mat3X(m);
}

Mat3X karras_sample(const DenoiseFn& denoise, const DiffusionSchedule& sched, int n_points,
                    Rng& rng) {
  VecX sigmas = sigma_ladder(sched);
  const int n = sched.n_steps;
  Mat3X x(n_points, 3);
  for (int i = 0; i < n_points; ++i)
    for (int d = 0; d < 3; ++d) x(i, d) = sigmas[0] * normal_double(rng);
  for (int i = 0; i < n; ++i) {
    double sigma = sigmas[i];
    Mat3X xc = x;
    if (sched.churn > 0) {
      double gamma = std::min(sched.churn / n, std::sqrt(2.0) - 1.0);
      double sigma_hat = sigma * (1.0 + gamma);
      double bump = std::sqrt(sigma_hat * sigma_hat - sigma * sigma);
      for (int r = 0; r < n_points; ++r)
        for (int d = 0; d < 3; ++d) xc(r, d) += bump * normal_double(rng);
      sigma = sigma_hat;
    }
    Mat3X d1 = (xc - denoise(xc, sigma)) / sigma;
    double dt = sigmas[i + 1] - sigma;
    if (sigmas[i + 1] == 0.0) {
      x = xc + dt * d1;  // final Euler step
    } else {
      Mat3X x2 = xc + dt * d1;
      Mat3X d2 = (x2 - denoise(x2, sigmas[i + 1])) / sigmas[i + 1];
      x = xc + dt * 0.5 * (d1 + d2);
    }
  }
  return x;
}

DiffusionTrainResult train_diffusion(Model& model, const std::vector<PointCloud>& dataset,
                                     const DiffusionSchedule& sched, const TrainOptions& opts) {
  check(!dataset.empty(), "train_diffusion: empty dataset");
  model.geometry_scale = 1.0;  // positions are pre-scaled by c_in

  std::vector<Tensor> params = model.parameters();
  AdamState state;
  AdamOptions adam;
  adam.weight_decay = opts.weight_decay;

  DiffusionTrainResult result;
  Rng rng(split_seed(opts.seed, 0xd1ff));
  const int n = static_cast<int>(dataset.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[uniform_int(rng, i + 1)]);
    adam.lr = opts.lr * cosine_lr(epoch, opts.epochs, opts.warmup);
    double epoch_loss = 0;
    int steps = 0;
    for (int at = 0; at < n; at += opts.batch, ++steps) {
      int hi = std::min(at + opts.batch, n);
      Tape tape;
      TapeScope scope(tape);
      Tensor loss;
      for (int s = at; s < hi; ++s) {
        const Mat3X& clean = dataset[order[s]].positions;
        double sigma = std::exp(-1.2 + 1.2 * normal_double(rng));
        Mat3X noisy = clean;
        for (int r = 0; r < noisy.rows(); ++r)
          for (int d = 0; d < 3; ++d) noisy(r, d) += sigma * normal_double(rng);
        Tensor dhat = edm_denoise(model, noisy, sigma, sched.sigma_data);
        double lambda = (sigma * sigma + sched.sigma_data * sched.sigma_data) /
                        std::pow(sigma * sched.sigma_data, 2);
        Tensor term = scale(mse_loss(dhat, Tensor::from_matrix(clean)),
                            static_cast<real_t>(lambda / (hi - at)));
        loss = s == at ? term : add(loss, term);
      }
      double lv = static_cast<double>(loss.scalar_value());
      if (!std::isfinite(lv))
        throw std::runtime_error("diffusion training diverged at epoch " + std::to_string(epoch));
      tape.backward(loss);
      adam_step(params, state, adam);
      zero_grads(params);
      epoch_loss += lv;
    }
    result.epoch_losses.push_back(epoch_loss / steps);
  }
  return result;
}

double chamfer_distance(const Mat3X& a, const Mat3X& b) {
  check(a.rows() > 0 && b.rows() > 0, "chamfer_distance: empty cloud");
  auto one_way = [](const Mat3X& u, const Mat3X& v) {
    double total = 0;
    for (int i = 0; i < u.rows(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < v.rows(); ++j)
        best = std::min(best, (u.row(i) - v.row(j)).squaredNorm());
      total += best;
    }
    return total / u.rows();
  };
  return one_way(a, b) + one_way(b, a);
}

double chamfer_to_set(const Mat3X& x, const std::vector<PointCloud>& refs) {
  double best = std::numeric_limits<double>::infinity();
  for (const PointCloud& r : refs) best = std::min(best, chamfer_distance(x, r.positions));
  return best;
}

double empirical_sigma_data(const std::vector<PointCloud>& dataset) {
  double sum = 0, sum2 = 0;
  long count = 0;
  for (const PointCloud& c : dataset) {
    sum += c.positions.sum();
    sum2 += c.positions.array().square().sum();
    count += c.positions.size();
  }
  double mean = sum / count;
  return std::sqrt(std::max(1e-12, sum2 / count - mean * mean));
}

}  // namespace rapidash
