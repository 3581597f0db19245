#pragma once

#include <functional>

#include "rapidash/tasks.hpp"

namespace rapidash {

// Karras-style noise schedule: rho-spaced sigma ladder with a stochastic
// churn option, plus the preconditioning scalings tied to sigma_data.
struct DiffusionSchedule {
  double sigma_min = 0.02;
  double sigma_max = 5.0;
  double sigma_data = 0.5;
  int n_steps = 32;
  double rho = 7.0;
  double churn = 0.0;
};

// n_steps descending sigmas from sigma_max to sigma_min, then a final 0:
// sigma_i = (sigma_max^(1/rho) + i/(n-1) (sigma_min^(1/rho) - sigma_max^(1/rho)))^rho.
VecX sigma_ladder(const DiffusionSchedule& sched);

struct EdmScalings {
  double c_skip, c_out, c_in, c_noise;
};
// c_skip = sd^2/(s^2+sd^2), c_out = s sd/sqrt(s^2+sd^2), c_in = 1/sqrt(s^2+sd^2),
// c_noise = ln(s)/4.
EdmScalings edm_scalings(double sigma, double sigma_data);

// Denoised estimate D(x, sigma) = c_skip x + c_out F(c_in x, c_noise) with F
// a vector-readout model fed the scaled positions and the noise embedding as
// a broadcast scalar channel. The differentiable path used in training.
Tensor edm_denoise(const Model& model, const Mat3X& x_noisy, double sigma, double sigma_data);
// Eager convenience wrapper of the same computation.
Mat3X edm_denoise_positions(const Model& model, const Mat3X& x_noisy, double sigma,
                            double sigma_data);

using DenoiseFn = std::function<Mat3X(const Mat3X&, double)>;

// Stochastic second-order (Heun) sampler over the sigma ladder, optional
// per-step churn noise injection. Deterministic given the generator state.
Mat3X karras_sample(const DenoiseFn& denoise, const DiffusionSchedule& sched, int n_points,
                    Rng& rng);

struct DiffusionTrainResult {
  std::vector<double> epoch_losses;
};

// EDM objective: lambda(sigma) |D(x0 + sigma eps, sigma) - x0|^2 with
// lambda = (sigma^2 + sd^2) / (sigma sd)^2 and ln sigma ~ N(-1.2, 1.2^2).
DiffusionTrainResult train_diffusion(Model& model, const std::vector<PointCloud>& dataset,
                                     const DiffusionSchedule& sched, const TrainOptions& opts);

// Symmetric Chamfer distance between two point sets.
double chamfer_distance(const Mat3X& a, const Mat3X& b);
// Min Chamfer distance from one cloud to a set of reference clouds.
double chamfer_to_set(const Mat3X& x, const std::vector<PointCloud>& refs);

// Empirical per-coordinate standard deviation of the dataset positions.
double empirical_sigma_data(const std::vector<PointCloud>& dataset);

}  // namespace rapidash
