#pragma once

#include <functional>

#include "rapidash/tensor.hpp"

namespace rapidash {

// Adam with decoupled weight decay. State slots are allocated lazily and
// keyed by parameter order, which must stay fixed across steps.
struct AdamState {
  std::vector<ArrayX> m, v;
  long step = 0;
};

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-8;
};

void adam_step(std::vector<Tensor>& params, AdamState& state, const AdamOptions& opt);
void zero_grads(std::vector<Tensor>& params);

// Linear warmup to 1 over `warmup` epochs, then cosine decay to 0 at `total`.
double cosine_lr(int epoch, int total, int warmup);

// Max over coordinates of |analytic - numeric| / (|analytic| + |numeric| +
// 1e-8), central differences with step h. f must return a scalar tensor.
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double h = 1e-4);

// Same contract, perturbing every coordinate of every listed parameter while
// f() re-evaluates the scalar objective.
double grad_check_params(const std::function<Tensor()>& f, std::vector<Tensor> params,
                         double h = 1e-4);

}  // namespace rapidash
