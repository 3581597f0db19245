#include "rapidash/optim.hpp"

#include <cmath>

namespace rapidash {

void adam_step(std::vector<Tensor>& params, AdamState& state, const AdamOptions& opt) {
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), ArrayX());
    state.v.assign(params.size(), ArrayX());
    for (size_t i = 0; i < params.size(); ++i) {
      state.m[i] = ArrayX::Zero(params[i].numel());
      state.v[i] = ArrayX::Zero(params[i].numel());
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    ArrayX& p = params[i].values();
    const ArrayX& g = params[i].grad();
    ArrayX& m = state.m[i];
    ArrayX& v = state.v[i];
    m = static_cast<real_t>(opt.beta1) * m + static_cast<real_t>(1 - opt.beta1) * g;
    v = static_cast<real_t>(opt.beta2) * v + static_cast<real_t>(1 - opt.beta2) * g.square();
    ArrayX mhat = m / static_cast<real_t>(bc1);
    ArrayX vhat = v / static_cast<real_t>(bc2);
    if (opt.weight_decay != 0)
      p -= static_cast<real_t>(opt.lr * opt.weight_decay) * p;
    p -= static_cast<real_t>(opt.lr) * mhat / (vhat.sqrt() + static_cast<real_t>(opt.eps));
  }
}

void zero_grads(std::vector<Tensor>& params) {
  for (Tensor& p : params) p.zero_grad();
}

double cosine_lr(int epoch, int total, int warmup) {
  check(epoch >= 0 && epoch <= total, "cosine_lr: epoch out of range");
  if (warmup > 0 && epoch < warmup) return static_cast<double>(epoch) / warmup;
  if (total <= warmup) return 1.0;
  double progress = static_cast<double>(epoch - warmup) / (total - warmup);
  return 0.5 * (1.0 + std::cos(M_PI * progress));
}

namespace {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + 1e-8);
}

}  // namespace

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double h) {
  x.impl_->requires_grad = true;
  x.zero_grad();
  ArrayX analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor y = f(x);
    check(y.numel() == 1, "grad_check: f must be scalar-valued");
    tape.backward(y);
    analytic = x.grad();
  }
  double worst = 0;
  for (Eigen::Index i = 0; i < x.numel(); ++i) {
    real_t saved = x.values()[i];
    x.values()[i] = saved + static_cast<real_t>(h);
    double up = static_cast<double>(f(x).scalar_value());
    x.values()[i] = saved - static_cast<real_t>(h);
    double down = static_cast<double>(f(x).scalar_value());
    x.values()[i] = saved;
    double numeric = (up - down) / (2 * h);
    worst = std::max(worst, relative_error(static_cast<double>(analytic[i]), numeric));
  }
  return worst;
}

double grad_check_params(const std::function<Tensor()>& f, std::vector<Tensor> params,
                         double h) {
  zero_grads(params);
  std::vector<ArrayX> analytic(params.size());
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor y = f();
    check(y.numel() == 1, "grad_check_params: f must be scalar-valued");
    tape.backward(y);
    for (size_t p = 0; p < params.size(); ++p) analytic[p] = params[p].grad();
  }
  double worst = 0;
  for (size_t p = 0; p < params.size(); ++p) {
    for (Eigen::Index i = 0; i < params[p].numel(); ++i) {
      real_t saved = params[p].values()[i];
      params[p].values()[i] = saved + static_cast<real_t>(h);
      double up = static_cast<double>(f().scalar_value());
      params[p].values()[i] = saved - static_cast<real_t>(h);
      double down = static_cast<double>(f().scalar_value());
      params[p].values()[i] = saved;
      double numeric = (up - down) / (2 * h);
      worst = std::max(worst, relative_error(static_cast<double>(analytic[p][i]), numeric));
    }
  }
  return worst;
}

}  // namespace rapidash
