#include "poseref/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace poseref {

Amsgrad::Amsgrad(std::vector<Tensor> params, AmsgradConfig config)
    : params_(std::move(params)), config_(config) {
  if (params_.empty()) throw std::invalid_argument("Amsgrad: no parameters");
  m_.resize(params_.size());
  v_.resize(params_.size());
  vhat_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i].numel(), 0.0);
    v_[i].assign(params_[i].numel(), 0.0);
    vhat_[i].assign(params_[i].numel(), 0.0);
  }
}

void Amsgrad::step() {
  for (const Tensor& p : params_)
    for (double g : p.grad())
      if (!std::isfinite(g))
        throw std::domain_error("Amsgrad::step: non-finite gradient");

  ++steps_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    const std::vector<double>& grad = p.grad();
    double* x = p.data();
    const std::size_t n = p.numel();
    for (std::size_t j = 0; j < n; ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      m_[i][j] = config_.beta1 * m_[i][j] + (1.0 - config_.beta1) * g;
      v_[i][j] = config_.beta2 * v_[i][j] + (1.0 - config_.beta2) * g * g;
      if (v_[i][j] > vhat_[i][j]) vhat_[i][j] = v_[i][j];
      const double mhat = m_[i][j] / bc1;
      const double vcorr = vhat_[i][j] / bc2;
      x[j] -= config_.lr * mhat / (std::sqrt(vcorr) + config_.eps);
    }
  }
}

void Amsgrad::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

double lr_schedule(int epoch, double initial, double per_epoch, double drop,
                   int drop_every) {
  if (epoch < 0) throw std::invalid_argument("lr_schedule: negative epoch");
  if (drop_every < 1) throw std::invalid_argument("lr_schedule: drop_every must be >= 1");
  return initial * std::pow(per_epoch, epoch) * std::pow(drop, epoch / drop_every);
}

}  // namespace poseref
