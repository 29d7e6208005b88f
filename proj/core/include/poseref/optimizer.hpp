#pragma once

#include <cstdint>
#include <vector>

#include "poseref/tensor.hpp"

namespace poseref {

struct AmsgradConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// AMSGrad: Adam with a running elementwise maximum of the second-moment estimate,
// so the effective per-parameter step size never grows back.
class Amsgrad {
 public:
  Amsgrad(std::vector<Tensor> params, AmsgradConfig config = {});

  void set_lr(double lr) { config_.lr = lr; }
  double lr() const { return config_.lr; }
  std::int64_t step_count() const { return steps_; }

  // Applies one update from the gradients currently on the parameters. Parameters
  // with no accumulated gradient are treated as zero-gradient. Throws on
  // non-finite gradients without touching any parameter.
  void step();
  void zero_grad();

  const std::vector<std::vector<double>>& vhat() const { return vhat_; }

 private:
  std::vector<Tensor> params_;
  AmsgradConfig config_;
  std::vector<std::vector<double>> m_, v_, vhat_;
  std::int64_t steps_ = 0;
};

// lr(epoch) = initial * per_epoch^epoch * drop^(epoch / drop_every), constant
// within an epoch.
double lr_schedule(int epoch, double initial, double per_epoch = 0.95,
                   double drop = 0.5, int drop_every = 5);

}  // namespace poseref
