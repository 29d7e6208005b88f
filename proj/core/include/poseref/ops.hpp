#pragma once

#include "poseref/tensor.hpp"

namespace poseref {

// Elementwise binary ops broadcast with trailing-dimension alignment (an extent of 1
// or a missing leading axis stretches). Gradients reduce back over broadcast axes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor sub(const Tensor& a, double b);
Tensor sub(double a, const Tensor& b);
Tensor mul(const Tensor& a, double b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator+(const Tensor& a, double b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, double b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, double b) { return mul(a, b); }
inline Tensor operator*(double a, const Tensor& b) { return mul(b, a); }

// (M,K) x (K,N) -> (M,N).
Tensor matmul(const Tensor& a, const Tensor& b);
// (B,M,K) x (B,K,N) -> (B,M,N).
Tensor bmm(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& x);           // subgradient 0 at 0
Tensor abs(const Tensor& x);            // subgradient 0 at 0
Tensor sqrt(const Tensor& x);           // subgradient 0 at 0 (norm-at-zero convention)
Tensor square(const Tensor& x);
Tensor softmax(const Tensor& x, int axis);

// Reductions. axes empty = all axes. keepdims keeps reduced extents as 1.
Tensor sum(const Tensor& x, const std::vector<int>& axes = {}, bool keepdims = false);
Tensor mean(const Tensor& x, const std::vector<int>& axes = {}, bool keepdims = false);

Tensor reshape(const Tensor& x, const Shape& shape);
Tensor permute(const Tensor& x, const std::vector<int>& order);
// Contiguous slice along one axis.
Tensor narrow(const Tensor& x, int axis, int start, int length);

// Running statistics owned by the caller (one value per channel).
struct BatchNormStats {
  std::vector<double> mean;
  std::vector<double> var;
};

// x is (N,C,...) and is normalized per channel (axis 1). Training mode uses batch
// statistics over all non-channel axes and folds them into the running stats;
// inference mode applies the frozen affine transform.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats& stats, bool training, double momentum = 0.1,
                  double eps = 1e-5);

// x (N,C,T,V) convolved along T only with kernel (C_out,C_in,k_t), zero padding
// chosen so the output keeps T ("same" padding).
Tensor temporal_conv(const Tensor& x, const Tensor& kernel);

}  // namespace poseref
