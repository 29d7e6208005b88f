#pragma once

#include "poseref/ops.hpp"
#include "poseref/skeleton.hpp"

namespace poseref {

struct LossWeights {
  double pose = 1.0;
  double deriv = 0.5;
  double sym = 0.1;
};

// Mean per-joint Euclidean distance; pred and gt are (N,3,J). Same units in,
// same units out.
Tensor pose_loss(const Tensor& pred, const Tensor& gt);

// Velocity mismatch: mean over batch, joints and t in [1,T) of
// ||(pred_t - pred_{t-1}) - (gt_t - gt_{t-1})||. Sequences are (N,3,J,T), T >= 2.
Tensor derivative_loss(const Tensor& pred_seq, const Tensor& gt_seq);

// Mean |  ||left bone|| - ||right bone||  | over bones whose both endpoints are
// mirror joints; pred is (N,3,J).
Tensor symmetry_loss(const Tensor& pred, const SkeletonTopology& topo);

// Alternative referent: each symmetric-pair bone's predicted length against the
// same bone's ground-truth length.
Tensor symmetry_loss_vs_gt(const Tensor& pred, const Tensor& gt,
                           const SkeletonTopology& topo);

struct LossTerms {
  Tensor total;
  Tensor pose;
  Tensor deriv;  // undefined when no clip view was provided
  Tensor sym;
};

// Weighted combination. pred/gt are window outputs (N,3,J); pred_seq/gt_seq are
// the same outputs regrouped as clips (N_clips,3,J,clip_len) for the derivative
// term and may be empty tensors when clips are unavailable.
LossTerms total_loss(const Tensor& pred, const Tensor& gt, const Tensor& pred_seq,
                     const Tensor& gt_seq, const SkeletonTopology& topo,
                     const LossWeights& weights, bool sym_vs_gt = false);

}  // namespace poseref
