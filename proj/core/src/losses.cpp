#include "poseref/losses.hpp"

#include <stdexcept>

namespace poseref {
namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

// (N,3,J,...) -> per-joint Euclidean norms (N,J,...) over the coordinate axis.
Tensor coord_norms(const Tensor& d) {
  return sqrt(sum(square(d), {1}, false));
}

// Bone vector child - parent as (N,3,1,...) slices of a (N,3,J) pose.
Tensor bone_vec(const Tensor& pose, int parent, int child) {
  return sub(narrow(pose, 2, child, 1), narrow(pose, 2, parent, 1));
}

Tensor bone_len(const Tensor& pose, int parent, int child) {
  // (N,3,1) -> (N,1) norms
  return coord_norms(bone_vec(pose, parent, child));
}

void check_pose_pair(const char* op, const Tensor& pred, const Tensor& gt) {
  require(pred.rank() == 3 && pred.size(1) == 3,
          std::string(op) + ": pose tensors must be (N,3,J), got " +
              shape_str(pred.shape()));
  require(pred.shape() == gt.shape(), std::string(op) + ": pred shape " +
                                          shape_str(pred.shape()) + " != gt shape " +
                                          shape_str(gt.shape()));
}

}  // namespace

Tensor pose_loss(const Tensor& pred, const Tensor& gt) {
  check_pose_pair("pose_loss", pred, gt);
  return mean(coord_norms(sub(pred, gt)));
}

Tensor derivative_loss(const Tensor& pred_seq, const Tensor& gt_seq) {
  require(pred_seq.rank() == 4 && pred_seq.size(1) == 3,
          "derivative_loss: sequences must be (N,3,J,T), got " +
              shape_str(pred_seq.shape()));
  require(pred_seq.shape() == gt_seq.shape(),
          "derivative_loss: pred/gt shapes differ");
  const int T = pred_seq.size(3);
  require(T >= 2, "derivative_loss: needs at least two frames");
  auto velocity = [T](const Tensor& s) {
    return sub(narrow(s, 3, 1, T - 1), narrow(s, 3, 0, T - 1));
  };
  return mean(coord_norms(sub(velocity(pred_seq), velocity(gt_seq))));
}

Tensor symmetry_loss(const Tensor& pred, const SkeletonTopology& topo) {
  require(pred.rank() == 3 && pred.size(1) == 3,
          "symmetry_loss: pose must be (N,3,J), got " + shape_str(pred.shape()));
  require(pred.size(2) == topo.joint_count(),
          "symmetry_loss: joint count does not match topology");
  const auto pairs = symmetric_bone_pairs(topo);
  require(!pairs.empty(), "symmetry_loss: topology has no symmetric bone pairs");
  Tensor acc;
  for (const auto& [left, right] : pairs) {
    const Tensor diff = mean(abs(sub(bone_len(pred, left.first, left.second),
                                     bone_len(pred, right.first, right.second))));
    acc = acc.defined() ? add(acc, diff) : diff;
  }
  return mul(acc, 1.0 / static_cast<double>(pairs.size()));
}

Tensor symmetry_loss_vs_gt(const Tensor& pred, const Tensor& gt,
                           const SkeletonTopology& topo) {
  check_pose_pair("symmetry_loss_vs_gt", pred, gt);
  require(pred.size(2) == topo.joint_count(),
          "symmetry_loss_vs_gt: joint count does not match topology");
  const auto pairs = symmetric_bone_pairs(topo);
  require(!pairs.empty(), "symmetry_loss_vs_gt: topology has no symmetric bone pairs");
  Tensor acc;
  int bones = 0;
  for (const auto& [left, right] : pairs) {
    for (const auto& bone : {left, right}) {
      const Tensor diff = mean(abs(sub(bone_len(pred, bone.first, bone.second),
                                       bone_len(gt, bone.first, bone.second))));
      acc = acc.defined() ? add(acc, diff) : diff;
      ++bones;
    }
  }
  return mul(acc, 1.0 / static_cast<double>(bones));
}

LossTerms total_loss(const Tensor& pred, const Tensor& gt, const Tensor& pred_seq,
                     const Tensor& gt_seq, const SkeletonTopology& topo,
                     const LossWeights& weights, bool sym_vs_gt) {
  require(weights.pose > 0.0 || weights.deriv > 0.0 || weights.sym > 0.0,
          "total_loss: at least one weight must be positive");
  LossTerms terms;
  terms.pose = pose_loss(pred, gt);
  terms.sym = sym_vs_gt ? symmetry_loss_vs_gt(pred, gt, topo)
                        : symmetry_loss(pred, topo);
  Tensor total = mul(terms.pose, weights.pose);
  if (pred_seq.defined()) {
    terms.deriv = derivative_loss(pred_seq, gt_seq);
    total = add(total, mul(terms.deriv, weights.deriv));
  }
  total = add(total, mul(terms.sym, weights.sym));
  terms.total = total;
  return terms;
}

}  // namespace poseref
