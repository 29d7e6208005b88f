#pragma once

// Brute-force reference implementations and shared test helpers. Everything here
// is written independently of the library's internals: plain loops over plain
// arrays, so library results can be checked against a second opinion.

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "poseref/dataset.hpp"
#include "poseref/rng.hpp"
#include "poseref/skeleton.hpp"
#include "poseref/tensor.hpp"
#include "poseref/ops.hpp"

namespace oracle {

using poseref::OccluderBox;
using poseref::Rng;
using poseref::Shape;
using poseref::SkeletonTopology;
using poseref::Tensor;
using poseref::Vec3;

inline Tensor random_tensor(Rng& rng, const Shape& shape, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t = Tensor::zeros(shape);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// ---------------------------------------------------------------------------
// dense linear algebra

inline std::vector<double> matmul(const std::vector<double>& a,
                                  const std::vector<double>& b, int m, int k, int n) {
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int t = 0; t < k; ++t) s += a[i * k + t] * b[t * n + j];
      out[i * n + j] = s;
    }
  return out;
}

// sum over terms of N @ X @ W, all dense, (P,P) x (P,C) x (C,F).
inline std::vector<double> graph_prop(
    const std::vector<std::pair<const Tensor*, const Tensor*>>& terms,
    const std::vector<double>& x, int P, int C, int F) {
  std::vector<double> out(static_cast<std::size_t>(P) * F, 0.0);
  for (const auto& [adj, kernel] : terms) {
    const auto gathered = matmul(adj->values(), x, P, P, C);
    const auto mixed = matmul(gathered, kernel->values(), P, C, F);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += mixed[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// finite differences

// Max relative gradient error of f over every element of every input, using a
// weighted-sum scalarization so all output elements contribute. f must be pure.
inline double fd_max_rel_err(
    const std::function<Tensor(const std::vector<Tensor>&)>& f,
    std::vector<Tensor> inputs, double eps = 1e-6, std::uint64_t weight_seed = 99) {
  for (Tensor& t : inputs) t.set_requires_grad(true);

  Tensor probe = f(inputs);
  Rng wrng(weight_seed);
  Tensor weights = random_tensor(wrng, probe.shape(), -1.0, 1.0);

  auto scalarize = [&](const std::vector<Tensor>& args) {
    return poseref::sum(poseref::mul(f(args), weights));
  };

  Tensor loss = scalarize(inputs);
  loss.backward();

  double worst = 0.0;
  for (Tensor& t : inputs) {
    const std::vector<double> analytic = t.grad();
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double keep = t.values()[i];
      double plus, minus;
      {
        poseref::NoGradGuard guard;
        t.values()[i] = keep + eps;
        plus = scalarize(inputs).item();
        t.values()[i] = keep - eps;
        minus = scalarize(inputs).item();
        t.values()[i] = keep;
      }
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic.empty() ? 0.0 : analytic[i];
      const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
      worst = std::max(worst, std::fabs(a - numeric) / denom);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// losses, joint by joint

inline double pose_loss(const std::vector<double>& pred, const std::vector<double>& gt,
                        int N, int J) {
  double s = 0.0;
  for (int n = 0; n < N; ++n)
    for (int j = 0; j < J; ++j) {
      double d2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double d = pred[(n * 3 + c) * J + j] - gt[(n * 3 + c) * J + j];
        d2 += d * d;
      }
      s += std::sqrt(d2);
    }
  return s / (static_cast<double>(N) * J);
}

inline double derivative_loss(const std::vector<double>& pred,
                              const std::vector<double>& gt, int N, int J, int T) {
  auto at = [J, T](const std::vector<double>& v, int n, int c, int j, int t) {
    return v[((n * 3 + c) * J + j) * T + t];
  };
  double s = 0.0;
  for (int n = 0; n < N; ++n)
    for (int j = 0; j < J; ++j)
      for (int t = 1; t < T; ++t) {
        double d2 = 0.0;
        for (int c = 0; c < 3; ++c) {
          const double vp = at(pred, n, c, j, t) - at(pred, n, c, j, t - 1);
          const double vg = at(gt, n, c, j, t) - at(gt, n, c, j, t - 1);
          d2 += (vp - vg) * (vp - vg);
        }
        s += std::sqrt(d2);
      }
  return s / (static_cast<double>(N) * J * (T - 1));
}

inline double bone_length(const std::vector<double>& pose, int N, int J, int n,
                          int parent, int child) {
  double d2 = 0.0;
  for (int c = 0; c < 3; ++c) {
    const double d = pose[(n * 3 + c) * J + child] - pose[(n * 3 + c) * J + parent];
    d2 += d * d;
  }
  return std::sqrt(d2);
}

inline double symmetry_loss(const std::vector<double>& pred, int N,
                            const SkeletonTopology& topo) {
  const auto pairs = poseref::symmetric_bone_pairs(topo);
  const int J = topo.joint_count();
  double s = 0.0;
  for (const auto& [l, r] : pairs) {
    double acc = 0.0;
    for (int n = 0; n < N; ++n)
      acc += std::fabs(bone_length(pred, N, J, n, l.first, l.second) -
                       bone_length(pred, N, J, n, r.first, r.second));
    s += acc / N;
  }
  return s / pairs.size();
}

inline double mpjpe_masked(const std::vector<double>& pred,
                           const std::vector<double>& gt,
                           const std::vector<std::uint8_t>& mask, int N, int J) {
  double s = 0.0;
  long count = 0;
  for (int n = 0; n < N; ++n)
    for (int j = 0; j < J; ++j) {
      if (!mask[static_cast<std::size_t>(n) * J + j]) continue;
      double d2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double d = pred[(n * 3 + c) * J + j] - gt[(n * 3 + c) * J + j];
        d2 += d * d;
      }
      s += std::sqrt(d2);
      ++count;
    }
  return count ? s / count : std::nan("");
}

// ---------------------------------------------------------------------------
// geometry

inline bool march_hits_box(const Vec3& a, const Vec3& b, const OccluderBox& box,
                           double step_m = 0.001) {
  const Vec3 d = b - a;
  const double len = d.norm();
  const int steps = std::max(1, static_cast<int>(std::ceil(len / step_m)));
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    if (box.contains(a + d * t)) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// random valid topologies

// Root-first midline chain, then mirrored pairs attached to random earlier
// joints; the right member's parent is the mirror of the left member's parent,
// which keeps the mirrored-parents rule true by construction.
inline SkeletonTopology random_mirrored_topology(Rng& rng) {
  SkeletonTopology topo;
  const int midline = rng.uniform_int(1, 3);
  for (int i = 0; i < midline; ++i) {
    topo.names.push_back("m" + std::to_string(i));
    topo.parent.push_back(i == 0 ? -1 : i - 1);
    topo.symmetric.push_back(-1);
  }
  const int pairs = rng.uniform_int(1, 6);
  for (int p = 0; p < pairs; ++p) {
    const int existing = static_cast<int>(topo.parent.size());
    const int anchor = rng.uniform_int(0, existing - 1);
    const int left = existing;
    const int right = existing + 1;
    topo.names.push_back("l" + std::to_string(left));
    topo.parent.push_back(anchor);
    topo.symmetric.push_back(right);
    topo.names.push_back("r" + std::to_string(right));
    topo.parent.push_back(topo.symmetric[anchor] < 0 ? anchor : topo.symmetric[anchor]);
    topo.symmetric.push_back(left);
  }
  topo.root = 0;
  return topo;
}

// Hop count to the root, walking parent links; independent of the library's
// implementation.
inline int hops_to_root(const SkeletonTopology& topo, int j) {
  int hops = 0;
  while (topo.parent[j] >= 0) {
    j = topo.parent[j];
    ++hops;
  }
  return hops;
}

}  // namespace oracle
