#pragma once

#include <array>
#include <string>

#include "poseref/ops.hpp"
#include "poseref/skeleton.hpp"
#include "poseref/tensor.hpp"

namespace poseref {

// Spatial-temporal graph over P = frames * joints nodes. The neighborhood of a
// node splits into six disjoint classes: self, physically-connected node nearer
// the spine, physically-connected node farther from the spine, mirror joint,
// same joint one frame ahead, same joint one frame back. The class adjacencies
// sum to adj_tilde = A + I.
struct StGraph {
  int frames = 0;
  int joints = 0;
  int nodes = 0;
  std::array<Tensor, 6> class_adj;   // binary (P,P)
  std::array<Tensor, 6> class_norm;  // D_k^-1/2 A_k D_k^-1/2
  Tensor adj_tilde;                  // (P,P), A + I
  Tensor norm_tilde;                 // D~^-1/2 (A+I) D~^-1/2

  int node_index(int frame, int joint) const { return frame * joints + joint; }
};

StGraph build_graph(const SkeletonTopology& topo, int frames);

// Symmetric degree normalization with row-sum degrees; zero-degree entries use the
// pseudo-inverse convention (0 in D^-1/2), so isolated rows/columns stay zero.
Tensor normalize_class(const Tensor& adj);

// Dense reference propagation: relu(norm_tilde @ h @ w), h is (P,C_in).
Tensor kipf_propagate(const Tensor& h, const Tensor& w, const StGraph& graph);

// Pre-activation decomposition step over arbitrary (normalized adjacency, kernel)
// pairs: sum_k N_k @ X @ W_k. X is (P,C) or batched (N,P,C).
Tensor graph_conv(const Tensor& x,
                  const std::vector<std::pair<Tensor, Tensor>>& terms);

// Same, over the graph's six classes. kernels[k] is (C_in, C_out).
Tensor class_conv(const Tensor& x, const std::array<Tensor, 6>& kernels,
                  const StGraph& graph);

// Largest |eigenvalue| estimate via power iteration on a symmetric matrix.
double spectral_radius(const Tensor& m, int iterations = 200, std::uint64_t seed = 7);

// Text dump of adj_tilde plus every A_k and N_k, for inspection and golden tests.
std::string dump_graph(const StGraph& graph);

}  // namespace poseref
