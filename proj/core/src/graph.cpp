#include "poseref/graph.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "poseref/rng.hpp"

namespace poseref {

StGraph build_graph(const SkeletonTopology& topo, int frames) {
  if (frames < 1) throw std::invalid_argument("build_graph: frames must be >= 1");
  const auto bad = validate(topo);
  if (!bad.empty()) throw std::invalid_argument("build_graph: invalid topology: " + bad.front());

  StGraph g;
  g.frames = frames;
  g.joints = topo.joint_count();
  g.nodes = frames * g.joints;
  const int P = g.nodes;
  for (auto& a : g.class_adj) a = Tensor::zeros({P, P});

  auto set = [&](int cls, int i, int q) { g.class_adj[cls].at({i, q}) = 1.0; };

  for (int t = 0; t < frames; ++t) {
    for (int j = 0; j < g.joints; ++j) {
      const int i = g.node_index(t, j);
      set(0, i, i);  // class 1: self
      if (topo.parent[j] >= 0)
        set(1, i, g.node_index(t, topo.parent[j]));  // class 2: toward the spine
      for (int c = 0; c < g.joints; ++c)
        if (topo.parent[c] == j) set(2, i, g.node_index(t, c));  // class 3: away
      if (topo.symmetric[j] >= 0)
        set(3, i, g.node_index(t, topo.symmetric[j]));  // class 4: mirror joint
      if (t + 1 < frames) set(4, i, g.node_index(t + 1, j));  // class 5: forward
      if (t - 1 >= 0) set(5, i, g.node_index(t - 1, j));      // class 6: backward
    }
  }

  g.adj_tilde = Tensor::zeros({P, P});
  for (int k = 0; k < 6; ++k) {
    const double* a = g.class_adj[k].data();
    double* s = g.adj_tilde.data();
    for (std::size_t i = 0; i < g.adj_tilde.numel(); ++i) s[i] += a[i];
    g.class_norm[k] = normalize_class(g.class_adj[k]);
  }
  g.norm_tilde = normalize_class(g.adj_tilde);
  return g;
}

Tensor normalize_class(const Tensor& adj) {
  if (adj.rank() != 2 || adj.size(0) != adj.size(1))
    throw std::invalid_argument("normalize_class: adjacency must be square");
  const int P = adj.size(0);
  std::vector<double> dinv(P, 0.0);
  const double* a = adj.data();
  for (int i = 0; i < P; ++i) {
    double deg = 0.0;
    for (int q = 0; q < P; ++q) deg += a[static_cast<std::size_t>(i) * P + q];
    dinv[i] = deg > 0.0 ? 1.0 / std::sqrt(deg) : 0.0;
  }
  Tensor out = Tensor::zeros({P, P});
  double* o = out.data();
  for (int i = 0; i < P; ++i)
    for (int q = 0; q < P; ++q) {
      const std::size_t idx = static_cast<std::size_t>(i) * P + q;
      o[idx] = dinv[i] * a[idx] * dinv[q];
    }
  return out;
}

Tensor kipf_propagate(const Tensor& h, const Tensor& w, const StGraph& graph) {
  if (h.rank() != 2 || h.size(0) != graph.nodes)
    throw std::invalid_argument("kipf_propagate: h must be (P,C), got " +
                                shape_str(h.shape()));
  return relu(matmul(matmul(graph.norm_tilde, h), w));
}

Tensor graph_conv(const Tensor& x,
                  const std::vector<std::pair<Tensor, Tensor>>& terms) {
  if (terms.empty()) throw std::invalid_argument("graph_conv: no terms");
  const bool batched = x.rank() == 3;
  if (!batched && x.rank() != 2)
    throw std::invalid_argument("graph_conv: x must be (P,C) or (N,P,C), got " +
                                shape_str(x.shape()));
  const int N = batched ? x.size(0) : 1;
  const int P = batched ? x.size(1) : x.size(0);
  const int C = batched ? x.size(2) : x.size(1);

  // (N,P,C) -> (P, N*C) so the adjacency applies to the whole batch in one
  // product; then (P*N, C) x (C, C_out) mixes channels.
  const Tensor xp = batched ? reshape(permute(x, {1, 0, 2}), {P, N * C}) : x;

  Tensor acc;
  int cout = -1;
  for (const auto& [norm_adj, kernel] : terms) {
    if (norm_adj.rank() != 2 || norm_adj.size(0) != P || norm_adj.size(1) != P)
      throw std::invalid_argument("graph_conv: adjacency shape mismatch");
    if (kernel.rank() != 2 || kernel.size(0) != C)
      throw std::invalid_argument("graph_conv: kernel must be (C_in,C_out)");
    if (cout < 0) cout = kernel.size(1);
    if (kernel.size(1) != cout)
      throw std::invalid_argument("graph_conv: kernels disagree about C_out");
    Tensor gathered = matmul(norm_adj, xp);                    // (P, N*C)
    gathered = reshape(gathered, {P * N, C});
    Tensor term = matmul(gathered, kernel);                    // (P*N, C_out)
    acc = acc.defined() ? add(acc, term) : term;
  }
  acc = reshape(acc, {P, N, cout});
  acc = permute(acc, {1, 0, 2});  // (N,P,C_out)
  return batched ? acc : reshape(acc, {P, cout});
}

Tensor class_conv(const Tensor& x, const std::array<Tensor, 6>& kernels,
                  const StGraph& graph) {
  std::vector<std::pair<Tensor, Tensor>> terms;
  terms.reserve(6);
  for (int k = 0; k < 6; ++k) terms.emplace_back(graph.class_norm[k], kernels[k]);
  const int P = x.rank() == 3 ? x.size(1) : x.size(0);
  if (P != graph.nodes)
    throw std::invalid_argument("class_conv: x node count " + std::to_string(P) +
                                " does not match graph (" + std::to_string(graph.nodes) + ")");
  return graph_conv(x, terms);
}

double spectral_radius(const Tensor& m, int iterations, std::uint64_t seed) {
  if (m.rank() != 2 || m.size(0) != m.size(1))
    throw std::invalid_argument("spectral_radius: matrix must be square");
  const int P = m.size(0);
  Rng rng(seed);
  std::vector<double> v(P), next(P);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  const double* a = m.data();
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    double norm = 0.0;
    for (int i = 0; i < P; ++i) {
      double s = 0.0;
      for (int q = 0; q < P; ++q) s += a[static_cast<std::size_t>(i) * P + q] * v[q];
      next[i] = s;
      norm += s * s;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    double dot = 0.0;
    for (int i = 0; i < P; ++i) dot += next[i] * v[i];
    lambda = dot;  // Rayleigh quotient with ||v|| = 1
    for (int i = 0; i < P; ++i) v[i] = next[i] / norm;
  }
  return std::fabs(lambda);
}

namespace {

void dump_matrix(std::string& out, const std::string& name, const Tensor& m) {
  out += name + "\n";
  const int rows = m.size(0), cols = m.size(1);
  char buf[32];
  for (int i = 0; i < rows; ++i) {
    for (int q = 0; q < cols; ++q) {
      std::snprintf(buf, sizeof(buf), "%.6g", m.at({i, q}));
      out += buf;
      out += q + 1 < cols ? ' ' : '\n';
    }
  }
}

}  // namespace

std::string dump_graph(const StGraph& graph) {
  std::string out;
  out += "frames " + std::to_string(graph.frames) + "\n";
  out += "joints " + std::to_string(graph.joints) + "\n";
  out += "nodes " + std::to_string(graph.nodes) + "\n";
  dump_matrix(out, "A_tilde", graph.adj_tilde);
  for (int k = 0; k < 6; ++k)
    dump_matrix(out, "A" + std::to_string(k + 1), graph.class_adj[k]);
  for (int k = 0; k < 6; ++k)
    dump_matrix(out, "N" + std::to_string(k + 1), graph.class_norm[k]);
  dump_matrix(out, "N_tilde", graph.norm_tilde);
  return out;
}

}  // namespace poseref
