#include "poseref/model.hpp"

#include <cmath>
#include <stdexcept>

#include "poseref/rng.hpp"

namespace poseref {

void RefinerConfig::validate() const {
  if (frames < 1 || frames % 2 == 0)
    throw std::invalid_argument("model config: frames must be odd and positive");
  if (joints < 1) throw std::invalid_argument("model config: joints must be >= 1");
  if (in_channels < 1)
    throw std::invalid_argument("model config: in_channels must be >= 1");
  if (hidden < 1) throw std::invalid_argument("model config: hidden must be >= 1");
  if (layers < 1) throw std::invalid_argument("model config: layers must be >= 1");
  if (temporal_kernel < 1 || temporal_kernel % 2 == 0)
    throw std::invalid_argument("model config: temporal_kernel must be odd and positive");
  if (residual_output && in_channels != 3)
    throw std::invalid_argument(
        "model config: residual_output needs 3 input channels (xyz)");
}

namespace {

Tensor uniform_init(Rng& rng, const Shape& shape, double bound) {
  Tensor t = Tensor::zeros(shape);
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  t.set_requires_grad(true);
  return t;
}

Tensor zero_param(const Shape& shape) {
  Tensor t = Tensor::zeros(shape);
  t.set_requires_grad(true);
  return t;
}

}  // namespace

RefinerModel::RefinerModel(const RefinerConfig& config, const SkeletonTopology& topology,
                           std::uint64_t seed)
    : config_(config), topology_(topology), init_seed_(seed) {
  config_.validate();
  const auto bad = poseref::validate(topology_);
  if (!bad.empty())
    throw std::invalid_argument("model: invalid topology: " + bad.front());
  if (topology_.joint_count() != config_.joints)
    throw std::invalid_argument("model: topology joint count does not match config");

  graph_ = build_graph(topology_, config_.frames);

  Rng rng(mix_seed(seed, "model-init"));
  const int hidden = config_.hidden;
  for (int l = 0; l < config_.layers; ++l) {
    const int cin = l == 0 ? config_.in_channels : hidden;
    Layer layer;
    const double spatial_bound = 1.0 / std::sqrt(static_cast<double>(cin));
    for (int k = 0; k < 6; ++k)
      layer.class_kernels[k] = uniform_init(rng, {cin, hidden}, spatial_bound);
    const double temporal_bound =
        1.0 / std::sqrt(static_cast<double>(hidden) * config_.temporal_kernel);
    layer.temporal =
        uniform_init(rng, {hidden, hidden, config_.temporal_kernel}, temporal_bound);
    layer.bn_gamma = zero_param({hidden});
    for (double& v : layer.bn_gamma.values()) v = 1.0;
    layer.bn_beta = zero_param({hidden});
    layer.bn_stats.mean.assign(hidden, 0.0);
    layer.bn_stats.var.assign(hidden, 1.0);
    if (cin != hidden) layer.res_proj = uniform_init(rng, {cin, hidden}, spatial_bound);
    layers_.push_back(std::move(layer));
  }
  if (config_.use_nonlocal) {
    const int d = std::max(hidden / 2, 1);
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    attn_q_ = uniform_init(rng, {hidden, d}, bound);
    attn_k_ = uniform_init(rng, {hidden, d}, bound);
    attn_v_ = uniform_init(rng, {hidden, d}, bound);
    attn_out_ = zero_param({d, hidden});
  }
  head_w_ = zero_param({hidden, 3});
  head_b_ = zero_param({3});

  input_mean_.assign(config_.in_channels, 0.0);
  input_std_.assign(config_.in_channels, 1.0);
}

void RefinerModel::set_input_stats(std::vector<double> mean, std::vector<double> std) {
  if (static_cast<int>(mean.size()) != config_.in_channels ||
      static_cast<int>(std.size()) != config_.in_channels)
    throw std::invalid_argument("set_input_stats: expected one value per input channel");
  for (double s : std)
    if (!(s > 0.0)) throw std::invalid_argument("set_input_stats: std must be positive");
  input_mean_ = std::move(mean);
  input_std_ = std::move(std);
}

Tensor RefinerModel::layer_forward(const Tensor& x, Layer& layer, bool training) {
  const int N = x.size(0), C = x.size(1), T = x.size(2), V = x.size(3);
  const int cout = config_.hidden;
  Tensor xs = reshape(permute(x, {0, 2, 3, 1}), {N, T * V, C});
  Tensor g = class_conv(xs, layer.class_kernels, graph_);
  Tensor g4 = permute(reshape(g, {N, T, V, cout}), {0, 3, 1, 2});
  Tensor t = temporal_conv(g4, layer.temporal);
  Tensor b = batch_norm(t, layer.bn_gamma, layer.bn_beta, layer.bn_stats, training);
  Tensor res = x;
  if (layer.res_proj.defined()) {
    Tensor flat = reshape(permute(x, {0, 2, 3, 1}), {N * T * V, C});
    res = permute(reshape(matmul(flat, layer.res_proj), {N, T, V, cout}), {0, 3, 1, 2});
  }
  return relu(b + res);
}

Tensor RefinerModel::attention_forward(const Tensor& x) {
  const int N = x.size(0), C = x.size(1), T = x.size(2), V = x.size(3);
  const int P = T * V;
  const int d = attn_q_.size(1);
  Tensor xf = reshape(permute(x, {0, 2, 3, 1}), {N, P, C});
  Tensor flat = reshape(xf, {N * P, C});
  Tensor q = reshape(matmul(flat, attn_q_), {N, P, d});
  Tensor k = reshape(matmul(flat, attn_k_), {N, P, d});
  Tensor v = reshape(matmul(flat, attn_v_), {N, P, d});
  Tensor scores = bmm(q, permute(k, {0, 2, 1})) * (1.0 / std::sqrt(static_cast<double>(d)));
  Tensor attn = softmax(scores, 2);
  Tensor y = bmm(attn, v);
  Tensor delta = reshape(matmul(reshape(y, {N * P, d}), attn_out_), {N, P, C});
  return permute(reshape(xf + delta, {N, T, V, C}), {0, 3, 1, 2});
}

Tensor RefinerModel::forward4(const Tensor& x, bool training) {
  const int N = x.size(0), C = x.size(1), T = x.size(2), V = x.size(3);
  if (C != config_.in_channels || T != config_.frames || V != config_.joints)
    throw std::invalid_argument("forward: input is " + shape_str(x.shape()) +
                                ", model expects (N," +
                                std::to_string(config_.in_channels) + "," +
                                std::to_string(config_.frames) + "," +
                                std::to_string(config_.joints) + ")");
  Tensor raw_center = reshape(narrow(x, 2, T / 2, 1), {N, C, V});

  Tensor mean_t = Tensor::from({1, C, 1, 1}, input_mean_);
  std::vector<double> inv(input_std_.size());
  for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = 1.0 / input_std_[i];
  Tensor inv_t = Tensor::from({1, C, 1, 1}, inv);

  Tensor h = (x - mean_t) * inv_t;
  for (Layer& layer : layers_) h = layer_forward(h, layer, training);
  if (config_.use_nonlocal) h = attention_forward(h);

  Tensor hc = reshape(narrow(h, 2, T / 2, 1), {N, config_.hidden, V});
  Tensor hv = reshape(permute(hc, {0, 2, 1}), {N * V, config_.hidden});
  Tensor off = permute(reshape(add(matmul(hv, head_w_), head_b_), {N, V, 3}), {0, 2, 1});
  if (C == 3) {
    Tensor scale = Tensor::from({1, 3, 1}, {input_std_[0], input_std_[1], input_std_[2]});
    off = off * scale;
  }
  return config_.residual_output ? raw_center + off : off;
}

Tensor RefinerModel::forward(const Tensor& x, bool training) {
  if (x.rank() == 4) return forward4(x, training);
  if (x.rank() == 5) {
    const int N = x.size(0), C = x.size(1), T = x.size(2), V = x.size(3), M = x.size(4);
    Tensor folded = reshape(permute(x, {0, 4, 1, 2, 3}), {N * M, C, T, V});
    Tensor out = forward4(folded, training);
    return permute(reshape(out, {N, M, 3, V}), {0, 2, 3, 1});
  }
  throw std::invalid_argument("forward: input must be 4-D (N,C,T,V) or 5-D (N,C,T,V,M)");
}

std::vector<std::pair<std::string, Tensor>> RefinerModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string base = "layers." + std::to_string(l) + ".";
    for (int k = 0; k < 6; ++k)
      out.emplace_back(base + "class_kernel." + std::to_string(k),
                       layers_[l].class_kernels[k]);
    out.emplace_back(base + "temporal", layers_[l].temporal);
    out.emplace_back(base + "bn.gamma", layers_[l].bn_gamma);
    out.emplace_back(base + "bn.beta", layers_[l].bn_beta);
    if (layers_[l].res_proj.defined())
      out.emplace_back(base + "res_proj", layers_[l].res_proj);
  }
  if (config_.use_nonlocal) {
    out.emplace_back("attention.query", attn_q_);
    out.emplace_back("attention.key", attn_k_);
    out.emplace_back("attention.value", attn_v_);
    out.emplace_back("attention.out", attn_out_);
  }
  out.emplace_back("head.weight", head_w_);
  out.emplace_back("head.bias", head_b_);
  return out;
}

std::vector<Tensor> RefinerModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::vector<std::pair<std::string, std::vector<double>*>> RefinerModel::named_buffers() {
  std::vector<std::pair<std::string, std::vector<double>*>> out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string base = "layers." + std::to_string(l) + ".bn.";
    out.emplace_back(base + "running_mean", &layers_[l].bn_stats.mean);
    out.emplace_back(base + "running_var", &layers_[l].bn_stats.var);
  }
  out.emplace_back("input_norm.mean", &input_mean_);
  out.emplace_back("input_norm.std", &input_std_);
  return out;
}

std::vector<std::pair<std::string, const std::vector<double>*>>
RefinerModel::named_buffers() const {
  auto mutable_view = const_cast<RefinerModel*>(this)->named_buffers();
  std::vector<std::pair<std::string, const std::vector<double>*>> out;
  for (auto& [name, ptr] : mutable_view) out.emplace_back(name, ptr);
  return out;
}

std::size_t RefinerModel::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& t : parameters()) n += t.numel();
  return n;
}

}  // namespace poseref
