#include "hydra/blocks.hpp"

#include <cmath>
#include <stdexcept>

#include "hydra/ops.hpp"

namespace hydra {

std::string_view conv_kind_name(ConvKind k) {
  return k == ConvKind::depthwise ? "depthwise" : "traditional";
}

ConvKind parse_conv_kind(std::string_view s) {
  if (s == "depthwise") return ConvKind::depthwise;
  if (s == "traditional") return ConvKind::traditional;
  throw std::invalid_argument("unknown conv kind '" + std::string(s) + "'");
}

void BlockConfig::validate() const {
  heads().validate();
  if (conv_kernel == 0 || conv_kernel % 2 == 0) {
    throw std::invalid_argument("conv kernel must be odd, got " + std::to_string(conv_kernel));
  }
  if (ffn_ratio == 0) throw std::invalid_argument("ffn ratio must be >= 1");
}

Tensor init_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t(std::move(shape));
  for (auto& v : t.mutable_data()) v = u(rng);
  return t;
}

namespace {

void add_ssm(std::vector<NamedTensor>& out, const std::string& prefix,
             std::span<const SSMParams> heads) {
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const std::string p = prefix + std::to_string(h) + ".";
    out.push_back({p + "a_log", heads[h].a_log});
    out.push_back({p + "delta_bias", heads[h].delta_bias});
    out.push_back({p + "w_b", heads[h].w_b});
    out.push_back({p + "w_c", heads[h].w_c});
    out.push_back({p + "w_delta", heads[h].w_delta});
  }
}

class Assigner {
 public:
  explicit Assigner(std::span<const Tensor> values) : values_(values) {}
  void operator()(Tensor& t) {
    if (pos_ >= values_.size()) throw std::invalid_argument("assign: too few tensors");
    if (values_[pos_].shape() != t.shape()) {
      throw ShapeError("assign: expected " + shape_str(t.shape()) + ", got " +
                       shape_str(values_[pos_].shape()));
    }
    t = values_[pos_++];
  }
  void operator()(std::vector<SSMParams>& heads) {
    for (auto& h : heads) {
      (*this)(h.a_log);
      (*this)(h.delta_bias);
      (*this)(h.w_b);
      (*this)(h.w_c);
      (*this)(h.w_delta);
    }
  }
  std::size_t consumed() const { return pos_; }

 private:
  std::span<const Tensor> values_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<NamedTensor> BlockState::parameters(std::string_view prefix) const {
  const std::string p(prefix);
  std::vector<NamedTensor> out;
  out.push_back({p + "norm1.gamma", norm1_gamma});
  out.push_back({p + "norm1.beta", norm1_beta});
  add_ssm(out, p + "fwd.head", forward_heads);
  add_ssm(out, p + "bwd.head", backward_heads);
  if (conv_kernel.defined()) {
    out.push_back({p + "conv.kernel", conv_kernel});
    out.push_back({p + "conv.bias", conv_bias});
  }
  out.push_back({p + "out.weight", out_weight});
  out.push_back({p + "out.bias", out_bias});
  out.push_back({p + "norm2.gamma", norm2_gamma});
  out.push_back({p + "norm2.beta", norm2_beta});
  out.push_back({p + "ffn.w1", ffn_w1});
  out.push_back({p + "ffn.b1", ffn_b1});
  out.push_back({p + "ffn.w2", ffn_w2});
  out.push_back({p + "ffn.b2", ffn_b2});
  return out;
}

std::size_t BlockState::assign(std::span<const Tensor> values) {
  Assigner a(values);
  a(norm1_gamma);
  a(norm1_beta);
  a(forward_heads);
  a(backward_heads);
  if (conv_kernel.defined()) {
    a(conv_kernel);
    a(conv_bias);
  }
  a(out_weight);
  a(out_bias);
  a(norm2_gamma);
  a(norm2_beta);
  a(ffn_w1);
  a(ffn_b1);
  a(ffn_w2);
  a(ffn_b2);
  return a.consumed();
}

BlockState init_block(const BlockConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const std::size_t D = cfg.model_dim, k = cfg.conv_kernel, hidden = cfg.ffn_ratio * D;
  BlockState s;
  s.norm1_gamma = Tensor(Shape{D}, 1.0);
  s.norm1_beta = Tensor(Shape{D});
  s.forward_heads = init_mhs6_params(cfg.heads(), rng);
  if (cfg.bidirectional) s.backward_heads = init_mhs6_params(cfg.heads(), rng);
  if (cfg.conv_branch) {
    s.conv_kernel = cfg.conv_kind == ConvKind::depthwise ? init_uniform({D, k}, k, rng)
                                                         : init_uniform({k, D, D}, k * D, rng);
    s.conv_bias = Tensor(Shape{D});
  }
  s.out_weight = init_uniform({D, D}, D, rng);
  s.out_bias = Tensor(Shape{D});
  s.norm2_gamma = Tensor(Shape{D}, 1.0);
  s.norm2_beta = Tensor(Shape{D});
  s.ffn_w1 = init_uniform({D, hidden}, D, rng);
  s.ffn_b1 = Tensor(Shape{hidden});
  s.ffn_w2 = init_uniform({hidden, D}, hidden, rng);
  s.ffn_b2 = Tensor(Shape{D});
  return s;
}

Tensor convbis6(const Tensor& x, const BlockState& state, const BlockConfig& cfg,
                const Serialization& serialization, const ScanOptions& scan) {
  if (x.rank() != 2 || serialization.perm.size() != x.dim(0) ||
      serialization.inv_perm.size() != x.dim(0)) {
    throw ContractError("convbis6: serialization of length " +
                        std::to_string(serialization.perm.size()) + " for input " +
                        shape_str(x.shape()));
  }
  const Tensor seq = ops::gather_rows(x, serialization.perm);
  const SequenceMixer fwd{cfg.heads(), state.forward_heads};
  Tensor mixed = cfg.bidirectional
                     ? bidirectional(seq, fwd, SequenceMixer{cfg.heads(), state.backward_heads}, scan)
                     : mhs6_forward(seq, fwd.cfg, fwd.heads, scan);
  if (cfg.conv_branch) {
    const Tensor local = cfg.conv_kind == ConvKind::depthwise
                             ? ops::depthwise_conv1d(seq, state.conv_kernel, state.conv_bias)
                             : ops::conv1d(seq, state.conv_kernel, state.conv_bias);
    mixed = ops::add(mixed, local);
  }
  const Tensor fused = ops::linear(mixed, state.out_weight, state.out_bias);
  return ops::gather_rows(fused, serialization.inv_perm);
}

Tensor hydra_block(const Tensor& x, const BlockState& state, const BlockConfig& cfg,
                   const Serialization& serialization, const ScanOptions& scan) {
  const Tensor mixed =
      convbis6(ops::layer_norm(x, state.norm1_gamma, state.norm1_beta), state, cfg, serialization, scan);
  const Tensor x1 = ops::add(x, mixed);
  const Tensor h = ops::silu(
      ops::linear(ops::layer_norm(x1, state.norm2_gamma, state.norm2_beta), state.ffn_w1, state.ffn_b1));
  return ops::add(x1, ops::linear(h, state.ffn_w2, state.ffn_b2));
}

std::vector<NamedTensor> EmbedState::parameters(std::string_view prefix) const {
  const std::string p(prefix);
  return {{p + "w1", w1}, {p + "b1", b1}, {p + "w2", w2}, {p + "b2", b2}};
}

std::size_t EmbedState::assign(std::span<const Tensor> values) {
  Assigner a(values);
  a(w1);
  a(b1);
  a(w2);
  a(b2);
  return a.consumed();
}

EmbedState init_embed(std::size_t in_features, std::size_t model_dim, std::mt19937_64& rng) {
  EmbedState e;
  e.w1 = init_uniform({in_features, model_dim}, in_features, rng);
  e.b1 = Tensor(Shape{model_dim});
  e.w2 = init_uniform({model_dim, model_dim}, model_dim, rng);
  e.b2 = Tensor(Shape{model_dim});
  return e;
}

Tensor point_table(const PointCloud& pc) {
  validate(pc);
  const std::size_t width = 3 + pc.feature_dim;
  Tensor t(Shape{pc.size(), width});
  double* out = t.mutable_ptr();
  for (std::size_t i = 0; i < pc.size(); ++i) {
    for (int a = 0; a < 3; ++a) out[i * width + a] = pc.coords[i][a];
    for (std::size_t j = 0; j < pc.feature_dim; ++j) {
      out[i * width + 3 + j] = pc.features[i * pc.feature_dim + j];
    }
  }
  return t;
}

Tensor embed(const Tensor& points, const EmbedState& state) {
  return ops::linear(ops::silu(ops::linear(points, state.w1, state.b1)), state.w2, state.b2);
}

Tensor embed(const PointCloud& pc, const EmbedState& state) { return embed(point_table(pc), state); }

}  // namespace hydra
