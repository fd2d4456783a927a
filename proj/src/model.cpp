#include "hydra/model.hpp"

#include <cmath>
#include <map>
#include <random>

#include "hydra/ops.hpp"

namespace hydra {

std::string_view task_name(Task t) { return t == Task::recognition ? "recognition" : "segmentation"; }

Task parse_task(std::string_view s) {
  if (s == "recognition") return Task::recognition;
  if (s == "segmentation") return Task::segmentation;
  throw ConfigError("unknown task '" + std::string(s) + "'");
}

std::string_view transition_name(Transition t) { return t == Transition::fps ? "fps" : "grid"; }

Transition parse_transition(std::string_view s) {
  if (s == "fps") return Transition::fps;
  if (s == "grid") return Transition::grid;
  throw ConfigError("unknown transition '" + std::string(s) + "'");
}

std::string_view serialization_mode_name(SerializationMode m) {
  switch (m) {
    case SerializationMode::shuffle: return "shuffle";
    case SerializationMode::sequential: return "sequential";
    case SerializationMode::fixed: return "fixed";
    case SerializationMode::random: return "random";
  }
  return "?";
}

SerializationMode parse_serialization_mode(std::string_view s) {
  for (auto m : {SerializationMode::shuffle, SerializationMode::sequential, SerializationMode::fixed,
                 SerializationMode::random}) {
    if (serialization_mode_name(m) == s) return m;
  }
  throw ConfigError("unknown serialization mode '" + std::string(s) + "'");
}

void ModelConfig::validate() const {
  if (stages.empty()) throw ConfigError("model needs at least one stage");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (curve_bits < 1 || curve_bits > kMaxCurveBits) throw ConfigError("curve_bits out of range");
  if (interp_k == 0) throw ConfigError("interp_k must be >= 1");
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const auto& st = stages[s];
    if (st.blocks == 0 || st.dim == 0 || st.heads == 0) {
      throw ConfigError("stage " + std::to_string(s) + ": blocks, dim and heads must be positive");
    }
    if (st.heads * stages[0].dim != stages[0].heads * st.dim) {
      throw ConfigError("stage " + std::to_string(s) +
                        ": head count must scale proportionally with the embedding dimension");
    }
    if (s > 0 && !(st.down > (transition == Transition::fps ? 1.0 - 1e-12 : 0.0))) {
      throw ConfigError("stage " + std::to_string(s) + ": invalid down factor");
    }
    try {
      block_config(s).validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("stage " + std::to_string(s) + ": " + e.what());
    }
  }
}

BlockConfig ModelConfig::block_config(std::size_t stage) const {
  BlockConfig b;
  b.model_dim = stages.at(stage).dim;
  b.num_heads = stages.at(stage).heads;
  b.state_dim = state_dim;
  b.conv_kernel = conv_kernel;
  b.ffn_ratio = ffn_ratio;
  b.conv_kind = conv_kind;
  b.bidirectional = bidirectional;
  b.conv_branch = conv_branch;
  return b;
}

std::size_t ModelConfig::encoder_blocks() const {
  std::size_t n = 0;
  for (const auto& s : stages) n += s.blocks;
  return n;
}

std::size_t ModelConfig::total_blocks() const {
  std::size_t n = encoder_blocks();
  if (task == Task::segmentation) n += decoder_blocks * (stages.size() - 1);
  return n;
}

std::vector<NamedTensor> ModelWeights::parameters() const {
  std::vector<NamedTensor> out = embed.parameters("embed.");
  auto append = [&](std::vector<NamedTensor> more) {
    for (auto& m : more) out.push_back(std::move(m));
  };
  for (std::size_t s = 0; s < encoder.size(); ++s) {
    if (s > 0) {
      out.push_back({"down" + std::to_string(s) + ".weight", down_w[s - 1]});
      out.push_back({"down" + std::to_string(s) + ".bias", down_b[s - 1]});
    }
    for (std::size_t b = 0; b < encoder[s].size(); ++b) {
      append(encoder[s][b].parameters("enc" + std::to_string(s) + ".block" + std::to_string(b) + "."));
    }
  }
  for (std::size_t s = 0; s < decoder.size(); ++s) {
    out.push_back({"up" + std::to_string(s) + ".weight", up_w[s]});
    out.push_back({"up" + std::to_string(s) + ".bias", up_b[s]});
    for (std::size_t b = 0; b < decoder[s].size(); ++b) {
      append(decoder[s][b].parameters("dec" + std::to_string(s) + ".block" + std::to_string(b) + "."));
    }
  }
  out.push_back({"head.norm.gamma", norm_gamma});
  out.push_back({"head.norm.beta", norm_beta});
  out.push_back({"head.w1", head_w1});
  out.push_back({"head.b1", head_b1});
  out.push_back({"head.w2", head_w2});
  out.push_back({"head.b2", head_b2});
  return out;
}

std::vector<Tensor> ModelWeights::tensors() const {
  std::vector<Tensor> out;
  for (auto& p : parameters()) out.push_back(p.tensor);
  return out;
}

void ModelWeights::assign(std::span<const Tensor> values) {
  std::size_t pos = 0;
  auto take = [&](Tensor& t) {
    if (pos >= values.size()) throw std::invalid_argument("ModelWeights::assign: too few tensors");
    if (values[pos].shape() != t.shape()) {
      throw ShapeError("ModelWeights::assign: expected " + shape_str(t.shape()) + ", got " +
                       shape_str(values[pos].shape()));
    }
    t = values[pos++];
  };
  pos += embed.assign(values.subspan(pos));
  for (std::size_t s = 0; s < encoder.size(); ++s) {
    if (s > 0) {
      take(down_w[s - 1]);
      take(down_b[s - 1]);
    }
    for (auto& b : encoder[s]) pos += b.assign(values.subspan(pos));
  }
  for (std::size_t s = 0; s < decoder.size(); ++s) {
    take(up_w[s]);
    take(up_b[s]);
    for (auto& b : decoder[s]) pos += b.assign(values.subspan(pos));
  }
  take(norm_gamma);
  take(norm_beta);
  take(head_w1);
  take(head_b1);
  take(head_w2);
  take(head_b2);
  if (pos != values.size()) throw std::invalid_argument("ModelWeights::assign: too many tensors");
}

ModelWeights ModelWeights::clone() const {
  ModelWeights copy = *this;
  std::vector<Tensor> fresh;
  for (const auto& t : tensors()) fresh.push_back(t.clone());
  copy.assign(fresh);
  return copy;
}

ModelWeights init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ModelWeights w;
  const std::size_t S = cfg.stages.size();
  w.embed = init_embed(3 + cfg.in_features, cfg.stages[0].dim, rng);
  for (std::size_t s = 0; s < S; ++s) {
    if (s > 0) {
      w.down_w.push_back(init_uniform({cfg.stages[s - 1].dim, cfg.stages[s].dim}, cfg.stages[s - 1].dim, rng));
      w.down_b.push_back(Tensor(Shape{cfg.stages[s].dim}));
    }
    std::vector<BlockState> blocks;
    for (std::size_t b = 0; b < cfg.stages[s].blocks; ++b) blocks.push_back(init_block(cfg.block_config(s), rng));
    w.encoder.push_back(std::move(blocks));
  }
  std::size_t head_dim = cfg.stages.back().dim;
  if (cfg.task == Task::segmentation) {
    for (std::size_t s = 0; s + 1 < S; ++s) {
      w.up_w.push_back(init_uniform({cfg.stages[s + 1].dim, cfg.stages[s].dim}, cfg.stages[s + 1].dim, rng));
      w.up_b.push_back(Tensor(Shape{cfg.stages[s].dim}));
      std::vector<BlockState> blocks;
      for (std::size_t b = 0; b < cfg.decoder_blocks; ++b) blocks.push_back(init_block(cfg.block_config(s), rng));
      w.decoder.push_back(std::move(blocks));
    }
    head_dim = cfg.stages[0].dim;
  }
  w.norm_gamma = Tensor(Shape{head_dim}, 1.0);
  w.norm_beta = Tensor(Shape{head_dim});
  w.head_w1 = init_uniform({head_dim, head_dim}, head_dim, rng);
  w.head_b1 = Tensor(Shape{head_dim});
  w.head_w2 = init_uniform({head_dim, cfg.num_classes}, head_dim, rng);
  w.head_b2 = Tensor(Shape{cfg.num_classes});
  return w;
}

namespace {

// Hands out one serialization per block, recomputed for each stage's point set.
class SerializationSource {
 public:
  SerializationSource(const ModelConfig& cfg, std::uint64_t seed, ForwardTrace* trace)
      : cfg_(cfg), seed_(seed), trace_(trace) {
    if (cfg.serialization != SerializationMode::random) {
      AssignMode mode = AssignMode::shuffle;
      if (cfg.serialization == SerializationMode::sequential) mode = AssignMode::sequential;
      if (cfg.serialization == SerializationMode::fixed) mode = AssignMode::fixed;
      plan_ = make_shuffle_plan(cfg.total_blocks(), seed, mode);
    }
  }

  const Serialization& next(std::size_t stage, std::span<const Point3> coords) {
    const std::size_t block = counter_++;
    if (cfg_.serialization == SerializationMode::random) {
      random_.push_back(random_serialization(coords.size(), seed_ * 0x9e3779b97f4a7c15ULL + block + 1));
      if (trace_) trace_->block_variants.push_back(random_.back().variant);
      return random_.back();
    }
    const CurveVariant v = plan_.assignments.at(block);
    if (trace_) trace_->block_variants.push_back(v);
    auto key = std::make_pair(stage, variant_name(v));
    auto it = cache_.find(key);
    if (it == cache_.end()) it = cache_.emplace(key, serialize(coords, v, cfg_.curve_bits)).first;
    return it->second;
  }

 private:
  const ModelConfig& cfg_;
  std::uint64_t seed_;
  ForwardTrace* trace_;
  ShufflePlan plan_;
  std::size_t counter_ = 0;
  std::map<std::pair<std::size_t, std::string>, Serialization> cache_;
  std::vector<Serialization> random_;
};

}  // namespace

Tensor forward(const PointCloud& pc, const ModelConfig& cfg, const ModelWeights& weights,
               const ForwardOptions& options, ForwardTrace* trace) {
  validate(pc);
  if (pc.feature_dim != cfg.in_features) {
    throw ConfigError("cloud has " + std::to_string(pc.feature_dim) + " feature columns, model expects " +
                      std::to_string(cfg.in_features));
  }
  const std::size_t S = cfg.stages.size();
  SerializationSource source(cfg, options.plan_seed, trace);

  std::vector<std::vector<Point3>> coords(S);
  std::vector<Tensor> skips(S);
  std::vector<std::vector<std::size_t>> grid_assignment(S);
  coords[0] = pc.coords;

  Tensor feats = embed(pc, weights.embed);
  for (std::size_t s = 0; s < S; ++s) {
    if (s > 0) {
      if (cfg.transition == Transition::fps) {
        const auto n_prev = coords[s - 1].size();
        const auto m = static_cast<std::size_t>(
            std::max(1.0, std::ceil(static_cast<double>(n_prev) / cfg.stages[s].down)));
        const auto idx = fps(coords[s - 1], std::min(m, n_prev));
        for (auto i : idx) coords[s].push_back(coords[s - 1][i]);
        feats = ops::gather_rows(feats, idx);
      } else {
        GridPoolResult pooled = grid_pool(coords[s - 1], feats, cfg.stages[s].down);
        coords[s] = pooled.pooling.coords;
        grid_assignment[s] = pooled.pooling.assignment;
        feats = pooled.feats;
      }
      feats = ops::linear(feats, weights.down_w[s - 1], weights.down_b[s - 1]);
    }
    if (trace) trace->stage_points.push_back(coords[s].size());
    const BlockConfig bc = cfg.block_config(s);
    for (const auto& block : weights.encoder[s]) {
      const Serialization ser = source.next(s, coords[s]);
      feats = hydra_block(feats, block, bc, ser, options.scan);
    }
    skips[s] = feats;
  }

  if (cfg.task == Task::recognition) {
    const Tensor pooled = ops::mean_pool(ops::layer_norm(feats, weights.norm_gamma, weights.norm_beta), 0);
    return ops::linear(ops::silu(ops::linear(pooled, weights.head_w1, weights.head_b1)), weights.head_w2,
                       weights.head_b2);
  }

  for (std::size_t s = S - 1; s-- > 0;) {
    Tensor up = cfg.transition == Transition::fps
                    ? interp_up(coords[s + 1], feats, coords[s], cfg.interp_k)
                    : grid_unpool(feats, grid_assignment[s + 1]);
    up = ops::linear(up, weights.up_w[s], weights.up_b[s]);
    feats = ops::add(up, skips[s]);
    const BlockConfig bc = cfg.block_config(s);
    for (const auto& block : weights.decoder[s]) {
      const Serialization ser = source.next(s, coords[s]);
      feats = hydra_block(feats, block, bc, ser, options.scan);
    }
  }
  const Tensor normed = ops::layer_norm(feats, weights.norm_gamma, weights.norm_beta);
  return ops::linear(ops::silu(ops::linear(normed, weights.head_w1, weights.head_b1)), weights.head_w2,
                     weights.head_b2);
}

}  // namespace hydra
