#include "hydra/gradsuite.hpp"

#include <random>

#include "hydra/blocks.hpp"
#include "hydra/model.hpp"
#include "hydra/ops.hpp"
#include "hydra/resample.hpp"
#include "hydra/spacefill.hpp"
#include "hydra/sscan.hpp"

namespace hydra {

namespace {

using Inputs = std::span<const Tensor>;

struct Maker {
  std::mt19937_64 rng;

  Tensor uniform(Shape shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(std::move(shape));
    for (auto& v : t.mutable_data()) v = u(rng);
    return t;
  }

  std::vector<Point3> cloud(std::size_t n) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Point3> pts(n);
    for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
    return pts;
  }
};

std::vector<GradInput> named_inputs(const std::vector<NamedTensor>& params) {
  std::vector<GradInput> in;
  for (const auto& p : params) in.push_back({p.name, p.tensor});
  return in;
}

std::vector<GradInput> ssm_inputs(const SSMParams& p, const std::string& prefix) {
  return {{prefix + "a_log", p.a_log},
          {prefix + "delta_bias", p.delta_bias},
          {prefix + "w_b", p.w_b},
          {prefix + "w_c", p.w_c},
          {prefix + "w_delta", p.w_delta}};
}

SSMParams ssm_from(Inputs v, std::size_t at) { return {v[at], v[at + 1], v[at + 2], v[at + 3], v[at + 4]}; }

// Redraw every delta_bias so softplus(delta_bias) lies in about [0.13, 0.69].
// The init range reaches 1e-3, where some A_log gradients fall below what
// central differences resolve at step 1e-5.
void moderate_delta(std::vector<GradInput>& in, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 0.0);
  for (auto& g : in) {
    if (!g.name.ends_with("delta_bias")) continue;
    for (auto& v : g.value.mutable_data()) v = u(rng);
  }
}

// Zero biases and unit gains sit at a special point where small activations
// make layer norms strongly curved; probe at generic values instead.
void generic_affine(std::vector<GradInput>& in, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> shift(-0.5, 0.5), gain(0.5, 1.5);
  for (auto& g : in) {
    const auto& n = g.name;
    if (n.ends_with("gamma")) {
      for (auto& v : g.value.mutable_data()) v = gain(rng);
    } else if (n.ends_with("beta") || (n.ends_with("bias") && !n.ends_with("delta_bias")) ||
               n.ends_with(".b1") || n.ends_with(".b2")) {
      for (auto& v : g.value.mutable_data()) v = shift(rng);
    }
  }
}

// Larger sizes are probed on a seeded subset of entries.
GradCheckOptions sampled(std::uint64_t seed, std::size_t max_entries) {
  GradCheckOptions o;
  o.seed = seed;
  o.max_entries = max_entries;
  return o;
}

}  // namespace

std::vector<GradCase> gradient_suite(const RunConfig& tiny, std::uint64_t seed) {
  Maker mk{std::mt19937_64(seed)};
  GradCheckOptions base;
  base.seed = seed;
  std::vector<GradCase> cases;
  auto add = [&](std::string name, TensorFn fn, std::vector<GradInput> in, GradCheckOptions o) {
    moderate_delta(in, mk.rng);
    generic_affine(in, mk.rng);
    cases.push_back({std::move(name), std::move(fn), std::move(in), o});
  };

  // Primitives.
  add("matmul", [](Inputs v) { return ops::matmul(v[0], v[1]); },
      {{"a", mk.uniform({4, 5})}, {"b", mk.uniform({5, 3})}}, base);
  add("linear", [](Inputs v) { return ops::linear(v[0], v[1], v[2]); },
      {{"x", mk.uniform({6, 4})}, {"weight", mk.uniform({4, 3})}, {"bias", mk.uniform({3})}}, base);
  add("linear_vector", [](Inputs v) { return ops::linear(v[0], v[1], v[2]); },
      {{"x", mk.uniform({4})}, {"weight", mk.uniform({4, 3})}, {"bias", mk.uniform({3})}}, base);
  add("pointwise_conv1d", [](Inputs v) { return ops::pointwise_conv1d(v[0], v[1], v[2]); },
      {{"x", mk.uniform({7, 3})}, {"weight", mk.uniform({3, 2})}, {"bias", mk.uniform({2})}}, base);
  add("add", [](Inputs v) { return ops::add(v[0], v[1]); },
      {{"a", mk.uniform({3, 4})}, {"b", mk.uniform({3, 4})}}, base);
  add("sub", [](Inputs v) { return ops::sub(v[0], v[1]); },
      {{"a", mk.uniform({3, 4})}, {"b", mk.uniform({3, 4})}}, base);
  add("mul", [](Inputs v) { return ops::mul(v[0], v[1]); },
      {{"a", mk.uniform({3, 4})}, {"b", mk.uniform({3, 4})}}, base);
  add("scale", [](Inputs v) { return ops::scale(v[0], -1.7); }, {{"a", mk.uniform({5})}}, base);
  add("exp", [](Inputs v) { return ops::exp(v[0]); }, {{"a", mk.uniform({3, 4})}}, base);
  add("softplus", [](Inputs v) { return ops::softplus(v[0]); }, {{"a", mk.uniform({3, 4}, -4, 4)}}, base);
  add("silu", [](Inputs v) { return ops::silu(v[0]); }, {{"a", mk.uniform({3, 4}, -4, 4)}}, base);
  add("layer_norm", [](Inputs v) { return ops::layer_norm(v[0], v[1], v[2]); },
      {{"x", mk.uniform({5, 6})}, {"gamma", mk.uniform({6})}, {"beta", mk.uniform({6})}}, base);
  add("depthwise_conv1d", [](Inputs v) { return ops::depthwise_conv1d(v[0], v[1], v[2]); },
      {{"x", mk.uniform({9, 3})}, {"kernel", mk.uniform({3, 5})}, {"bias", mk.uniform({3})}}, base);
  add("conv1d", [](Inputs v) { return ops::conv1d(v[0], v[1], v[2]); },
      {{"x", mk.uniform({8, 3})}, {"kernel", mk.uniform({3, 3, 2})}, {"bias", mk.uniform({2})}}, base);
  add("reshape", [](Inputs v) { return ops::mul(ops::reshape(v[0], {6, 2}), ops::reshape(v[0], {6, 2})); },
      {{"x", mk.uniform({3, 4})}}, base);
  add("transpose", [](Inputs v) { return ops::matmul(ops::transpose(v[0]), v[1]); },
      {{"a", mk.uniform({4, 3})}, {"b", mk.uniform({4, 2})}}, base);
  add("concat", [](Inputs v) {
        const Tensor parts[] = {v[0], v[1]};
        return ops::exp(ops::concat(parts, 1));
      },
      {{"a", mk.uniform({3, 2})}, {"b", mk.uniform({3, 4})}}, base);
  add("slice", [](Inputs v) { return ops::exp(ops::slice(v[0], 1, 1, 3)); }, {{"x", mk.uniform({3, 5})}}, base);
  add("split", [](Inputs v) {
        auto parts = ops::split(v[0], 1, 3);
        return ops::add(ops::mul(parts[0], parts[1]), parts[2]);
      },
      {{"x", mk.uniform({4, 6})}}, base);
  add("gather_rows", [](Inputs v) {
        const std::size_t idx[] = {2, 0, 2, 3, 1};
        return ops::gather_rows(v[0], idx);
      },
      {{"x", mk.uniform({4, 3})}}, base);
  add("reverse_rows", [](Inputs v) { return ops::mul(ops::reverse_rows(v[0]), v[0]); },
      {{"x", mk.uniform({5, 2})}}, base);
  add("combine_rows", [](Inputs v) {
        const std::size_t idx[] = {0, 1, 3, 2, 2, 0};
        const double w[] = {0.2, 0.3, 0.5, 0.6, 0.1, 0.3};
        return ops::combine_rows(v[0], idx, w, 3);
      },
      {{"x", mk.uniform({4, 3})}}, base);
  add("segment_mean", [](Inputs v) {
        const std::size_t seg[] = {1, 0, 1, 2, 1, 0};
        return ops::segment_mean(v[0], seg, 3);
      },
      {{"x", mk.uniform({6, 2})}}, base);
  add("mean_pool", [](Inputs v) { return ops::mul(ops::mean_pool(v[0], 0), ops::mean_pool(v[0], 0)); },
      {{"x", mk.uniform({5, 3})}}, base);
  add("sum", [](Inputs v) { return ops::sum(ops::mul(v[0], v[0])); }, {{"x", mk.uniform({4, 3})}}, base);
  add("mean", [](Inputs v) { return ops::mean(ops::exp(v[0])); }, {{"x", mk.uniform({4, 3})}}, base);
  add("weighted_sum", [w = mk.uniform({3, 3})](Inputs v) { return ops::weighted_sum(ops::exp(v[0]), w); },
      {{"x", mk.uniform({3, 3})}}, base);
  add("softmax", [](Inputs v) { return ops::softmax(v[0]); }, {{"x", mk.uniform({3, 5}, -3, 3)}}, base);
  add("cross_entropy", [](Inputs v) {
        const int labels[] = {1, 0, 3};
        return ops::cross_entropy(v[0], labels);
      },
      {{"logits", mk.uniform({3, 4}, -3, 3)}}, base);
  add("cross_entropy_vector", [](Inputs v) { return ops::cross_entropy(v[0], 2); },
      {{"logits", mk.uniform({5}, -3, 3)}}, base);

  // Selective scan machinery.
  add("discretize_a", [](Inputs v) { return discretize_a(v[0], v[1]); },
      {{"delta", mk.uniform({5, 3}, 0.05, 1.0)}, {"a", mk.uniform({3, 4}, -2.0, -0.1)}}, base);
  add("discretize_bx", [](Inputs v) { return discretize_bx(v[0], v[1], v[2]); },
      {{"delta", mk.uniform({5, 3}, 0.05, 1.0)}, {"b", mk.uniform({5, 4})}, {"x", mk.uniform({5, 3})}}, base);
  {
    std::vector<GradInput> in{{"a_bar", mk.uniform({12, 3, 4}, 0.2, 0.95)},
                              {"bx", mk.uniform({12, 3, 4})},
                              {"c", mk.uniform({12, 4})}};
    add("selective_scan", [](Inputs v) { return selective_scan(v[0], v[1], v[2]); }, in, base);
    add("selective_scan_chunked", [](Inputs v) { return selective_scan(v[0], v[1], v[2], {5, 2}); }, in, base);
  }
  {
    const SSMParams p = init_ssm_params(4, 3, mk.rng);
    auto in = ssm_inputs(p, "");
    in.insert(in.begin(), {"x", mk.uniform({16, 4})});
    add("s6_forward", [](Inputs v) { return s6_forward(v[0], ssm_from(v, 1)); }, in, base);
  }
  {
    const HeadConfig hc{6, 48, 8};
    const auto heads = init_mhs6_params(hc, mk.rng);
    std::vector<GradInput> in{{"x", mk.uniform({128, 48})}};
    for (std::size_t h = 0; h < heads.size(); ++h) {
      for (auto& g : ssm_inputs(heads[h], "head" + std::to_string(h) + ".")) in.push_back(g);
    }
    add("mhs6_forward",
        [hc](Inputs v) {
          std::vector<SSMParams> hs;
          for (std::size_t h = 0; h < hc.num_heads; ++h) hs.push_back(ssm_from(v, 1 + 5 * h));
          return mhs6_forward(v[0], hc, hs);
        },
        in, sampled(seed, 96));
  }
  {
    const HeadConfig hc{2, 6, 3};
    const auto fwd = init_mhs6_params(hc, mk.rng);
    const auto bwd = init_mhs6_params(hc, mk.rng);
    std::vector<GradInput> in{{"x", mk.uniform({10, 6})}};
    for (std::size_t h = 0; h < 2; ++h) for (auto& g : ssm_inputs(fwd[h], "fwd" + std::to_string(h) + ".")) in.push_back(g);
    for (std::size_t h = 0; h < 2; ++h) for (auto& g : ssm_inputs(bwd[h], "bwd" + std::to_string(h) + ".")) in.push_back(g);
    add("bidirectional",
        [hc](Inputs v) {
          const std::vector<SSMParams> f{ssm_from(v, 1), ssm_from(v, 6)};
          const std::vector<SSMParams> b{ssm_from(v, 11), ssm_from(v, 16)};
          return bidirectional(v[0], {hc, f}, {hc, b});
        },
        in, base);
  }

  // Resampling.
  {
    auto src = mk.cloud(10);
    auto dst = mk.cloud(14);
    dst[3] = src[5];
    add("interp_up", [src, dst](Inputs v) { return interp_up(src, v[0], dst, 3); },
        {{"src_feats", mk.uniform({10, 3})}}, base);
    auto pts = mk.cloud(20);
    add("grid_pool", [pts](Inputs v) { return grid_pool(pts, v[0], 0.8).feats; },
        {{"feats", mk.uniform({20, 3})}}, base);
    const GridPooling pooling = grid_assign(pts, 0.8);
    add("grid_unpool",
        [a = pooling.assignment](Inputs v) { return ops::mul(grid_unpool(v[0], a), grid_unpool(v[0], a)); },
        {{"pooled", mk.uniform({pooling.voxels(), 3})}}, base);
  }

  // Blocks.
  const ModelConfig& mc = tiny.model;
  const std::size_t n = tiny.data.points;
  {
    const EmbedState e = init_embed(3, mc.stages[0].dim, mk.rng);
    auto in = named_inputs(e.parameters("embed."));
    in.insert(in.begin(), {"points", mk.uniform({n, 3})});
    add("embed",
        [e](Inputs v) {
          EmbedState s = e;
          s.assign(v.subspan(1));
          return embed(v[0], s);
        },
        in, base);
  }
  for (ConvKind kind : {ConvKind::depthwise, ConvKind::traditional}) {
    BlockConfig bc = mc.block_config(0);
    bc.conv_kind = kind;
    const BlockState st = init_block(bc, mk.rng);
    const Serialization ser = serialize(mk.cloud(n), {Curve::hilbert, AxisOrder::zxy}, mc.curve_bits);
    auto in = named_inputs(st.parameters("block."));
    in.insert(in.begin(), {"x", mk.uniform({n, bc.model_dim})});
    const std::string suffix = kind == ConvKind::depthwise ? "" : "_traditional";
    add("convbis6" + suffix,
        [bc, st, ser](Inputs v) {
          BlockState s = st;
          s.assign(v.subspan(1));
          return convbis6(v[0], s, bc, ser);
        },
        in, sampled(seed, 64));
    add("hydra_block" + suffix,
        [bc, st, ser](Inputs v) {
          BlockState s = st;
          s.assign(v.subspan(1));
          return hydra_block(v[0], s, bc, ser);
        },
        in, sampled(seed, 64));
  }

  // Full model, recognition and segmentation.
  SyntheticSpec spec;
  spec.shape_kind = ShapeKind::torus;
  spec.n_points = n;
  spec.seed = seed + 11;
  PointCloud pc = normalize_unit_sphere(make_synthetic(spec));
  auto model_case = [&](std::string name, ModelConfig cfg) {
    const ModelWeights w = init_model(cfg, seed + 3);
    add(std::move(name),
        [cfg, w, pc](Inputs v) {
          ModelWeights m = w;
          m.assign(v);
          ForwardOptions fo;
          fo.plan_seed = 5;
          return forward(pc, cfg, m, fo);
        },
        named_inputs(w.parameters()), sampled(seed, 48));
  };
  ModelConfig rec = mc;
  rec.task = Task::recognition;
  model_case("model_recognition", rec);
  ModelConfig seg = mc;
  seg.task = Task::segmentation;
  seg.num_classes = 3;
  model_case("model_segmentation", seg);
  ModelConfig grid = seg;
  grid.transition = Transition::grid;
  grid.stages[1].down = 0.5;
  model_case("model_segmentation_grid", grid);
  return cases;
}

GradCaseResult run_grad_case(const GradCase& c) { return {c.name, check_gradients(c.fn, c.inputs, c.options)}; }

}  // namespace hydra
