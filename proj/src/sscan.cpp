#include "hydra/sscan.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hydra/ops.hpp"
#include "hydra/parallel.hpp"
#include "hydra/tape.hpp"

namespace hydra {

void ScanParams::validate() const {
  const std::size_t lcn = length * channels * state;
  if (length == 0 || channels == 0 || state == 0) throw ShapeError("scan: zero extent");
  if (a_bar.size() != lcn || bx.size() != lcn || c.size() != length * state) {
    throw ShapeError("scan: buffers do not match (L=" + std::to_string(length) +
                     ", d=" + std::to_string(channels) + ", N=" + std::to_string(state) + ")");
  }
}

Discretized discretize(std::span<const double> a, std::span<const double> b,
                       std::span<const double> delta, std::size_t length, std::size_t channels,
                       std::size_t state, Discretization mode) {
  if (a.size() != channels * state || b.size() != length * state ||
      delta.size() != length * channels) {
    throw ShapeError("discretize: inputs do not match (L, d, N)");
  }
  for (double dt : delta) {
    if (!(dt > 0.0)) throw ContractError("discretize: delta must be positive, got " + std::to_string(dt));
  }
  Discretized out;
  out.a_bar.resize(length * channels * state);
  out.b_bar.resize(length * channels * state);
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double dt = delta[t * channels + c];
      for (std::size_t n = 0; n < state; ++n) {
        const double da = dt * a[c * state + n];
        const double db = dt * b[t * state + n];
        const std::size_t i = (t * channels + c) * state + n;
        out.a_bar[i] = std::exp(da);
        out.b_bar[i] = mode == Discretization::euler ? db : std::expm1(da) / da * db;
      }
    }
  }
  return out;
}

namespace {

// Advances the state one step and writes y_t. Shared by every scan path so the
// per-step arithmetic is identical.
inline void scan_step(const double* a, const double* bx, const double* c, double* h, double* y,
                      std::size_t channels, std::size_t state) {
  for (std::size_t ch = 0; ch < channels; ++ch) {
    double* hc = h + ch * state;
    const double* ac = a + ch * state;
    const double* bc = bx + ch * state;
    double acc = 0.0;
    for (std::size_t n = 0; n < state; ++n) {
      hc[n] = ac[n] * hc[n] + bc[n];
      acc += c[n] * hc[n];
    }
    y[ch] = acc;
  }
}

// Rescans [begin, end) from `carry`. `states`, when given, receives h_t.
void scan_range(const ScanParams& p, std::size_t begin, std::size_t end, const double* carry,
                double* y, double* states) {
  const std::size_t dn = p.channels * p.state;
  std::vector<double> h(carry, carry + dn);
  for (std::size_t t = begin; t < end; ++t) {
    scan_step(p.a_bar.data() + t * dn, p.bx.data() + t * dn, p.c.data() + t * p.state, h.data(),
              y + t * p.channels, p.channels, p.state);
    if (states) std::copy(h.begin(), h.end(), states + t * dn);
  }
}

void combine_into(const double* a1, const double* b1, double* a2, double* b2, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    b2[i] = a2[i] * b1[i] + b2[i];
    a2[i] = a1[i] * a2[i];
  }
}

std::vector<double> run_scan(const ScanParams& p, std::size_t chunk, std::size_t threads,
                             std::vector<double>* states) {
  p.validate();
  const std::size_t L = p.length, dn = p.channels * p.state;
  std::vector<double> y(L * p.channels);
  if (states) states->assign(L * dn, 0.0);
  double* st = states ? states->data() : nullptr;

  if (chunk == 0 || chunk >= L) {
    const std::vector<double> zero(dn, 0.0);
    scan_range(p, 0, L, zero.data(), y.data(), st);
    return y;
  }

  const std::size_t chunks = (L + chunk - 1) / chunk;
  std::size_t padded = 1;
  while (padded < chunks) padded <<= 1;

  // Tree nodes; padding holds the identity (1, 0).
  std::vector<double> node_a(padded * dn, 1.0), node_b(padded * dn, 0.0);

  parallel_for(chunks, threads, [&](std::size_t j) {
    const std::size_t begin = j * chunk, end = std::min(L, begin + chunk);
    double* a = node_a.data() + j * dn;
    double* b = node_b.data() + j * dn;
    std::copy_n(p.a_bar.data() + begin * dn, dn, a);
    std::copy_n(p.bx.data() + begin * dn, dn, b);
    std::vector<double> ta(dn), tb(dn);
    for (std::size_t t = begin + 1; t < end; ++t) {
      std::copy_n(p.a_bar.data() + t * dn, dn, ta.data());
      std::copy_n(p.bx.data() + t * dn, dn, tb.data());
      combine_into(a, b, ta.data(), tb.data(), dn);
      std::copy(ta.begin(), ta.end(), a);
      std::copy(tb.begin(), tb.end(), b);
    }
  });

  // Up-sweep: node[i] <- node[i - stride] . node[i].
  for (std::size_t stride = 1; stride < padded; stride <<= 1) {
    const std::size_t count = padded / (2 * stride);
    parallel_for(count, threads, [&](std::size_t k) {
      const std::size_t i = (2 * k + 2) * stride - 1;
      combine_into(node_a.data() + (i - stride) * dn, node_b.data() + (i - stride) * dn,
                   node_a.data() + i * dn, node_b.data() + i * dn, dn);
    });
  }
  // Down-sweep to an exclusive prefix: the left child takes its parent's
  // prefix, the right child takes prefix . left-subtree aggregate.
  std::fill_n(node_a.data() + (padded - 1) * dn, dn, 1.0);
  std::fill_n(node_b.data() + (padded - 1) * dn, dn, 0.0);
  for (std::size_t stride = padded / 2; stride >= 1; stride >>= 1) {
    const std::size_t count = padded / (2 * stride);
    parallel_for(count, threads, [&](std::size_t k) {
      const std::size_t i = (2 * k + 2) * stride - 1;
      double* la = node_a.data() + (i - stride) * dn;
      double* lb = node_b.data() + (i - stride) * dn;
      double* ra = node_a.data() + i * dn;
      double* rb = node_b.data() + i * dn;
      std::vector<double> left_a(la, la + dn), left_b(lb, lb + dn);
      std::copy_n(ra, dn, la);
      std::copy_n(rb, dn, lb);
      combine_into(la, lb, left_a.data(), left_b.data(), dn);
      std::copy(left_a.begin(), left_a.end(), ra);
      std::copy(left_b.begin(), left_b.end(), rb);
    });
    if (stride == 1) break;
  }

  // With h_{-1} = 0 the carry into chunk j is the b-part of its exclusive prefix.
  parallel_for(chunks, threads, [&](std::size_t j) {
    const std::size_t begin = j * chunk, end = std::min(L, begin + chunk);
    scan_range(p, begin, end, node_b.data() + j * dn, y.data(), st);
  });
  return y;
}

}  // namespace

std::vector<double> selective_scan_seq(const ScanParams& p) {
  p.validate();
  const std::size_t dn = p.channels * p.state;
  std::vector<double> y(p.length * p.channels);
  std::vector<double> h(dn, 0.0);
  for (std::size_t t = 0; t < p.length; ++t) {
    scan_step(p.a_bar.data() + t * dn, p.bx.data() + t * dn, p.c.data() + t * p.state, h.data(),
              y.data() + t * p.channels, p.channels, p.state);
  }
  return y;
}

std::vector<double> selective_scan_par(const ScanParams& p, std::size_t chunk,
                                       std::size_t threads) {
  if (chunk == 0) throw ContractError("selective_scan_par: chunk must be >= 1");
  return run_scan(p, chunk, threads, nullptr);
}

ScanElement combine(const ScanElement& first, const ScanElement& second) {
  if (first.a.size() != second.a.size() || first.b.size() != second.b.size() ||
      first.a.size() != first.b.size()) {
    throw ShapeError("combine: element sizes differ");
  }
  ScanElement out = second;
  combine_into(first.a.data(), first.b.data(), out.a.data(), out.b.data(), out.a.size());
  return out;
}

// ---------------------------------------------------------------------------

SSMParams init_ssm_params(std::size_t channels, std::size_t state, std::mt19937_64& rng) {
  SSMParams p;
  p.a_log = Tensor(Shape{channels, state});
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t n = 0; n < state; ++n) {
      p.a_log.mutable_data()[c * state + n] = std::log(static_cast<double>(n + 1));
    }
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  p.delta_bias = Tensor(Shape{channels});
  for (auto& v : p.delta_bias.mutable_data()) {
    const double dt = std::exp(std::log(1e-3) + unit(rng) * (std::log(1e-1) - std::log(1e-3)));
    v = dt + std::log(-std::expm1(-dt));  // inverse softplus
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
  std::uniform_real_distribution<double> w(-bound, bound);
  auto fill = [&](Shape s) {
    Tensor t(std::move(s));
    for (auto& v : t.mutable_data()) v = w(rng);
    return t;
  };
  p.w_b = fill({channels, state});
  p.w_c = fill({channels, state});
  p.w_delta = fill({channels, channels});
  return p;
}

Tensor discretize_a(const Tensor& delta, const Tensor& a) {
  if (delta.rank() != 2 || a.rank() != 2 || delta.dim(1) != a.dim(0)) {
    throw ShapeError("discretize_a: delta " + shape_str(delta.shape()) + " vs A " +
                     shape_str(a.shape()));
  }
  const std::size_t L = delta.dim(0), d = a.dim(0), N = a.dim(1);
  for (double dt : delta.data()) {
    if (!(dt > 0.0)) throw ContractError("discretize_a: delta must be positive");
  }
  Tensor out(Shape{L, d, N});
  double* o = out.mutable_ptr();
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t c = 0; c < d; ++c)
      for (std::size_t n = 0; n < N; ++n) o[(t * d + c) * N + n] = std::exp(delta[t * d + c] * a[c * N + n]);
  return emit("discretize_a", out, {delta, a},
              [delta, a, out, L, d, N](std::span<const double> g, GradSpans gin) {
                for (std::size_t t = 0; t < L; ++t) {
                  for (std::size_t c = 0; c < d; ++c) {
                    const double dt = delta[t * d + c];
                    double acc = 0;
                    for (std::size_t n = 0; n < N; ++n) {
                      const std::size_t i = (t * d + c) * N + n;
                      const double ga = g[i] * out[i];
                      acc += ga * a[c * N + n];
                      if (!gin[1].empty()) gin[1][c * N + n] += ga * dt;
                    }
                    if (!gin[0].empty()) gin[0][t * d + c] += acc;
                  }
                }
              });
}

Tensor discretize_bx(const Tensor& delta, const Tensor& b, const Tensor& x) {
  if (delta.rank() != 2 || b.rank() != 2 || delta.shape() != x.shape() || b.dim(0) != delta.dim(0)) {
    throw ShapeError("discretize_bx: delta " + shape_str(delta.shape()) + ", B " +
                     shape_str(b.shape()) + ", x " + shape_str(x.shape()));
  }
  const std::size_t L = delta.dim(0), d = delta.dim(1), N = b.dim(1);
  Tensor out(Shape{L, d, N});
  double* o = out.mutable_ptr();
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t c = 0; c < d; ++c) {
      const double s = delta[t * d + c] * x[t * d + c];
      for (std::size_t n = 0; n < N; ++n) o[(t * d + c) * N + n] = s * b[t * N + n];
    }
  return emit("discretize_bx", out, {delta, b, x},
              [delta, b, x, L, d, N](std::span<const double> g, GradSpans gin) {
                for (std::size_t t = 0; t < L; ++t) {
                  for (std::size_t c = 0; c < d; ++c) {
                    const double dt = delta[t * d + c], xv = x[t * d + c];
                    double gb = 0;
                    for (std::size_t n = 0; n < N; ++n) {
                      const double gi = g[(t * d + c) * N + n];
                      gb += gi * b[t * N + n];
                      if (!gin[1].empty()) gin[1][t * N + n] += gi * dt * xv;
                    }
                    if (!gin[0].empty()) gin[0][t * d + c] += gb * xv;
                    if (!gin[2].empty()) gin[2][t * d + c] += gb * dt;
                  }
                }
              });
}

Tensor selective_scan(const Tensor& a_bar, const Tensor& bx, const Tensor& c,
                      const ScanOptions& options) {
  if (a_bar.rank() != 3 || a_bar.shape() != bx.shape() || c.rank() != 2 ||
      c.dim(0) != a_bar.dim(0) || c.dim(1) != a_bar.dim(2)) {
    throw ShapeError("selective_scan: A-bar " + shape_str(a_bar.shape()) + ", B-bar x " +
                     shape_str(bx.shape()) + ", C " + shape_str(c.shape()));
  }
  ScanParams p;
  p.length = a_bar.dim(0);
  p.channels = a_bar.dim(1);
  p.state = a_bar.dim(2);
  p.a_bar.assign(a_bar.data().begin(), a_bar.data().end());
  p.bx.assign(bx.data().begin(), bx.data().end());
  p.c.assign(c.data().begin(), c.data().end());

  const bool recording = active_tape() != nullptr;
  std::vector<double> states;
  std::vector<double> y = run_scan(p, options.chunk, options.threads, recording ? &states : nullptr);
  Tensor out(Shape{p.length, p.channels}, std::move(y));
  const std::size_t L = p.length, d = p.channels, N = p.state;
  return emit("selective_scan", out, {a_bar, bx, c},
              [a_bar, c, states = std::move(states), L, d, N](std::span<const double> g,
                                                             GradSpans gin) {
                const std::size_t dn = d * N;
                std::vector<double> dh(dn, 0.0);
                for (std::size_t t = L; t-- > 0;) {
                  const double* h = states.data() + t * dn;
                  const double* ct = c.ptr() + t * N;
                  const double* gt = g.data() + t * d;
                  for (std::size_t ch = 0; ch < d; ++ch) {
                    for (std::size_t n = 0; n < N; ++n) {
                      const std::size_t i = ch * N + n;
                      dh[i] += ct[n] * gt[ch];
                      if (!gin[2].empty()) gin[2][t * N + n] += gt[ch] * h[i];
                      if (!gin[1].empty()) gin[1][t * dn + i] += dh[i];
                      if (!gin[0].empty() && t > 0) gin[0][t * dn + i] += dh[i] * h[i - dn];
                      dh[i] *= a_bar[t * dn + i];
                    }
                  }
                }
              });
}

Tensor s6_forward(const Tensor& x, const SSMParams& params, const ScanOptions& options) {
  if (x.rank() != 2 || x.dim(1) != params.channels()) {
    throw ShapeError("s6_forward: input " + shape_str(x.shape()) + " for " +
                     std::to_string(params.channels()) + " channels");
  }
  const Tensor b = ops::linear(x, params.w_b);
  const Tensor c = ops::linear(x, params.w_c);
  const Tensor delta = ops::softplus(ops::linear(x, params.w_delta, params.delta_bias));
  const Tensor a = ops::scale(ops::exp(params.a_log), -1.0);
  const Tensor a_bar = discretize_a(delta, a);
  const Tensor bx = discretize_bx(delta, b, x);
  return selective_scan(a_bar, bx, c, options);
}

void HeadConfig::validate() const {
  if (num_heads == 0 || model_dim == 0 || model_dim % num_heads != 0) {
    throw std::invalid_argument("head count " + std::to_string(num_heads) +
                                " does not divide model dim " + std::to_string(model_dim));
  }
  if (state_dim == 0) throw std::invalid_argument("state dim must be >= 1");
}

std::vector<SSMParams> init_mhs6_params(const HeadConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  std::vector<SSMParams> heads;
  for (std::size_t i = 0; i < cfg.num_heads; ++i) {
    heads.push_back(init_ssm_params(cfg.head_dim(), cfg.state_dim, rng));
  }
  return heads;
}

Tensor mhs6_forward(const Tensor& x, const HeadConfig& cfg, std::span<const SSMParams> heads,
                    const ScanOptions& options) {
  cfg.validate();
  if (heads.size() != cfg.num_heads) {
    throw std::invalid_argument("mhs6_forward: " + std::to_string(heads.size()) +
                                " parameter sets for " + std::to_string(cfg.num_heads) + " heads");
  }
  if (x.rank() != 2 || x.dim(1) != cfg.model_dim) {
    throw ShapeError("mhs6_forward: input " + shape_str(x.shape()) + " for model dim " +
                     std::to_string(cfg.model_dim));
  }
  if (cfg.num_heads == 1) return s6_forward(x, heads[0], options);
  const std::vector<Tensor> groups = ops::split(x, 1, cfg.num_heads);
  std::vector<Tensor> outs;
  outs.reserve(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) outs.push_back(s6_forward(groups[i], heads[i], options));
  return ops::concat(outs, 1);
}

Tensor bidirectional(const Tensor& x, const SequenceMixer& fwd, const SequenceMixer& bwd,
                     const ScanOptions& options) {
  const Tensor forward = mhs6_forward(x, fwd.cfg, fwd.heads, options);
  const Tensor backward =
      ops::reverse_rows(mhs6_forward(ops::reverse_rows(x), bwd.cfg, bwd.heads, options));
  return ops::add(forward, backward);
}

}  // namespace hydra
