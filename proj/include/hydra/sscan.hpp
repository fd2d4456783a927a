#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "hydra/tensor.hpp"

namespace hydra {

// ---------------------------------------------------------------------------
// Raw scan kernels. Layouts are row-major: a_bar and bx are [L][d][N],
// c is [L][N], outputs are [L][d].
// ---------------------------------------------------------------------------

struct ScanParams {
  std::size_t length = 0;
  std::size_t channels = 0;
  std::size_t state = 0;
  std::vector<double> a_bar;
  std::vector<double> bx;  // B-bar already multiplied by the input
  std::vector<double> c;

  void validate() const;
};

enum class Discretization { euler, exact_zoh };

struct Discretized {
  std::vector<double> a_bar;  // [L][d][N]
  std::vector<double> b_bar;  // [L][d][N]
};

// a: [d][N] (negative), b: [L][N], delta: [L][d] (positive).
// Euler:      A-bar = exp(delta*a), B-bar = delta*b.
// Exact ZOH:  B-bar = (delta*a)^-1 (exp(delta*a) - 1) delta*b.
Discretized discretize(std::span<const double> a, std::span<const double> b,
                       std::span<const double> delta, std::size_t length, std::size_t channels,
                       std::size_t state, Discretization mode = Discretization::euler);

// h_t = a_t * h_{t-1} + bx_t with h_{-1} = 0; y_t[c] = sum_n C_t[n] h_t[c][n].
std::vector<double> selective_scan_seq(const ScanParams& p);

// Same recurrence through the associative combine
//   (a1, b1) . (a2, b2) = (a1 a2, a2 b1 + b2)
// Chunks are reduced locally, chunk carries come from a work-efficient
// up-sweep/down-sweep over the chunk aggregates, then every chunk rescans from
// its carry. The arithmetic depends only on (L, chunk), never on `threads`.
std::vector<double> selective_scan_par(const ScanParams& p, std::size_t chunk,
                                       std::size_t threads = 1);

// One element of the scan semigroup over a [d][N] state.
struct ScanElement {
  std::vector<double> a;
  std::vector<double> b;
};
ScanElement combine(const ScanElement& first, const ScanElement& second);

// ---------------------------------------------------------------------------
// Differentiable selective SSM.
// ---------------------------------------------------------------------------

struct SSMParams {
  Tensor a_log;       // [d,N]; A = -exp(a_log) < 0
  Tensor delta_bias;  // [d]
  Tensor w_b;         // [d,N]
  Tensor w_c;         // [d,N]
  Tensor w_delta;     // [d,d]

  std::size_t channels() const { return a_log.dim(0); }
  std::size_t state() const { return a_log.dim(1); }
  std::vector<Tensor> tensors() const { return {a_log, delta_bias, w_b, w_c, w_delta}; }
};

// A_log = log(1..N) per channel, softplus(delta_bias) log-uniform in
// [1e-3, 1e-1], projections uniform in +-1/sqrt(d).
SSMParams init_ssm_params(std::size_t channels, std::size_t state, std::mt19937_64& rng);

struct ScanOptions {
  // 0 selects the plain sequential scan, otherwise the chunked parallel scan.
  std::size_t chunk = 0;
  std::size_t threads = 1;
};

// A-bar = exp(delta (x) A). delta: [L,d], a: [d,N] -> [L,d,N].
Tensor discretize_a(const Tensor& delta, const Tensor& a);
// B-bar x = delta (x) B scaled by x. delta: [L,d], b: [L,N], x: [L,d] -> [L,d,N].
Tensor discretize_bx(const Tensor& delta, const Tensor& b, const Tensor& x);
// Tape op over the raw kernels; backward is the reverse recurrence over saved
// states. a_bar, bx: [L,d,N]; c: [L,N] -> [L,d].
Tensor selective_scan(const Tensor& a_bar, const Tensor& bx, const Tensor& c,
                      const ScanOptions& options = {});

// x: [L,d] -> [L,d]. B_t = W_B x_t, C_t = W_C x_t,
// delta_t = softplus(W_delta x_t + delta_bias), then discretize and scan.
Tensor s6_forward(const Tensor& x, const SSMParams& params, const ScanOptions& options = {});

struct HeadConfig {
  std::size_t num_heads = 6;
  std::size_t model_dim = 48;
  std::size_t state_dim = 8;

  std::size_t head_dim() const { return model_dim / num_heads; }
  void validate() const;
};

std::vector<SSMParams> init_mhs6_params(const HeadConfig& cfg, std::mt19937_64& rng);

// x: [L,D] viewed as (L, h, D/h); every head runs its own S6 on its channel
// group and the outputs are concatenated back in head order.
Tensor mhs6_forward(const Tensor& x, const HeadConfig& cfg, std::span<const SSMParams> heads,
                    const ScanOptions& options = {});

struct SequenceMixer {
  HeadConfig cfg;
  std::span<const SSMParams> heads;
};

// mixer(x; fwd) + reverse(mixer(reverse(x); bwd)).
Tensor bidirectional(const Tensor& x, const SequenceMixer& fwd, const SequenceMixer& bwd,
                     const ScanOptions& options = {});

}  // namespace hydra
