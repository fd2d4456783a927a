#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hydra/pointio.hpp"
#include "hydra/spacefill.hpp"
#include "hydra/sscan.hpp"
#include "hydra/tensor.hpp"

namespace hydra {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

enum class ConvKind { depthwise, traditional };

std::string_view conv_kind_name(ConvKind k);
ConvKind parse_conv_kind(std::string_view s);

struct BlockConfig {
  std::size_t model_dim = 48;
  std::size_t state_dim = 8;
  std::size_t num_heads = 6;
  std::size_t conv_kernel = 7;
  std::size_t ffn_ratio = 4;
  ConvKind conv_kind = ConvKind::depthwise;
  // Ablation switches.
  bool bidirectional = true;
  bool conv_branch = true;

  HeadConfig heads() const { return {num_heads, model_dim, state_dim}; }
  void validate() const;
};

struct BlockState {
  Tensor norm1_gamma, norm1_beta;
  std::vector<SSMParams> forward_heads;
  std::vector<SSMParams> backward_heads;  // empty when not bidirectional
  Tensor conv_kernel;                     // [D,k] depthwise or [k,D,D] traditional
  Tensor conv_bias;                       // [D]
  Tensor out_weight, out_bias;            // fusion projection [D,D], [D]
  Tensor norm2_gamma, norm2_beta;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;  // [D,rD], [rD], [rD,D], [D]

  // Fixed order; `assign` consumes the same order.
  std::vector<NamedTensor> parameters(std::string_view prefix = "") const;
  std::size_t assign(std::span<const Tensor> values);
};

BlockState init_block(const BlockConfig& cfg, std::mt19937_64& rng);

// Input in original point order; gathered into curve order for the
// bidirectional MHS6 and the 1D convolution, summed, projected, and scattered
// back through inv_perm.
Tensor convbis6(const Tensor& x, const BlockState& state, const BlockConfig& cfg,
                const Serialization& serialization, const ScanOptions& scan = {});

// Pre-norm residual block: x1 = x + ConvBiS6(LN(x)); y = x1 + FFN(LN(x1)).
Tensor hydra_block(const Tensor& x, const BlockState& state, const BlockConfig& cfg,
                   const Serialization& serialization, const ScanOptions& scan = {});

struct EmbedState {
  Tensor w1, b1, w2, b2;  // [3+c, D], [D], [D, D], [D]

  std::vector<NamedTensor> parameters(std::string_view prefix = "") const;
  std::size_t assign(std::span<const Tensor> values);
};

EmbedState init_embed(std::size_t in_features, std::size_t model_dim, std::mt19937_64& rng);

// [n, 3+c] point table (coords then features).
Tensor point_table(const PointCloud& pc);
// Per-point MLP: linear, SiLU, linear.
Tensor embed(const Tensor& points, const EmbedState& state);
Tensor embed(const PointCloud& pc, const EmbedState& state);

// Uniform in +-1/sqrt(fan_in).
Tensor init_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng);

}  // namespace hydra
