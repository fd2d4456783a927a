#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hydra/tape.hpp"
#include "hydra/tensor.hpp"

// Differentiable primitives. Each one computes eagerly and, when a tape is
// active on the calling thread, records its backward rule.
namespace hydra::ops {

inline constexpr double kLayerNormEps = 1e-5;

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);

// x: [L,in] or [in]; weight: [in,out]; bias: [out] or undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {});
// Same as linear over the channel axis of a [L,C] sequence.
Tensor pointwise_conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias = {});

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor exp(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor silu(const Tensor& a);

// Normalizes over the last axis.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = kLayerNormEps);

// x: [L,C]; kernel: [C,k] with k odd; zero padding, output length L.
Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias = {});
// Dense 1D convolution. x: [L,Cin]; kernel: [k,Cin,Cout] with k odd; same padding.
Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias = {});

Tensor reshape(const Tensor& x, Shape shape);
// 2D transpose.
Tensor transpose(const Tensor& x);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
// Splits `axis` into `parts` equal pieces.
std::vector<Tensor> split(const Tensor& x, std::size_t axis, std::size_t parts);

// out[i] = x[index[i]] along axis 0; indices may repeat (backward scatter-adds).
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index);
Tensor reverse_rows(const Tensor& x);
// Weighted row combination: out[i] = sum_j weight[i][j] * x[index[i][j]], with
// `width` entries per output row stored flat.
Tensor combine_rows(const Tensor& x, std::span<const std::size_t> index,
                    std::span<const double> weight, std::size_t width);
// Mean of the rows assigned to each segment. Every segment must be non-empty.
Tensor segment_mean(const Tensor& x, std::span<const std::size_t> segment, std::size_t segments);

// Averages over `axis`, removing it (a rank-1 input reduces to shape (1)).
Tensor mean_pool(const Tensor& x, std::size_t axis);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// sum(x * weight) with weight treated as a constant.
Tensor weighted_sum(const Tensor& x, const Tensor& weight);

// Over the last axis.
Tensor softmax(const Tensor& x);
// logits [C] with one label, or [L,C] with L labels (mean over rows).
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);
Tensor cross_entropy(const Tensor& logits, int label);

}  // namespace hydra::ops
