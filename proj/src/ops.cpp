#include "hydra/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace hydra::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;
using VecC = Eigen::Map<const Eigen::VectorXd>;
using VecM = Eigen::Map<Eigen::VectorXd>;

MapC cmat(const double* p, std::size_t r, std::size_t c) {
  return MapC(p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
MapM mmat(double* p, std::size_t r, std::size_t c) {
  return MapM(p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     shape_str(t.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_axis(const Tensor& t, std::size_t axis, const char* op) {
  if (axis >= t.rank()) {
    throw AxisError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for shape " +
                    shape_str(t.shape()));
  }
}

struct AxisSplit {
  std::size_t outer = 1, mid = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.mid = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

template <class F, class G>
Tensor unary(const char* name, const Tensor& a, F fwd, G dfdx) {
  Tensor out(a.shape());
  const double* x = a.ptr();
  double* y = out.mutable_ptr();
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = fwd(x[i]);
  return emit(name, out, {a}, [a, dfdx](std::span<const double> g, GradSpans gin) {
    if (gin[0].empty()) return;
    const double* x = a.ptr();
    for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] * dfdx(x[i]);
  });
}

double softplus_value(double v) {
  // log1p(exp(v)) without overflow for large v.
  return v > 30.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

double sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  Tensor out(Shape{m, n});
  mmat(out.mutable_ptr(), m, n).noalias() = cmat(a.ptr(), m, k) * cmat(b.ptr(), k, n);
  return emit("matmul", out, {a, b}, [a, b, m, k, n](std::span<const double> g, GradSpans gin) {
    auto G = cmat(g.data(), m, n);
    if (!gin[0].empty()) mmat(gin[0].data(), m, k).noalias() += G * cmat(b.ptr(), k, n).transpose();
    if (!gin[1].empty()) mmat(gin[1].data(), k, n).noalias() += cmat(a.ptr(), m, k).transpose() * G;
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(weight, 2, "linear");
  const bool vector_in = x.rank() == 1;
  if (!vector_in) require_rank(x, 2, "linear");
  const std::size_t rows = vector_in ? 1 : x.dim(0);
  const std::size_t in = vector_in ? x.dim(0) : x.dim(1);
  const std::size_t out_dim = weight.dim(1);
  if (weight.dim(0) != in) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(weight.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.shape() != Shape{out_dim}) {
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " does not match weight " +
                     shape_str(weight.shape()));
  }
  Tensor out(vector_in ? Shape{out_dim} : Shape{rows, out_dim});
  auto Y = mmat(out.mutable_ptr(), rows, out_dim);
  Y.noalias() = cmat(x.ptr(), rows, in) * cmat(weight.ptr(), in, out_dim);
  if (has_bias) Y.rowwise() += cmat(bias.ptr(), 1, out_dim).row(0);

  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return emit("linear", out, std::move(inputs),
              [x, weight, rows, in, out_dim, has_bias](std::span<const double> g, GradSpans gin) {
                auto G = cmat(g.data(), rows, out_dim);
                if (!gin[0].empty()) {
                  mmat(gin[0].data(), rows, in).noalias() +=
                      G * cmat(weight.ptr(), in, out_dim).transpose();
                }
                if (!gin[1].empty()) {
                  mmat(gin[1].data(), in, out_dim).noalias() +=
                      cmat(x.ptr(), rows, in).transpose() * G;
                }
                if (has_bias && !gin[2].empty()) {
                  mmat(gin[2].data(), 1, out_dim) += G.colwise().sum();
                }
              });
}

Tensor pointwise_conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "pointwise_conv1d");
  return linear(x, weight, bias);
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.mutable_ptr()[i] = a[i] + b[i];
  return emit("add", out, {a, b}, [](std::span<const double> g, GradSpans gin) {
    for (int k = 0; k < 2; ++k) {
      if (gin[k].empty()) continue;
      for (std::size_t i = 0; i < g.size(); ++i) gin[k][i] += g[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.mutable_ptr()[i] = a[i] - b[i];
  return emit("sub", out, {a, b}, [](std::span<const double> g, GradSpans gin) {
    if (!gin[0].empty())
      for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
    if (!gin[1].empty())
      for (std::size_t i = 0; i < g.size(); ++i) gin[1][i] -= g[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.mutable_ptr()[i] = a[i] * b[i];
  return emit("mul", out, {a, b}, [a, b](std::span<const double> g, GradSpans gin) {
    if (!gin[0].empty())
      for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] * b[i];
    if (!gin[1].empty())
      for (std::size_t i = 0; i < g.size(); ++i) gin[1][i] += g[i] * a[i];
  });
}

Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.mutable_ptr()[i] = a[i] * s;
  return emit("scale", out, {a}, [s](std::span<const double> g, GradSpans gin) {
    if (gin[0].empty()) return;
    for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] * s;
  });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double v) { return std::exp(v); }, [](double v) { return std::exp(v); });
}

Tensor softplus(const Tensor& a) {
  return unary("softplus", a, softplus_value, sigmoid);
}

Tensor silu(const Tensor& a) {
  return unary(
      "silu", a, [](double v) { return v * sigmoid(v); },
      [](double v) {
        double s = sigmoid(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw ShapeError("layer_norm: input " + shape_str(x.shape()) + " vs gamma " +
                     shape_str(gamma.shape()) + ", beta " + shape_str(beta.shape()));
  }
  const std::size_t rows = x.size() / d;
  Tensor out(x.shape());
  std::vector<double> xhat(x.size()), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.ptr() + r * d;
    double mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (xr[j] - mu) * is;
      out.mutable_ptr()[r * d + j] = xhat[r * d + j] * gamma[j] + beta[j];
    }
  }
  return emit("layer_norm", out, {x, gamma, beta},
              [gamma, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d](
                  std::span<const double> g, GradSpans gin) {
                const double n = static_cast<double>(d);
                for (std::size_t r = 0; r < rows; ++r) {
                  const double* gr = g.data() + r * d;
                  const double* hr = xhat.data() + r * d;
                  if (!gin[1].empty())
                    for (std::size_t j = 0; j < d; ++j) gin[1][j] += gr[j] * hr[j];
                  if (!gin[2].empty())
                    for (std::size_t j = 0; j < d; ++j) gin[2][j] += gr[j];
                  if (gin[0].empty()) continue;
                  double sum_gh = 0, sum_ghx = 0;
                  for (std::size_t j = 0; j < d; ++j) {
                    const double gh = gr[j] * gamma[j];
                    sum_gh += gh;
                    sum_ghx += gh * hr[j];
                  }
                  for (std::size_t j = 0; j < d; ++j) {
                    const double gh = gr[j] * gamma[j];
                    gin[0][r * d + j] += inv_std[r] * (gh - sum_gh / n - hr[j] * sum_ghx / n);
                  }
                }
              });
}

Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  require_rank(x, 2, "depthwise_conv1d");
  require_rank(kernel, 2, "depthwise_conv1d");
  const std::size_t len = x.dim(0), ch = x.dim(1), k = kernel.dim(1);
  if (kernel.dim(0) != ch || k % 2 == 0) {
    throw ShapeError("depthwise_conv1d: kernel " + shape_str(kernel.shape()) +
                     " must be (channels, odd width) for input " + shape_str(x.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.shape() != Shape{ch}) {
    throw ShapeError("depthwise_conv1d: bias " + shape_str(bias.shape()) + " vs channels " +
                     std::to_string(ch));
  }
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const auto L = static_cast<std::ptrdiff_t>(len);
  Tensor out(x.shape());
  double* y = out.mutable_ptr();
  for (std::ptrdiff_t t = 0; t < L; ++t) {
    for (std::size_t c = 0; c < ch; ++c) y[t * ch + c] = has_bias ? bias[c] : 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(j) - pad;
      if (src < 0 || src >= L) continue;
      const double* xs = x.ptr() + src * ch;
      for (std::size_t c = 0; c < ch; ++c) y[t * ch + c] += kernel[c * k + j] * xs[c];
    }
  }
  std::vector<Tensor> inputs{x, kernel};
  if (has_bias) inputs.push_back(bias);
  return emit("depthwise_conv1d", out, std::move(inputs),
              [x, kernel, len, ch, k, pad, has_bias](std::span<const double> g, GradSpans gin) {
                const auto L = static_cast<std::ptrdiff_t>(len);
                for (std::ptrdiff_t t = 0; t < L; ++t) {
                  const double* gt = g.data() + t * ch;
                  if (has_bias && !gin[2].empty())
                    for (std::size_t c = 0; c < ch; ++c) gin[2][c] += gt[c];
                  for (std::size_t j = 0; j < k; ++j) {
                    const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(j) - pad;
                    if (src < 0 || src >= L) continue;
                    for (std::size_t c = 0; c < ch; ++c) {
                      if (!gin[0].empty()) gin[0][src * ch + c] += kernel[c * k + j] * gt[c];
                      if (!gin[1].empty()) gin[1][c * k + j] += x[src * ch + c] * gt[c];
                    }
                  }
                }
              });
}

Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  require_rank(x, 2, "conv1d");
  require_rank(kernel, 3, "conv1d");
  const std::size_t len = x.dim(0), cin = x.dim(1);
  const std::size_t k = kernel.dim(0), cout = kernel.dim(2);
  if (kernel.dim(1) != cin || k % 2 == 0) {
    throw ShapeError("conv1d: kernel " + shape_str(kernel.shape()) +
                     " must be (odd width, in, out) for input " + shape_str(x.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.shape() != Shape{cout}) {
    throw ShapeError("conv1d: bias " + shape_str(bias.shape()) + " vs out channels " +
                     std::to_string(cout));
  }
  // im2col: row t holds the k input windows back to back.
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const auto L = static_cast<std::ptrdiff_t>(len);
  AlignedBuffer cols(len * k * cin, 0.0);
  for (std::ptrdiff_t t = 0; t < L; ++t) {
    for (std::size_t j = 0; j < k; ++j) {
      const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(j) - pad;
      if (src < 0 || src >= L) continue;
      std::copy_n(x.ptr() + src * cin, cin, cols.data() + (t * k + j) * cin);
    }
  }
  Tensor out(Shape{len, cout});
  auto Y = mmat(out.mutable_ptr(), len, cout);
  Y.noalias() = cmat(cols.data(), len, k * cin) * cmat(kernel.ptr(), k * cin, cout);
  if (has_bias) Y.rowwise() += cmat(bias.ptr(), 1, cout).row(0);

  std::vector<Tensor> inputs{x, kernel};
  if (has_bias) inputs.push_back(bias);
  return emit("conv1d", out, std::move(inputs),
              [kernel, cols = std::move(cols), len, cin, cout, k, pad, has_bias](
                  std::span<const double> g, GradSpans gin) {
                auto G = cmat(g.data(), len, cout);
                if (!gin[1].empty()) {
                  mmat(gin[1].data(), k * cin, cout).noalias() +=
                      cmat(cols.data(), len, k * cin).transpose() * G;
                }
                if (has_bias && !gin[2].empty()) mmat(gin[2].data(), 1, cout) += G.colwise().sum();
                if (gin[0].empty()) return;
                RowMat dcols = G * cmat(kernel.ptr(), k * cin, cout).transpose();
                const auto L = static_cast<std::ptrdiff_t>(len);
                for (std::ptrdiff_t t = 0; t < L; ++t) {
                  for (std::size_t j = 0; j < k; ++j) {
                    const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(j) - pad;
                    if (src < 0 || src >= L) continue;
                    const double* d = dcols.data() + (t * k + j) * cin;
                    for (std::size_t c = 0; c < cin; ++c) gin[0][src * cin + c] += d[c];
                  }
                }
              });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  return emit("reshape", out, {x}, [](std::span<const double> g, GradSpans gin) {
    if (gin[0].empty()) return;
    for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
  });
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  Tensor out(Shape{c, r});
  mmat(out.mutable_ptr(), c, r) = cmat(x.ptr(), r, c).transpose();
  return emit("transpose", out, {x}, [r, c](std::span<const double> g, GradSpans gin) {
    if (gin[0].empty()) return;
    mmat(gin[0].data(), r, c) += cmat(g.data(), c, r).transpose();
  });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  require_axis(parts[0], axis, "concat");
  Shape shape = parts[0].shape();
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape a = p.shape(), b = shape;
    if (a.size() != b.size()) {
      throw ShapeError("concat: rank mismatch " + shape_str(a) + " vs " + shape_str(b));
    }
    a[axis] = b[axis] = 0;
    if (a != b) {
      throw ShapeError("concat: shape mismatch " + shape_str(p.shape()) + " vs " +
                       shape_str(parts[0].shape()));
    }
    total += p.dim(axis);
  }
  shape[axis] = total;
  Tensor out(shape);
  const AxisSplit os = split_axis(shape, axis);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const AxisSplit ps = split_axis(p.shape(), axis);
    for (std::size_t o = 0; o < ps.outer; ++o) {
      std::copy_n(p.ptr() + o * ps.mid * ps.inner, ps.mid * ps.inner,
                  out.mutable_ptr() + (o * os.mid + off) * os.inner);
    }
    off += ps.mid;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  std::vector<std::size_t> mids;
  for (const auto& p : parts) mids.push_back(p.dim(axis));
  return emit("concat", out, std::move(inputs),
              [os, offsets, mids](std::span<const double> g, GradSpans gin) {
                for (std::size_t k = 0; k < mids.size(); ++k) {
                  if (gin[k].empty()) continue;
                  for (std::size_t o = 0; o < os.outer; ++o) {
                    const double* src = g.data() + (o * os.mid + offsets[k]) * os.inner;
                    double* dst = gin[k].data() + o * mids[k] * os.inner;
                    for (std::size_t i = 0; i < mids[k] * os.inner; ++i) dst[i] += src[i];
                  }
                }
              });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  require_axis(x, axis, "slice");
  if (begin >= end || end > x.dim(axis)) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for axis " + std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  Shape shape = x.shape();
  shape[axis] = end - begin;
  const AxisSplit xs = split_axis(x.shape(), axis);
  const std::size_t w = end - begin;
  Tensor out(shape);
  for (std::size_t o = 0; o < xs.outer; ++o) {
    std::copy_n(x.ptr() + (o * xs.mid + begin) * xs.inner, w * xs.inner,
                out.mutable_ptr() + o * w * xs.inner);
  }
  return emit("slice", out, {x}, [xs, begin, w](std::span<const double> g, GradSpans gin) {
    if (gin[0].empty()) return;
    for (std::size_t o = 0; o < xs.outer; ++o) {
      const double* src = g.data() + o * w * xs.inner;
      double* dst = gin[0].data() + (o * xs.mid + begin) * xs.inner;
      for (std::size_t i = 0; i < w * xs.inner; ++i) dst[i] += src[i];
    }
  });
}

std::vector<Tensor> split(const Tensor& x, std::size_t axis, std::size_t parts) {
  require_axis(x, axis, "split");
  if (parts == 0 || x.dim(axis) % parts != 0) {
    throw ShapeError("split: axis " + std::to_string(axis) + " of " + shape_str(x.shape()) +
                     " is not divisible into " + std::to_string(parts) + " parts");
  }
  const std::size_t w = x.dim(axis) / parts;
  std::vector<Tensor> out;
  for (std::size_t p = 0; p < parts; ++p) out.push_back(slice(x, axis, p * w, (p + 1) * w));
  return out;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index) {
  if (index.empty()) throw ShapeError("gather_rows: empty index");
  const std::size_t rows = x.dim(0), width = x.size() / rows;
  Shape shape = x.shape();
  shape[0] = index.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= rows) {
      throw ContractError("gather_rows: index " + std::to_string(index[i]) + " out of range for " +
                          std::to_string(rows) + " rows");
    }
    std::copy_n(x.ptr() + index[i] * width, width, out.mutable_ptr() + i * width);
  }
  return emit("gather_rows", out, {x},
              [idx = std::vector<std::size_t>(index.begin(), index.end()), width](
                  std::span<const double> g, GradSpans gin) {
                if (gin[0].empty()) return;
                for (std::size_t i = 0; i < idx.size(); ++i) {
                  const double* src = g.data() + i * width;
                  double* dst = gin[0].data() + idx[i] * width;
                  for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
                }
              });
}

Tensor reverse_rows(const Tensor& x) {
  std::vector<std::size_t> idx(x.dim(0));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = idx.size() - 1 - i;
  return gather_rows(x, idx);
}

Tensor combine_rows(const Tensor& x, std::span<const std::size_t> index,
                    std::span<const double> weight, std::size_t width) {
  if (width == 0 || index.size() != weight.size() || index.size() % width != 0 || index.empty()) {
    throw ShapeError("combine_rows: index/weight sizes inconsistent with width " +
                     std::to_string(width));
  }
  const std::size_t rows = x.dim(0), cols = x.size() / rows, out_rows = index.size() / width;
  Shape shape = x.shape();
  shape[0] = out_rows;
  Tensor out(shape);
  for (std::size_t i = 0; i < out_rows; ++i) {
    double* dst = out.mutable_ptr() + i * cols;
    for (std::size_t j = 0; j < width; ++j) {
      const std::size_t r = index[i * width + j];
      if (r >= rows) {
        throw ContractError("combine_rows: index " + std::to_string(r) + " out of range for " +
                            std::to_string(rows) + " rows");
      }
      const double w = weight[i * width + j];
      const double* src = x.ptr() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) dst[c] += w * src[c];
    }
  }
  return emit("combine_rows", out, {x},
              [idx = std::vector<std::size_t>(index.begin(), index.end()),
               wts = std::vector<double>(weight.begin(), weight.end()), width, cols,
               out_rows](std::span<const double> g, GradSpans gin) {
                if (gin[0].empty()) return;
                for (std::size_t i = 0; i < out_rows; ++i) {
                  const double* gi = g.data() + i * cols;
                  for (std::size_t j = 0; j < width; ++j) {
                    double* dst = gin[0].data() + idx[i * width + j] * cols;
                    const double w = wts[i * width + j];
                    for (std::size_t c = 0; c < cols; ++c) dst[c] += w * gi[c];
                  }
                }
              });
}

Tensor segment_mean(const Tensor& x, std::span<const std::size_t> segment, std::size_t segments) {
  const std::size_t rows = x.dim(0), cols = x.size() / rows;
  if (segment.size() != rows) {
    throw ShapeError("segment_mean: " + std::to_string(segment.size()) + " segment ids for " +
                     std::to_string(rows) + " rows");
  }
  std::vector<double> count(segments, 0.0);
  for (auto s : segment) {
    if (s >= segments) throw ContractError("segment_mean: segment id out of range");
    count[s] += 1.0;
  }
  for (double c : count) {
    if (c == 0.0) throw ContractError("segment_mean: empty segment");
  }
  Shape shape = x.shape();
  shape[0] = segments;
  Tensor out(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    double* dst = out.mutable_ptr() + segment[r] * cols;
    const double* src = x.ptr() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
  }
  for (std::size_t s = 0; s < segments; ++s) {
    for (std::size_t c = 0; c < cols; ++c) out.mutable_ptr()[s * cols + c] /= count[s];
  }
  return emit("segment_mean", out, {x},
              [seg = std::vector<std::size_t>(segment.begin(), segment.end()),
               count = std::move(count), cols](std::span<const double> g, GradSpans gin) {
                if (gin[0].empty()) return;
                for (std::size_t r = 0; r < seg.size(); ++r) {
                  const double* src = g.data() + seg[r] * cols;
                  for (std::size_t c = 0; c < cols; ++c) gin[0][r * cols + c] += src[c] / count[seg[r]];
                }
              });
}

Tensor mean_pool(const Tensor& x, std::size_t axis) {
  require_axis(x, axis, "mean_pool");
  const AxisSplit s = split_axis(x.shape(), axis);
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (shape.empty()) shape = {1};
  Tensor out(shape);
  const double inv = 1.0 / static_cast<double>(s.mid);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t m = 0; m < s.mid; ++m) {
      const double* src = x.ptr() + (o * s.mid + m) * s.inner;
      double* dst = out.mutable_ptr() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  for (auto& v : out.mutable_data()) v *= inv;
  return emit("mean_pool", out, {x}, [s, inv](std::span<const double> g, GradSpans gin) {
    if (gin[0].empty()) return;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t m = 0; m < s.mid; ++m) {
        double* dst = gin[0].data() + (o * s.mid + m) * s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) dst[i] += g[o * s.inner + i] * inv;
      }
    }
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0;
  for (double v : x.data()) acc += v;
  return emit("sum", Tensor::scalar(acc), {x}, [](std::span<const double> g, GradSpans gin) {
    if (gin[0].empty()) return;
    for (auto& v : gin[0]) v += g[0];
  });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.size());
  double acc = 0;
  for (double v : x.data()) acc += v;
  return emit("mean", Tensor::scalar(acc / n), {x}, [n](std::span<const double> g, GradSpans gin) {
    if (gin[0].empty()) return;
    for (auto& v : gin[0]) v += g[0] / n;
  });
}

Tensor weighted_sum(const Tensor& x, const Tensor& weight) {
  require_same(x, weight, "weighted_sum");
  double acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * weight[i];
  return emit("weighted_sum", Tensor::scalar(acc), {x},
              [weight](std::span<const double> g, GradSpans gin) {
                if (gin[0].empty()) return;
                for (std::size_t i = 0; i < gin[0].size(); ++i) gin[0][i] += g[0] * weight[i];
              });
}

Tensor softmax(const Tensor& x) {
  const std::size_t c = x.shape().back(), rows = x.size() / c;
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.ptr() + r * c;
    double* yr = out.mutable_ptr() + r * c;
    const double mx = *std::max_element(xr, xr + c);
    double z = 0;
    for (std::size_t j = 0; j < c; ++j) z += (yr[j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < c; ++j) yr[j] /= z;
  }
  return emit("softmax", out, {x}, [out, c, rows](std::span<const double> g, GradSpans gin) {
    if (gin[0].empty()) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yr = out.ptr() + r * c;
      const double* gr = g.data() + r * c;
      double dot = 0;
      for (std::size_t j = 0; j < c; ++j) dot += gr[j] * yr[j];
      for (std::size_t j = 0; j < c; ++j) gin[0][r * c + j] += yr[j] * (gr[j] - dot);
    }
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  const std::size_t c = logits.shape().back(), rows = logits.size() / c;
  if (labels.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                     shape_str(logits.shape()));
  }
  std::vector<double> prob(logits.size());
  double loss = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= c) {
      throw ContractError("cross_entropy: label " + std::to_string(labels[r]) + " out of range");
    }
    const double* xr = logits.ptr() + r * c;
    const double mx = *std::max_element(xr, xr + c);
    double z = 0;
    for (std::size_t j = 0; j < c; ++j) z += (prob[r * c + j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < c; ++j) prob[r * c + j] /= z;
    loss += -(xr[labels[r]] - mx - std::log(z));
  }
  const double inv = 1.0 / static_cast<double>(rows);
  return emit("cross_entropy", Tensor::scalar(loss * inv), {logits},
              [prob = std::move(prob), lab = std::vector<int>(labels.begin(), labels.end()), c,
               inv](std::span<const double> g, GradSpans gin) {
                if (gin[0].empty()) return;
                for (std::size_t r = 0; r < lab.size(); ++r) {
                  for (std::size_t j = 0; j < c; ++j) {
                    const double target = static_cast<int>(j) == lab[r] ? 1.0 : 0.0;
                    gin[0][r * c + j] += g[0] * inv * (prob[r * c + j] - target);
                  }
                }
              });
}

Tensor cross_entropy(const Tensor& logits, int label) {
  const int labels[1] = {label};
  if (logits.size() != logits.shape().back()) {
    throw ShapeError("cross_entropy: single label needs one row of logits, got " +
                     shape_str(logits.shape()));
  }
  return cross_entropy(logits, std::span<const int>(labels));
}

}  // namespace hydra::ops
