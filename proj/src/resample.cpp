#include "hydra/resample.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>

#include "hydra/ops.hpp"

namespace hydra {

namespace {

inline double sq_dist(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

std::vector<std::size_t> fps(std::span<const Point3> coords, std::size_t m) {
  const std::size_t n = coords.size();
  if (m == 0 || m > n) {
    throw ContractError("fps: need 1 <= m <= n, got m=" + std::to_string(m) +
                        " n=" + std::to_string(n));
  }
  std::vector<std::size_t> picked{0};
  picked.reserve(m);
  std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);
  taken[0] = 1;
  std::size_t last = 0;
  while (picked.size() < m) {
    std::size_t best = n;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      min_d[i] = std::min(min_d[i], sq_dist(coords[i], coords[last]));
      if (min_d[i] > best_d) {
        best_d = min_d[i];
        best = i;
      }
    }
    picked.push_back(best);
    taken[best] = 1;
    last = best;
  }
  return picked;
}

InterpWeights interp_weights(std::span<const Point3> src, std::span<const Point3> dst,
                             std::size_t k) {
  if (src.empty()) throw ContractError("interp: empty source set");
  if (k == 0) throw ContractError("interp: k must be >= 1");
  k = std::min(k, src.size());
  InterpWeights w;
  w.k = k;
  w.index.resize(dst.size() * k);
  w.weight.resize(dst.size() * k);
  std::vector<std::pair<double, std::size_t>> cand(src.size());
  for (std::size_t i = 0; i < dst.size(); ++i) {
    for (std::size_t j = 0; j < src.size(); ++j) cand[j] = {sq_dist(dst[i], src[j]), j};
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    std::size_t* idx = w.index.data() + i * k;
    double* wt = w.weight.data() + i * k;
    for (std::size_t j = 0; j < k; ++j) idx[j] = cand[j].second;
    if (std::sqrt(cand[0].first) < kCoincidentDist) {
      std::fill_n(wt, k, 0.0);
      wt[0] = 1.0;
      continue;
    }
    double total = 0;
    for (std::size_t j = 0; j < k; ++j) total += (wt[j] = 1.0 / (cand[j].first + kInterpEps));
    for (std::size_t j = 0; j < k; ++j) wt[j] /= total;
  }
  return w;
}

Tensor interp_up(std::span<const Point3> src, const Tensor& src_feats,
                 std::span<const Point3> dst, std::size_t k) {
  if (src_feats.dim(0) != src.size()) {
    throw ShapeError("interp_up: " + std::to_string(src.size()) + " source points but features " +
                     shape_str(src_feats.shape()));
  }
  const InterpWeights w = interp_weights(src, dst, k);
  return ops::combine_rows(src_feats, w.index, w.weight, w.k);
}

GridPooling grid_assign(std::span<const Point3> coords, double grid_size) {
  if (!(grid_size > 0.0)) throw ContractError("grid_pool: grid_size must be > 0");
  GridPooling g;
  g.assignment.resize(coords.size());
  std::map<std::array<long long, 3>, std::size_t> rows;
  std::vector<double> count;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    std::array<long long, 3> key{};
    for (int a = 0; a < 3; ++a) key[a] = static_cast<long long>(std::floor(coords[i][a] / grid_size));
    auto [it, inserted] = rows.emplace(key, g.coords.size());
    if (inserted) {
      g.coords.push_back({0, 0, 0});
      count.push_back(0);
    }
    const std::size_t r = it->second;
    g.assignment[i] = r;
    for (int a = 0; a < 3; ++a) g.coords[r][a] += coords[i][a];
    count[r] += 1;
  }
  for (std::size_t r = 0; r < g.coords.size(); ++r) {
    for (auto& v : g.coords[r]) v /= count[r];
  }
  return g;
}

GridPoolResult grid_pool(std::span<const Point3> coords, const Tensor& feats, double grid_size) {
  if (feats.dim(0) != coords.size()) {
    throw ShapeError("grid_pool: " + std::to_string(coords.size()) + " points but features " +
                     shape_str(feats.shape()));
  }
  GridPoolResult r;
  r.pooling = grid_assign(coords, grid_size);
  r.feats = ops::segment_mean(feats, r.pooling.assignment, r.pooling.voxels());
  return r;
}

Tensor grid_unpool(const Tensor& pooled, std::span<const std::size_t> assignment) {
  for (auto a : assignment) {
    if (a >= pooled.dim(0)) {
      throw ContractError("grid_unpool: assignment " + std::to_string(a) + " dangles past " +
                          std::to_string(pooled.dim(0)) + " pooled rows");
    }
  }
  return ops::gather_rows(pooled, assignment);
}

}  // namespace hydra
