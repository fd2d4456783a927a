#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hydra/pointio.hpp"
#include "hydra/tensor.hpp"

namespace hydra {

// Farthest point sampling seeded at index 0. Each pick maximizes the squared
// distance to the selected set; ties go to the smallest index.
std::vector<std::size_t> fps(std::span<const Point3> coords, std::size_t m);

inline constexpr double kInterpEps = 1e-8;
inline constexpr double kCoincidentDist = 1e-12;

struct InterpWeights {
  std::size_t k = 0;
  std::vector<std::size_t> index;  // [dst][k]
  std::vector<double> weight;      // [dst][k], rows sum to 1
};

// k nearest sources per destination with weights proportional to
// 1/(d^2 + eps). A destination within 1e-12 of a source copies it exactly.
InterpWeights interp_weights(std::span<const Point3> src, std::span<const Point3> dst,
                             std::size_t k = 3);
// src_feats: [n_src, C] -> [n_dst, C]. Differentiable in the features.
Tensor interp_up(std::span<const Point3> src, const Tensor& src_feats,
                 std::span<const Point3> dst, std::size_t k = 3);

struct GridPooling {
  std::vector<Point3> coords;           // voxel centroids, first-occurrence order
  std::vector<std::size_t> assignment;  // source point -> output row
  std::size_t voxels() const { return coords.size(); }
};

// Voxel key floor(coord / grid_size) per axis.
GridPooling grid_assign(std::span<const Point3> coords, double grid_size);

struct GridPoolResult {
  GridPooling pooling;
  Tensor feats;  // per-voxel mean
};

GridPoolResult grid_pool(std::span<const Point3> coords, const Tensor& feats, double grid_size);
// feats[i] = pooled[assignment[i]].
Tensor grid_unpool(const Tensor& pooled, std::span<const std::size_t> assignment);

}  // namespace hydra
