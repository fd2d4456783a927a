#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hydra/pointio.hpp"

namespace hydra {

using Cell = std::array<std::uint32_t, 3>;

inline constexpr int kMaxCurveBits = 20;

class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// `none` marks a curve-free random ordering (ablation baseline).
enum class Curve { hilbert, zorder, none };

// Axis traversal priority, listed in the sequential assignment order.
enum class AxisOrder { xyz, yxz, xzy, zxy, yzx, zyx };

inline constexpr std::array<AxisOrder, 6> kAllAxisOrders = {
    AxisOrder::xyz, AxisOrder::yxz, AxisOrder::xzy, AxisOrder::zxy, AxisOrder::yzx, AxisOrder::zyx};

struct CurveVariant {
  Curve curve = Curve::hilbert;
  AxisOrder order = AxisOrder::xyz;

  friend bool operator==(const CurveVariant&, const CurveVariant&) = default;
};

std::string_view curve_name(Curve c);
std::string_view axis_order_name(AxisOrder o);
Curve parse_curve(std::string_view s);
AxisOrder parse_axis_order(std::string_view s);
std::string variant_name(const CurveVariant& v);  // e.g. "hilbert_xyz"

// Axis indices in priority order: zyx -> {2, 1, 0}.
std::array<int, 3> axis_permutation(AxisOrder o);

// Reorders (x, y, z) so the codec's first axis is the highest-priority one.
Cell apply_variant(const Cell& cell, AxisOrder order);
Cell unapply_variant(const Cell& cell, AxisOrder order);

// Base codecs over (u, v, w); the first coordinate owns the most significant
// bit of every 3-bit group. Hilbert index 0 is cell (0, 0, 0).
std::uint64_t hilbert_encode(const Cell& cell, int bits);
Cell hilbert_decode(std::uint64_t index, int bits);
std::uint64_t zorder_encode(const Cell& cell, int bits);
Cell zorder_decode(std::uint64_t index, int bits);

// Codec applied after the variant's axis permutation. Curve::none is rejected.
std::uint64_t curve_encode(const Cell& xyz, const CurveVariant& variant, int bits);
Cell curve_decode(std::uint64_t index, const CurveVariant& variant, int bits);

struct Serialization {
  std::vector<std::size_t> perm;      // perm[i]: point at sequence position i
  std::vector<std::size_t> inv_perm;  // inv_perm[perm[i]] == i
  CurveVariant variant;
  int bits = 0;
};

inline constexpr int kDefaultCurveBits = 10;

// Per-cloud bounding-box quantization onto a 2^bits grid, then a stable sort by
// curve index (ties keep original order).
Serialization serialize(std::span<const Point3> coords, const CurveVariant& variant,
                        int bits = kDefaultCurveBits);
Serialization serialize(const PointCloud& pc, const CurveVariant& variant,
                        int bits = kDefaultCurveBits);
// Uniform random ordering; variant.curve is Curve::none.
Serialization random_serialization(std::size_t n, std::uint64_t seed);
Serialization identity_serialization(std::size_t n);

// Mean Euclidean distance between consecutive points of the ordering.
double mean_neighbor_distance(std::span<const Point3> coords, std::span<const std::size_t> perm);

enum class AssignMode { shuffle, sequential, fixed };

std::string_view assign_mode_name(AssignMode m);
AssignMode parse_assign_mode(std::string_view s);

struct ShufflePlan {
  std::vector<CurveVariant> assignments;
  std::uint64_t seed = 0;
  AssignMode mode = AssignMode::shuffle;
};

// shuffle: i.i.d. uniform draws from `enabled`; sequential: cycle `enabled`
// in order; fixed: enabled[0] everywhere. `enabled` defaults to the six
// Hilbert variants.
ShufflePlan make_shuffle_plan(std::size_t num_blocks, std::uint64_t seed, AssignMode mode,
                              std::span<const CurveVariant> enabled = {});

std::vector<CurveVariant> hilbert_variants();

}  // namespace hydra
