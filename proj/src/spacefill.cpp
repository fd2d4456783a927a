#include "hydra/spacefill.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace hydra {

std::string_view curve_name(Curve c) {
  switch (c) {
    case Curve::hilbert: return "hilbert";
    case Curve::zorder: return "zorder";
    case Curve::none: return "none";
  }
  return "?";
}

std::string_view axis_order_name(AxisOrder o) {
  switch (o) {
    case AxisOrder::xyz: return "xyz";
    case AxisOrder::yxz: return "yxz";
    case AxisOrder::xzy: return "xzy";
    case AxisOrder::zxy: return "zxy";
    case AxisOrder::yzx: return "yzx";
    case AxisOrder::zyx: return "zyx";
  }
  return "?";
}

Curve parse_curve(std::string_view s) {
  for (Curve c : {Curve::hilbert, Curve::zorder, Curve::none}) {
    if (curve_name(c) == s) return c;
  }
  throw std::invalid_argument("unknown curve '" + std::string(s) + "'");
}

AxisOrder parse_axis_order(std::string_view s) {
  for (AxisOrder o : kAllAxisOrders) {
    if (axis_order_name(o) == s) return o;
  }
  throw std::invalid_argument("unknown axis priority '" + std::string(s) + "'");
}

std::string variant_name(const CurveVariant& v) {
  if (v.curve == Curve::none) return "none";
  return std::string(curve_name(v.curve)) + "_" + std::string(axis_order_name(v.order));
}

std::array<int, 3> axis_permutation(AxisOrder o) {
  const auto name = axis_order_name(o);
  return {name[0] - 'x', name[1] - 'x', name[2] - 'x'};
}

Cell apply_variant(const Cell& cell, AxisOrder order) {
  const auto p = axis_permutation(order);
  return {cell[p[0]], cell[p[1]], cell[p[2]]};
}

Cell unapply_variant(const Cell& cell, AxisOrder order) {
  const auto p = axis_permutation(order);
  Cell out{};
  for (int i = 0; i < 3; ++i) out[p[i]] = cell[i];
  return out;
}

namespace {

void check_bits(int bits) {
  if (bits < 1 || bits > kMaxCurveBits) {
    throw RangeError("curve bits " + std::to_string(bits) + " outside [1, " +
                     std::to_string(kMaxCurveBits) + "]");
  }
}

void check_cell(const Cell& cell, int bits) {
  check_bits(bits);
  const std::uint32_t limit = 1u << bits;
  for (auto v : cell) {
    if (v >= limit) {
      throw RangeError("cell coordinate " + std::to_string(v) + " >= 2^" + std::to_string(bits));
    }
  }
}

void check_index(std::uint64_t index, int bits) {
  check_bits(bits);
  if (index >> (3 * bits)) {
    throw RangeError("curve index " + std::to_string(index) + " >= 2^" + std::to_string(3 * bits));
  }
}

std::uint64_t interleave(const Cell& c, int bits) {
  std::uint64_t index = 0;
  for (int b = bits - 1; b >= 0; --b) {
    for (int i = 0; i < 3; ++i) index = (index << 1) | ((c[i] >> b) & 1u);
  }
  return index;
}

Cell deinterleave(std::uint64_t index, int bits) {
  Cell c{0, 0, 0};
  for (int b = 0; b < bits; ++b) {
    for (int i = 2; i >= 0; --i) {
      c[i] |= static_cast<std::uint32_t>(index & 1u) << b;
      index >>= 1;
    }
  }
  return c;
}

}  // namespace

// Skilling's transpose construction: the Hilbert index, written in the
// "transposed" form, is bit-interleaved exactly like a Morton code.
std::uint64_t hilbert_encode(const Cell& cell, int bits) {
  check_cell(cell, bits);
  Cell x = cell;
  const std::uint32_t top = 1u << (bits - 1);
  for (std::uint32_t q = top; q > 1; q >>= 1) {
    const std::uint32_t p = q - 1;
    for (int i = 0; i < 3; ++i) {
      if (x[i] & q) {
        x[0] ^= p;
      } else {
        const std::uint32_t t = (x[0] ^ x[i]) & p;
        x[0] ^= t;
        x[i] ^= t;
      }
    }
  }
  for (int i = 1; i < 3; ++i) x[i] ^= x[i - 1];
  std::uint32_t t = 0;
  for (std::uint32_t q = top; q > 1; q >>= 1) {
    if (x[2] & q) t ^= q - 1;
  }
  for (auto& v : x) v ^= t;
  return interleave(x, bits);
}

Cell hilbert_decode(std::uint64_t index, int bits) {
  check_index(index, bits);
  Cell x = deinterleave(index, bits);
  const std::uint32_t end = 2u << (bits - 1);
  std::uint32_t t = x[2] >> 1;
  for (int i = 2; i > 0; --i) x[i] ^= x[i - 1];
  x[0] ^= t;
  for (std::uint32_t q = 2; q != end; q <<= 1) {
    const std::uint32_t p = q - 1;
    for (int i = 2; i >= 0; --i) {
      if (x[i] & q) {
        x[0] ^= p;
      } else {
        t = (x[0] ^ x[i]) & p;
        x[0] ^= t;
        x[i] ^= t;
      }
    }
  }
  return x;
}

std::uint64_t zorder_encode(const Cell& cell, int bits) {
  check_cell(cell, bits);
  return interleave(cell, bits);
}

Cell zorder_decode(std::uint64_t index, int bits) {
  check_index(index, bits);
  return deinterleave(index, bits);
}

std::uint64_t curve_encode(const Cell& xyz, const CurveVariant& variant, int bits) {
  const Cell uvw = apply_variant(xyz, variant.order);
  switch (variant.curve) {
    case Curve::hilbert: return hilbert_encode(uvw, bits);
    case Curve::zorder: return zorder_encode(uvw, bits);
    case Curve::none: break;
  }
  throw std::invalid_argument("curve_encode: no codec for curve 'none'");
}

Cell curve_decode(std::uint64_t index, const CurveVariant& variant, int bits) {
  switch (variant.curve) {
    case Curve::hilbert: return unapply_variant(hilbert_decode(index, bits), variant.order);
    case Curve::zorder: return unapply_variant(zorder_decode(index, bits), variant.order);
    case Curve::none: break;
  }
  throw std::invalid_argument("curve_decode: no codec for curve 'none'");
}

namespace {

Serialization from_perm(std::vector<std::size_t> perm, const CurveVariant& variant, int bits) {
  Serialization s;
  s.inv_perm.resize(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) s.inv_perm[perm[i]] = i;
  s.perm = std::move(perm);
  s.variant = variant;
  s.bits = bits;
  return s;
}

}  // namespace

Serialization serialize(std::span<const Point3> coords, const CurveVariant& variant, int bits) {
  check_bits(bits);
  if (coords.empty()) throw std::invalid_argument("serialize: empty point set");
  if (variant.curve == Curve::none) {
    throw std::invalid_argument("serialize: curve 'none' has no codec, use random_serialization");
  }
  Point3 lo = coords[0], hi = coords[0];
  for (const auto& p : coords) {
    for (int k = 0; k < 3; ++k) {
      if (!std::isfinite(p[k])) throw std::invalid_argument("serialize: non-finite coordinate");
      lo[k] = std::min(lo[k], p[k]);
      hi[k] = std::max(hi[k], p[k]);
    }
  }
  const double cells = std::ldexp(1.0, bits);
  const auto max_cell = static_cast<std::uint32_t>((1u << bits) - 1);
  std::vector<std::uint64_t> keys(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i) {
    Cell c{0, 0, 0};
    for (int k = 0; k < 3; ++k) {
      const double extent = hi[k] - lo[k];
      if (extent <= 0.0) continue;
      const double q = std::floor((coords[i][k] - lo[k]) / extent * cells);
      c[k] = q >= static_cast<double>(max_cell) ? max_cell : static_cast<std::uint32_t>(q);
    }
    keys[i] = curve_encode(c, variant, bits);
  }
  std::vector<std::size_t> perm(coords.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::stable_sort(perm.begin(), perm.end(),
                   [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
  return from_perm(std::move(perm), variant, bits);
}

Serialization serialize(const PointCloud& pc, const CurveVariant& variant, int bits) {
  return serialize(std::span<const Point3>(pc.coords), variant, bits);
}

Serialization random_serialization(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  return from_perm(std::move(perm), CurveVariant{Curve::none, AxisOrder::xyz}, 0);
}

Serialization identity_serialization(std::size_t n) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  return from_perm(std::move(perm), CurveVariant{Curve::none, AxisOrder::xyz}, 0);
}

double mean_neighbor_distance(std::span<const Point3> coords, std::span<const std::size_t> perm) {
  if (perm.size() < 2) return 0.0;
  double total = 0;
  for (std::size_t i = 1; i < perm.size(); ++i) {
    const auto& a = coords[perm[i - 1]];
    const auto& b = coords[perm[i]];
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    total += std::sqrt(dx * dx + dy * dy + dz * dz);
  }
  return total / static_cast<double>(perm.size() - 1);
}

std::string_view assign_mode_name(AssignMode m) {
  switch (m) {
    case AssignMode::shuffle: return "shuffle";
    case AssignMode::sequential: return "sequential";
    case AssignMode::fixed: return "fixed";
  }
  return "?";
}

AssignMode parse_assign_mode(std::string_view s) {
  for (AssignMode m : {AssignMode::shuffle, AssignMode::sequential, AssignMode::fixed}) {
    if (assign_mode_name(m) == s) return m;
  }
  throw std::invalid_argument("unknown assignment mode '" + std::string(s) + "'");
}

std::vector<CurveVariant> hilbert_variants() {
  std::vector<CurveVariant> v;
  for (AxisOrder o : kAllAxisOrders) v.push_back({Curve::hilbert, o});
  return v;
}

ShufflePlan make_shuffle_plan(std::size_t num_blocks, std::uint64_t seed, AssignMode mode,
                              std::span<const CurveVariant> enabled) {
  if (num_blocks == 0) throw std::invalid_argument("shuffle plan needs at least one block");
  std::vector<CurveVariant> pool(enabled.begin(), enabled.end());
  if (pool.empty()) pool = hilbert_variants();

  ShufflePlan plan;
  plan.seed = seed;
  plan.mode = mode;
  plan.assignments.reserve(num_blocks);
  std::mt19937_64 rng(seed);
  for (std::size_t b = 0; b < num_blocks; ++b) {
    switch (mode) {
      case AssignMode::shuffle: {
        plan.assignments.push_back(pool[rng() % pool.size()]);
        break;
      }
      case AssignMode::sequential: plan.assignments.push_back(pool[b % pool.size()]); break;
      case AssignMode::fixed: plan.assignments.push_back(pool.front()); break;
    }
  }
  return plan;
}

}  // namespace hydra
