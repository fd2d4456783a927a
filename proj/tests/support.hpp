#pragma once

// Shared fixtures and independent reference implementations for the tests.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "hydra/pointio.hpp"
#include "hydra/sscan.hpp"
#include "hydra/tensor.hpp"

namespace testing {

inline hydra::Tensor random_tensor(hydra::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  hydra::Tensor t(std::move(shape));
  for (auto& v : t.mutable_data()) v = u(rng);
  return t;
}

inline std::vector<hydra::Point3> random_cloud(std::size_t n, std::mt19937_64& rng, double lo = 0.0,
                                               double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<hydra::Point3> pts(n);
  for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
  return pts;
}

inline hydra::ScanParams random_scan(std::size_t L, std::size_t d, std::size_t N, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ua(0.05, 0.999), ub(-1.0, 1.0);
  hydra::ScanParams p;
  p.length = L;
  p.channels = d;
  p.state = N;
  p.a_bar.resize(L * d * N);
  p.bx.resize(L * d * N);
  p.c.resize(L * N);
  for (auto& v : p.a_bar) v = ua(rng);
  for (auto& v : p.bx) v = ub(rng);
  for (auto& v : p.c) v = ub(rng);
  return p;
}

// Straight per-step recurrence, written without the library's helpers.
inline std::vector<double> reference_scan(const hydra::ScanParams& p) {
  const std::size_t L = p.length, d = p.channels, N = p.state;
  std::vector<double> y(L * d, 0.0);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t n = 0; n < N; ++n) {
      double h = 0.0;
      for (std::size_t t = 0; t < L; ++t) {
        const std::size_t k = (t * d + c) * N + n;
        h = p.a_bar[k] * h + p.bx[k];
        y[t * d + c] += p.c[t * N + n] * h;
      }
    }
  }
  return y;
}

inline double max_rel_error(const std::vector<double>& got, const std::vector<double>& want) {
  double worst = 0.0;
  for (std::size_t i = 0; i < want.size(); ++i) {
    const double denom = std::max(std::abs(want[i]), 1e-12);
    worst = std::max(worst, std::abs(got[i] - want[i]) / denom);
  }
  return worst;
}

// Greedy farthest-point selection by exhaustive recomputation: at each step
// every candidate's distance to every selected point is evaluated afresh.
inline std::vector<std::size_t> brute_force_fps(const std::vector<hydra::Point3>& pts, std::size_t m) {
  std::vector<std::size_t> chosen{0};
  while (chosen.size() < m) {
    std::size_t best = pts.size();
    double best_d = -1.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (std::find(chosen.begin(), chosen.end(), i) != chosen.end()) continue;
      double nearest = std::numeric_limits<double>::infinity();
      for (std::size_t j : chosen) {
        double s = 0.0;
        for (int a = 0; a < 3; ++a) s += (pts[i][a] - pts[j][a]) * (pts[i][a] - pts[j][a]);
        nearest = std::min(nearest, s);
      }
      if (nearest > best_d) {
        best_d = nearest;
        best = i;
      }
    }
    chosen.push_back(best);
  }
  return chosen;
}

// Points on a coarse lattice, so equal distances actually occur.
inline std::vector<hydra::Point3> lattice_cloud(std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, 4);
  std::vector<hydra::Point3> pts(n);
  for (auto& p : pts) p = {0.25 * u(rng), 0.25 * u(rng), 0.25 * u(rng)};
  return pts;
}

inline std::uint64_t l1_step(const std::array<std::uint32_t, 3>& a, const std::array<std::uint32_t, 3>& b) {
  std::uint64_t s = 0;
  for (int i = 0; i < 3; ++i) s += a[i] > b[i] ? a[i] - b[i] : b[i] - a[i];
  return s;
}

}  // namespace testing
