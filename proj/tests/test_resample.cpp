#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "hydra/resample.hpp"
#include "hydra/tape.hpp"
#include "support.hpp"

using namespace hydra;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

double coverage(const std::vector<Point3>& pts, const std::vector<std::size_t>& chosen, std::size_t m) {
  double worst = 0.0;
  for (const auto& p : pts) {
    double nearest = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      const auto& q = pts[chosen[j]];
      nearest = std::min(nearest, std::hypot(p[0] - q[0], p[1] - q[1], p[2] - q[2]));
    }
    worst = std::max(worst, nearest);
  }
  return worst;
}

}  // namespace

TEST_CASE("fps examples") {
  const std::vector<Point3> line{{0, 0, 0}, {1, 0, 0}, {0.5, 0, 0}};
  CHECK(fps(line, 2) == std::vector<std::size_t>{0, 1});
  CHECK(fps(line, 3) == std::vector<std::size_t>{0, 1, 2});
  CHECK(fps(line, 1) == std::vector<std::size_t>{0});
  CHECK_THROWS_AS(fps(line, 4), ContractError);
  CHECK_THROWS_AS(fps(line, 0), ContractError);
}

TEST_CASE("fps breaks ties by smallest index") {
  // Points 1 and 2 are equally far from point 0.
  const std::vector<Point3> pts{{0, 0, 0}, {0, 1, 0}, {1, 0, 0}, {0.2, 0.2, 0}};
  CHECK(fps(pts, 2) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("fps matches brute-force greedy selection") {
  std::mt19937_64 rng(41);
  std::uniform_int_distribution<std::size_t> size(1, 64);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = size(rng);
    const auto pts = trial % 2 ? testing::random_cloud(n, rng) : testing::lattice_cloud(n, rng);
    const std::size_t m = 1 + rng() % n;
    CHECK(fps(pts, m) == testing::brute_force_fps(pts, m));
  }
}

TEST_CASE("fps coverage only improves as m grows") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pts = testing::random_cloud(80, rng);
    const auto order = fps(pts, 80);
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t m = 1; m <= 80; ++m) {
      const double c = coverage(pts, order, m);
      CHECK(c <= prev);
      prev = c;
    }
    CHECK(prev == 0.0);
  }
}

TEST_CASE("interpolation examples") {
  const std::vector<Point3> src{{0, 0, 0}, {2, 0, 0}};
  const Tensor feats(Shape{2, 1}, std::vector<double>{0.0, 2.0});
  const std::vector<Point3> mid{{1, 0, 0}};
  CHECK(interp_up(src, feats, mid, 2)[0] == doctest::Approx(1.0).epsilon(1e-15));
  const std::vector<Point3> on{{2, 0, 0}};
  CHECK(interp_up(src, feats, on, 2)[0] == 2.0);
  CHECK_THROWS_AS(interp_weights({}, mid, 2), ContractError);
  CHECK_THROWS(interp_up({}, feats, mid, 2));
}

TEST_CASE("interpolation weights sum to one and stay in the hull") {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    const auto src = testing::random_cloud(30, rng);
    const auto dst = testing::random_cloud(50, rng, -0.5, 1.5);
    const auto w = interp_weights(src, dst, 3);
    for (std::size_t i = 0; i < dst.size(); ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 3; ++j) {
        s += w.weight[i * 3 + j];
        CHECK(w.weight[i * 3 + j] >= 0.0);
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
    const Tensor feats = testing::random_tensor({30, 4}, rng);
    const Tensor out = interp_up(src, feats, dst, 3);
    for (std::size_t i = 0; i < dst.size(); ++i) {
      for (std::size_t c = 0; c < 4; ++c) {
        double lo = 1e300, hi = -1e300;
        for (std::size_t j = 0; j < 3; ++j) {
          const double v = feats.at(w.index[i * 3 + j], c);
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        CHECK(out.at(i, c) >= lo - 1e-12);
        CHECK(out.at(i, c) <= hi + 1e-12);
      }
    }
  }
}

TEST_CASE("interpolation picks the k nearest sources") {
  std::mt19937_64 rng(44);
  const auto src = testing::random_cloud(40, rng);
  const auto dst = testing::random_cloud(10, rng);
  const auto w = interp_weights(src, dst, 3);
  for (std::size_t i = 0; i < dst.size(); ++i) {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t j = 0; j < src.size(); ++j) {
      const double dx = src[j][0] - dst[i][0], dy = src[j][1] - dst[i][1], dz = src[j][2] - dst[i][2];
      all.push_back({dx * dx + dy * dy + dz * dz, j});
    }
    std::sort(all.begin(), all.end());
    const std::set<std::size_t> want{all[0].second, all[1].second, all[2].second};
    const std::set<std::size_t> got{w.index[i * 3], w.index[i * 3 + 1], w.index[i * 3 + 2]};
    CHECK(got == want);
    const double expect0 = 1.0 / (all[0].first + kInterpEps);
    const double total = expect0 + 1.0 / (all[1].first + kInterpEps) + 1.0 / (all[2].first + kInterpEps);
    CHECK(w.weight[i * 3] == doctest::Approx(expect0 / total).epsilon(1e-12));
  }
}

TEST_CASE("grid pooling examples") {
  const std::vector<Point3> two{{0.1, 0.1, 0.1}, {0.3, 0.5, 0.2}};
  const Tensor f(Shape{2, 1}, std::vector<double>{1.0, 3.0});
  const auto r = grid_pool(two, f, 1.0);
  REQUIRE(r.pooling.voxels() == 1);
  CHECK(r.feats[0] == 2.0);
  CHECK(r.pooling.coords[0][0] == doctest::Approx(0.2));
  CHECK(r.pooling.coords[0][1] == doctest::Approx(0.3));

  std::mt19937_64 rng(45);
  const auto pts = testing::random_cloud(100, rng, 0.0, 1.0);
  CHECK(grid_assign(pts, 5.0).voxels() == 1);
  CHECK_THROWS_AS(grid_assign(pts, 0.0), ContractError);
}

TEST_CASE("grid pooling orders voxels by first occurrence") {
  const std::vector<Point3> pts{{1.5, 0, 0}, {0.2, 0, 0}, {1.7, 0, 0}, {-0.5, 0, 0}};
  const auto g = grid_assign(pts, 1.0);
  CHECK(g.assignment == std::vector<std::size_t>{0, 1, 0, 2});
}

TEST_CASE("grid pooling conserves mass") {
  std::mt19937_64 rng(46);
  for (double size : {0.1, 0.25, 0.6}) {
    const auto pts = testing::random_cloud(200, rng, -1, 1);
    const Tensor feats = testing::random_tensor({200, 3}, rng);
    const auto r = grid_pool(pts, feats, size);
    std::vector<double> count(r.pooling.voxels(), 0.0);
    for (auto a : r.pooling.assignment) count[a] += 1;
    for (std::size_t c = 0; c < 3; ++c) {
      double pooled = 0, raw = 0;
      for (std::size_t v = 0; v < r.pooling.voxels(); ++v) pooled += count[v] * r.feats.at(v, c);
      for (std::size_t i = 0; i < 200; ++i) raw += feats.at(i, c);
      CHECK(std::abs(pooled - raw) < 1e-9);
    }
  }
}

TEST_CASE("grid unpooling") {
  std::mt19937_64 rng(47);
  const auto pts = testing::random_cloud(60, rng, -1, 1);
  const Tensor constant(Shape{60, 2}, 4.25);
  const auto r = grid_pool(pts, constant, 0.4);
  CHECK(values(grid_unpool(r.feats, r.pooling.assignment)) == values(constant));

  const Tensor feats = testing::random_tensor({60, 2}, rng);
  const auto p = grid_pool(pts, feats, 0.4);
  const Tensor up = grid_unpool(p.feats, p.pooling.assignment);
  for (std::size_t i = 0; i < 60; ++i) {
    for (std::size_t c = 0; c < 2; ++c) CHECK(up.at(i, c) == p.feats.at(p.pooling.assignment[i], c));
  }
  const auto again = grid_pool(pts, up, 0.4);
  for (std::size_t i = 0; i < p.feats.size(); ++i) CHECK(std::abs(again.feats[i] - p.feats[i]) < 1e-12);

  const std::vector<std::size_t> dangling{0, 5};
  CHECK_THROWS_AS(grid_unpool(Tensor(Shape{2, 1}), dangling), ContractError);
}
