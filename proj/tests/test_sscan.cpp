#include <doctest.h>

#include <cmath>
#include <random>

#include "hydra/ops.hpp"
#include "hydra/sscan.hpp"
#include "support.hpp"

using namespace hydra;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

SSMParams zero_projection(SSMParams p) {
  p.w_b = Tensor(p.w_b.shape());
  p.w_c = Tensor(p.w_c.shape());
  return p;
}

}  // namespace

TEST_CASE("discretize substitution") {
  const double a[] = {-1.0}, b[] = {1.0}, delta[] = {std::log(2.0)};
  const auto euler = discretize(a, b, delta, 1, 1, 1);
  CHECK(euler.a_bar[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(euler.b_bar[0] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const auto zoh = discretize(a, b, delta, 1, 1, 1, Discretization::exact_zoh);
  CHECK(zoh.b_bar[0] == doctest::Approx(0.5).epsilon(1e-14));
  const double bad[] = {0.0};
  CHECK_THROWS_AS(discretize(a, b, bad, 1, 1, 1), ContractError);
}

TEST_CASE("exact and euler input matrices agree to first order in delta") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> ua(-5.0, -0.1), ub(-2.0, 2.0);
  for (int i = 0; i < 200; ++i) {
    const double a[] = {ua(rng)}, b[] = {ub(rng)}, delta[] = {1e-3};
    const auto e = discretize(a, b, delta, 1, 1, 1);
    const auto z = discretize(a, b, delta, 1, 1, 1, Discretization::exact_zoh);
    CHECK(std::abs(e.b_bar[0] - z.b_bar[0]) < delta[0] * std::abs(a[0]) * std::abs(b[0]));
  }
}

TEST_CASE("sequential scan small cases") {
  ScanParams p{2, 1, 1, {0.5, 0.5}, {1, 1}, {1, 1}};
  CHECK(selective_scan_seq(p) == std::vector<double>{1.0, 1.5});

  std::mt19937_64 rng(3);
  ScanParams m = testing::random_scan(20, 2, 3, rng);
  std::fill(m.a_bar.begin(), m.a_bar.end(), 0.0);
  const auto y = selective_scan_seq(m);
  for (std::size_t t = 0; t < 20; ++t) {
    for (std::size_t c = 0; c < 2; ++c) {
      double want = 0;
      for (std::size_t n = 0; n < 3; ++n) want += m.c[t * 3 + n] * m.bx[(t * 2 + c) * 3 + n];
      CHECK(y[t * 2 + c] == doctest::Approx(want).epsilon(1e-14));
    }
  }
}

TEST_CASE("sequential scan matches the reference loop") {
  std::mt19937_64 rng(11);
  const ScanParams p = testing::random_scan(256, 4, 8, rng);
  CHECK(testing::max_rel_error(selective_scan_seq(p), testing::reference_scan(p)) < 1e-12);
}

TEST_CASE("parallel scan matches sequential") {
  std::mt19937_64 rng(12);
  for (std::size_t L : {1, 2, 3, 100, 255, 256}) {
    const ScanParams p = testing::random_scan(L, 3, 4, rng);
    const auto seq = selective_scan_seq(p);
    for (std::size_t chunk : {std::size_t{1}, std::size_t{2}, std::size_t{7}, std::size_t{64}, L}) {
      for (std::size_t threads : {1, 3}) {
        const auto par = selective_scan_par(p, chunk, threads);
        INFO("L=", L, " chunk=", chunk, " threads=", threads);
        CHECK(testing::max_rel_error(par, seq) < 1e-10);
      }
    }
    CHECK(selective_scan_par(p, L) == seq);
    CHECK(selective_scan_par(p, L + 5) == seq);
  }
  CHECK_THROWS(selective_scan_par(testing::random_scan(4, 1, 1, rng), 0));
}

TEST_CASE("parallel scan is independent of the worker count") {
  std::mt19937_64 rng(13);
  const ScanParams p = testing::random_scan(1000, 4, 4, rng);
  for (std::size_t chunk : {1, 7, 64}) {
    const auto one = selective_scan_par(p, chunk, 1);
    for (std::size_t threads : {2, 4, 8}) CHECK(selective_scan_par(p, chunk, threads) == one);
  }
}

TEST_CASE("combine is associative") {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(-1, 1);
  auto elem = [&] {
    ScanElement e{std::vector<double>(5), std::vector<double>(5)};
    for (auto& v : e.a) v = u(rng);
    for (auto& v : e.b) v = u(rng);
    return e;
  };
  for (int i = 0; i < 100; ++i) {
    const auto p = elem(), q = elem(), r = elem();
    const auto left = combine(combine(p, q), r), right = combine(p, combine(q, r));
    for (std::size_t k = 0; k < 5; ++k) {
      CHECK(std::abs(left.a[k] - right.a[k]) < 1e-12);
      CHECK(std::abs(left.b[k] - right.b[k]) < 1e-12);
    }
  }
  // Combining (a1, b1) then (a2, b2) is one step of the recurrence.
  const ScanElement s = combine({{0.5}, {1.0}}, {{0.25}, {2.0}});
  CHECK(s.a[0] == 0.125);
  CHECK(s.b[0] == 0.25 * 1.0 + 2.0);
}

TEST_CASE("hidden state stays bounded") {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    ScanParams p = testing::random_scan(500, 1, 1, rng);
    p.c.assign(p.c.size(), 1.0);
    double amax = 0, bmax = 0;
    for (double v : p.a_bar) amax = std::max(amax, v);
    for (double v : p.bx) bmax = std::max(bmax, std::abs(v));
    for (double y : selective_scan_seq(p)) CHECK(std::abs(y) <= bmax / (1.0 - amax) + 1e-12);
  }
}

TEST_CASE("s6 on a zero sequence is zero") {
  std::mt19937_64 rng(1);
  const SSMParams p = init_ssm_params(4, 8, rng);
  const Tensor y = s6_forward(Tensor(Shape{10, 4}), p);
  for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("s6 init ranges") {
  std::mt19937_64 rng(2);
  const SSMParams p = init_ssm_params(16, 8, rng);
  for (std::size_t c = 0; c < 16; ++c) {
    for (std::size_t n = 0; n < 8; ++n) CHECK(p.a_log.at(c, n) == doctest::Approx(std::log(n + 1.0)));
    const double d = std::log1p(std::exp(p.delta_bias[c]));
    CHECK(d >= 1e-3 * (1 - 1e-9));
    CHECK(d <= 1e-1 * (1 + 1e-9));
  }
}

TEST_CASE("s6 is causal") {
  std::mt19937_64 rng(4);
  const SSMParams p = init_ssm_params(3, 4, rng);
  const Tensor x = testing::random_tensor({30, 3}, rng);
  const auto base = values(s6_forward(x, p));
  for (std::size_t t : {0, 7, 29}) {
    Tensor x2 = x.clone();
    x2.mutable_data()[t * 3 + 1] += 0.5;
    const auto y = values(s6_forward(x2, p));
    for (std::size_t i = 0; i < t * 3; ++i) CHECK(y[i] == base[i]);
    bool changed = false;
    for (std::size_t i = t * 3; i < y.size(); ++i) changed = changed || y[i] != base[i];
    CHECK(changed);
  }
}

TEST_CASE("s6 chunked scan option agrees with sequential") {
  std::mt19937_64 rng(5);
  const SSMParams p = init_ssm_params(6, 4, rng);
  const Tensor x = testing::random_tensor({200, 6}, rng);
  CHECK(testing::max_rel_error(values(s6_forward(x, p, {16, 2})), values(s6_forward(x, p))) < 1e-10);
}

TEST_CASE("mhs6 with one head is plain s6") {
  std::mt19937_64 rng(6);
  const HeadConfig cfg{1, 8, 4};
  const auto heads = init_mhs6_params(cfg, rng);
  const Tensor x = testing::random_tensor({40, 8}, rng);
  CHECK(values(mhs6_forward(x, cfg, heads)) == values(s6_forward(x, heads[0])));
}

TEST_CASE("mhs6 heads are isolated") {
  std::mt19937_64 rng(7);
  const HeadConfig cfg{4, 12, 3};
  const auto heads = init_mhs6_params(cfg, rng);
  const Tensor x = testing::random_tensor({25, 12}, rng);
  const auto base = values(mhs6_forward(x, cfg, heads));
  for (std::size_t h = 0; h < 4; ++h) {
    Tensor x2 = x.clone();
    for (std::size_t t = 0; t < 25; ++t) x2.mutable_data()[t * 12 + h * 3 + 1] += 0.3;
    const auto y = values(mhs6_forward(x2, cfg, heads));
    for (std::size_t t = 0; t < 25; ++t) {
      for (std::size_t c = 0; c < 12; ++c) {
        const bool own = c / 3 == h;
        if (!own) CHECK(y[t * 12 + c] == base[t * 12 + c]);
      }
    }
    bool changed = false;
    for (std::size_t t = 0; t < 25; ++t) {
      for (std::size_t c = h * 3; c < h * 3 + 3; ++c) changed = changed || y[t * 12 + c] != base[t * 12 + c];
    }
    CHECK(changed);
  }
}

TEST_CASE("mhs6 shapes and config errors") {
  std::mt19937_64 rng(8);
  const HeadConfig cfg{6, 48, 8};
  const auto heads = init_mhs6_params(cfg, rng);
  CHECK(mhs6_forward(testing::random_tensor({128, 48}, rng), cfg, heads).shape() == Shape{128, 48});
  CHECK_THROWS(HeadConfig({5, 48, 8}).validate());
  CHECK_THROWS(mhs6_forward(testing::random_tensor({4, 40}, rng), cfg, heads));
}

TEST_CASE("bidirectional backward branch is the reversed forward scan") {
  std::mt19937_64 rng(9);
  const HeadConfig cfg{2, 6, 3};
  const auto fwd = init_mhs6_params(cfg, rng);
  const auto bwd = init_mhs6_params(cfg, rng);
  std::vector<SSMParams> silent;
  for (const auto& h : fwd) silent.push_back(zero_projection(h));
  const Tensor x = testing::random_tensor({15, 6}, rng);
  const Tensor both = bidirectional(x, {cfg, silent}, {cfg, bwd});
  const Tensor manual = ops::reverse_rows(mhs6_forward(ops::reverse_rows(x), cfg, bwd));
  CHECK(values(both) == values(manual));
}

TEST_CASE("bidirectional mixing has a global receptive field") {
  std::mt19937_64 rng(10);
  const HeadConfig cfg{2, 4, 3};
  const auto fwd = init_mhs6_params(cfg, rng);
  const auto bwd = init_mhs6_params(cfg, rng);
  const Tensor x = testing::random_tensor({12, 4}, rng);
  const auto base = values(bidirectional(x, {cfg, fwd}, {cfg, bwd}));
  for (std::size_t t = 0; t < 12; ++t) {
    Tensor x2 = x.clone();
    for (std::size_t c = 0; c < 4; ++c) x2.mutable_data()[t * 4 + c] += 0.5;
    const auto y = values(bidirectional(x2, {cfg, fwd}, {cfg, bwd}));
    for (std::size_t s = 0; s < 12; ++s) {
      bool changed = false;
      for (std::size_t c = 0; c < 4; ++c) changed = changed || y[s * 4 + c] != base[s * 4 + c];
      CHECK(changed);
    }
  }
}

TEST_CASE("bidirectional with shared parameters preserves palindromes") {
  std::mt19937_64 rng(11);
  const HeadConfig cfg{3, 6, 2};
  const auto params = init_mhs6_params(cfg, rng);
  for (std::size_t L : {9, 10}) {
    Tensor x = testing::random_tensor({L, 6}, rng);
    for (std::size_t t = 0; t < L / 2; ++t) {
      for (std::size_t c = 0; c < 6; ++c) x.mutable_data()[(L - 1 - t) * 6 + c] = x[t * 6 + c];
    }
    const Tensor y = bidirectional(x, {cfg, params}, {cfg, params});
    for (std::size_t t = 0; t < L; ++t) {
      for (std::size_t c = 0; c < 6; ++c) CHECK(y[t * 6 + c] == doctest::Approx(y[(L - 1 - t) * 6 + c]).epsilon(1e-13));
    }
  }
}

TEST_CASE("selective scan tape op agrees with the raw kernel") {
  std::mt19937_64 rng(12);
  const ScanParams p = testing::random_scan(30, 2, 3, rng);
  const Tensor a(Shape{30, 2, 3}, p.a_bar), b(Shape{30, 2, 3}, p.bx), c(Shape{30, 3}, p.c);
  CHECK(values(selective_scan(a, b, c)) == selective_scan_seq(p));
  CHECK(values(selective_scan(a, b, c, {7, 2})) == selective_scan_par(p, 7, 2));
}
