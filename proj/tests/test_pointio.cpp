#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "hydra/pointio.hpp"
#include "support.hpp"

using namespace hydra;

namespace {

PointCloud parse(const std::string& text) {
  std::istringstream in(text);
  return read_xyz(in);
}

double norm(const Point3& p) { return std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]); }

// Distance from p to the surface of the axis-aligned cube of half-side s.
double cube_surface_distance(const Point3& p, double s) {
  double inside = 0.0, outside = 0.0;
  double m = 0.0;
  for (double v : p) {
    const double a = std::abs(v);
    m = std::max(m, a);
    if (a > s) outside += (a - s) * (a - s);
  }
  inside = s - m;
  return outside > 0 ? std::sqrt(outside) : inside;
}

}  // namespace

TEST_CASE("load_xyz parses coordinates in file order") {
  const PointCloud pc = parse("0 0 0\n1 0 0");
  REQUIRE(pc.size() == 2);
  CHECK(pc.coords[1] == Point3{1, 0, 0});
  CHECK_FALSE(pc.has_features());
}

TEST_CASE("load_xyz skips comments and reads feature columns") {
  const PointCloud pc = parse("# hdr\n0 0 0 1.5");
  REQUIRE(pc.size() == 1);
  CHECK(pc.feature_dim == 1);
  CHECK(pc.features[0] == 1.5);
}

TEST_CASE("load_xyz errors") {
  SUBCASE("too few fields reports the line") {
    try {
      parse("0 0\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 1);
    }
  }
  SUBCASE("line numbers count comments and blanks") {
    try {
      parse("# a\n\n1 2 3\n1 2 x\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 4);
    }
  }
  SUBCASE("inconsistent columns") { CHECK_THROWS_AS(parse("0 0 0 1\n1 1 1\n"), FormatError); }
  SUBCASE("empty") { CHECK_THROWS_AS(parse("# nothing\n\n"), EmptyInputError); }
  SUBCASE("missing file") { CHECK_THROWS(load_xyz("/nonexistent/cloud.xyz")); }
}

TEST_CASE("save_xyz round-trips doubles exactly") {
  std::mt19937_64 rng(4);
  PointCloud pc;
  pc.coords = testing::random_cloud(50, rng, -1e3, 1e3);
  pc.coords[0] = {0.1, 1.0 / 3.0, -2e-300};
  pc.feature_dim = 2;
  std::uniform_real_distribution<double> u(-1, 1);
  for (std::size_t i = 0; i < 100; ++i) pc.features.push_back(u(rng));
  const auto path = std::filesystem::temp_directory_path() / "hydra_roundtrip.xyz";
  save_xyz(path, pc);
  const PointCloud back = load_xyz(path);
  std::filesystem::remove(path);
  CHECK(back.coords == pc.coords);
  CHECK(back.features == pc.features);
  CHECK(back.feature_dim == 2);
}

TEST_CASE("make_synthetic sphere lies on the unit sphere") {
  const PointCloud pc = make_synthetic({ShapeKind::sphere, 64, 0.0, 1});
  REQUIRE(pc.size() == 64);
  for (const auto& p : pc.coords) CHECK(std::abs(norm(p) - 1.0) < 1e-9);
  CHECK(pc.class_id == 0);
}

TEST_CASE("make_synthetic is a pure function of its spec") {
  for (int k = 0; k < kNumShapeKinds; ++k) {
    const SyntheticSpec spec{static_cast<ShapeKind>(k), 100, 0.03, 9};
    const PointCloud a = make_synthetic(spec);
    const PointCloud b = make_synthetic(spec);
    CHECK(a.coords == b.coords);
    CHECK(a.class_id == k);
  }
}

TEST_CASE("make_synthetic cube noise stays near the surface") {
  const double sigma = 0.02;
  const PointCloud pc = make_synthetic({ShapeKind::cube, 256, sigma, 7});
  const double half = 1.0 / std::sqrt(3.0);
  std::size_t near = 0;
  for (const auto& p : pc.coords) near += std::abs(cube_surface_distance(p, half)) < 5 * sigma;
  CHECK(static_cast<double>(near) >= 0.99 * 256);
}

TEST_CASE("make_synthetic shapes have unit max radius before noise") {
  for (int k = 0; k < kNumShapeKinds; ++k) {
    const PointCloud pc = make_synthetic({static_cast<ShapeKind>(k), 2000, 0.0, 3});
    double r = 0.0;
    for (const auto& p : pc.coords) r = std::max(r, norm(p));
    CHECK(r <= 1.0 + 1e-12);
    CHECK(r > 0.9);
  }
}

TEST_CASE("make_synthetic rejects invalid specs") {
  CHECK_THROWS(make_synthetic({ShapeKind::torus, 7, 0.0, 0}));
  CHECK_THROWS(make_synthetic({ShapeKind::torus, 64, -0.1, 0}));
}

TEST_CASE("normalize_unit_sphere examples") {
  PointCloud pc;
  pc.coords = {{2, 0, 0}, {4, 0, 0}};
  const PointCloud n = normalize_unit_sphere(pc);
  CHECK(n.coords[0][0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(n.coords[1][0] == doctest::Approx(1.0).epsilon(1e-12));

  PointCloud one;
  one.coords = {{5, 5, 5}};
  CHECK(normalize_unit_sphere(one).coords[0] == Point3{0, 0, 0});

  PointCloud same;
  same.coords = {{0.3, 0.1, 0.7}, {0.3, 0.1, 0.7}, {0.3, 0.1, 0.7}};
  for (const auto& p : normalize_unit_sphere(same).coords) CHECK(p == Point3{0, 0, 0});
}

TEST_CASE("normalize_unit_sphere centroid, radius, idempotence, covariance") {
  std::mt19937_64 rng(12);
  PointCloud pc;
  pc.coords = testing::random_cloud(300, rng, -3, 8);
  const PointCloud n = normalize_unit_sphere(pc);
  Point3 c{0, 0, 0};
  double r = 0;
  for (const auto& p : n.coords) {
    for (int a = 0; a < 3; ++a) c[a] += p[a] / 300.0;
    r = std::max(r, norm(p));
  }
  for (double v : c) CHECK(std::abs(v) < 1e-9);
  CHECK(std::abs(r - 1.0) < 1e-9);

  const PointCloud twice = normalize_unit_sphere(n);
  for (std::size_t i = 0; i < n.size(); ++i) {
    for (int a = 0; a < 3; ++a) CHECK(std::abs(twice.coords[i][a] - n.coords[i][a]) < 1e-9);
  }

  PointCloud moved = pc;
  for (auto& p : moved.coords) {
    for (int a = 0; a < 3; ++a) p[a] = 2.5 * p[a] + (a + 1) * 10.0;
  }
  const PointCloud nm = normalize_unit_sphere(moved);
  for (std::size_t i = 0; i < n.size(); ++i) {
    for (int a = 0; a < 3; ++a) CHECK(std::abs(nm.coords[i][a] - n.coords[i][a]) < 1e-9);
  }
}

TEST_CASE("validate rejects broken clouds") {
  PointCloud pc;
  CHECK_THROWS(validate(pc));
  pc.coords = {{0, 0, std::nan("")}};
  CHECK_THROWS(validate(pc));
  pc.coords = {{0, 0, 0}};
  pc.labels = {1, 2};
  CHECK_THROWS(validate(pc));
}
