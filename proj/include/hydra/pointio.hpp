#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hydra {

using Point3 = std::array<double, 3>;

struct PointCloud {
  std::vector<Point3> coords;
  // Row-major n x feature_dim; empty when the cloud carries no features.
  std::vector<double> features;
  std::size_t feature_dim = 0;
  std::vector<int> labels;
  std::optional<int> class_id;

  std::size_t size() const { return coords.size(); }
  bool has_features() const { return feature_dim > 0; }
};

// Throws std::invalid_argument when an invariant does not hold.
void validate(const PointCloud& pc);

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ASCII "x y z [f1 ... fc]" per line, '#' starts a comment line.
PointCloud read_xyz(std::istream& in);
PointCloud load_xyz(const std::filesystem::path& path);
// 17 significant digits, so doubles round-trip exactly.
void write_xyz(std::ostream& out, const PointCloud& pc);
void save_xyz(const std::filesystem::path& path, const PointCloud& pc);

enum class ShapeKind { sphere = 0, cube = 1, torus = 2, two_planes = 3 };
inline constexpr int kNumShapeKinds = 4;

const char* shape_kind_name(ShapeKind kind);

struct SyntheticSpec {
  ShapeKind shape_kind = ShapeKind::sphere;
  std::size_t n_points = 256;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

PointCloud make_synthetic(const SyntheticSpec& spec);

// Centroid to the origin, max norm to 1. A cloud whose points all coincide
// maps to all zeros.
PointCloud normalize_unit_sphere(const PointCloud& pc);

}  // namespace hydra
