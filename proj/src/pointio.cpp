#include "hydra/pointio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

namespace hydra {

void validate(const PointCloud& pc) {
  if (pc.coords.empty()) throw std::invalid_argument("point cloud is empty");
  for (const auto& p : pc.coords) {
    for (double v : p) {
      if (!std::isfinite(v)) throw std::invalid_argument("point cloud has non-finite coordinates");
    }
  }
  if (pc.has_features() && pc.features.size() != pc.size() * pc.feature_dim) {
    throw std::invalid_argument("feature rows do not match point count");
  }
  if (!pc.has_features() && !pc.features.empty()) {
    throw std::invalid_argument("features present but feature_dim is 0");
  }
  if (!pc.labels.empty() && pc.labels.size() != pc.size()) {
    throw std::invalid_argument("label count does not match point count");
  }
}

namespace {

bool parse_double(std::string_view tok, double& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

}  // namespace

PointCloud read_xyz(std::istream& in) {
  PointCloud pc;
  std::string line;
  std::size_t lineno = 0;
  std::size_t extra = 0;
  bool first = true;
  std::vector<std::string> tokens;
  while (std::getline(in, line)) {
    ++lineno;
    const auto start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos) continue;
    if (line[start] == '#') continue;

    tokens.clear();
    std::istringstream ls(line);
    for (std::string tok; ls >> tok;) tokens.push_back(tok);
    if (tokens.size() < 3) {
      throw ParseError(lineno, "expected at least 3 coordinates, found " +
                                   std::to_string(tokens.size()) + " fields");
    }
    std::vector<double> vals(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (!parse_double(tokens[i], vals[i])) {
        throw ParseError(lineno, "cannot parse '" + tokens[i] + "' as a finite number");
      }
    }
    const std::size_t c = tokens.size() - 3;
    if (first) {
      extra = c;
      first = false;
    } else if (c != extra) {
      throw FormatError("line " + std::to_string(lineno) + ": " + std::to_string(c) +
                        " feature columns, earlier lines have " + std::to_string(extra));
    }
    pc.coords.push_back({vals[0], vals[1], vals[2]});
    pc.features.insert(pc.features.end(), vals.begin() + 3, vals.end());
  }
  if (pc.coords.empty()) throw EmptyInputError("no points in input");
  pc.feature_dim = extra;
  return pc;
}

PointCloud load_xyz(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_xyz(in);
}

void write_xyz(std::ostream& out, const PointCloud& pc) {
  const auto old_prec = out.precision(17);
  for (std::size_t i = 0; i < pc.size(); ++i) {
    out << pc.coords[i][0] << ' ' << pc.coords[i][1] << ' ' << pc.coords[i][2];
    for (std::size_t j = 0; j < pc.feature_dim; ++j) out << ' ' << pc.features[i * pc.feature_dim + j];
    out << '\n';
  }
  out.precision(old_prec);
}

void save_xyz(const std::filesystem::path& path, const PointCloud& pc) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_xyz(out, pc);
}

const char* shape_kind_name(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::sphere: return "sphere";
    case ShapeKind::cube: return "cube";
    case ShapeKind::torus: return "torus";
    case ShapeKind::two_planes: return "two-planes";
  }
  return "unknown";
}

namespace {

// Every ideal surface is centered at the origin with max radius exactly 1.
constexpr double kTorusMajor = 0.7;
constexpr double kTorusMinor = 0.3;
constexpr double kPlaneOffset = 0.4;

Point3 sample_surface(ShapeKind kind, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  switch (kind) {
    case ShapeKind::sphere: {
      std::normal_distribution<double> g(0.0, 1.0);
      for (;;) {
        Point3 p{g(rng), g(rng), g(rng)};
        const double r = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
        if (r < 1e-12) continue;
        return {p[0] / r, p[1] / r, p[2] / r};
      }
    }
    case ShapeKind::cube: {
      const double s = 1.0 / std::sqrt(3.0);
      const int face = static_cast<int>(u01(rng) * 6.0) % 6;
      Point3 p{u(rng) * s, u(rng) * s, u(rng) * s};
      p[face / 2] = (face % 2 == 0) ? s : -s;
      return p;
    }
    case ShapeKind::torus: {
      const double two_pi = 2.0 * std::numbers::pi;
      for (;;) {
        const double a = u01(rng) * two_pi;
        const double b = u01(rng) * two_pi;
        // Area element is proportional to (R + r cos b).
        const double w = (kTorusMajor + kTorusMinor * std::cos(b)) / (kTorusMajor + kTorusMinor);
        if (u01(rng) > w) continue;
        const double ring = kTorusMajor + kTorusMinor * std::cos(b);
        return {ring * std::cos(a), ring * std::sin(a), kTorusMinor * std::sin(b)};
      }
    }
    case ShapeKind::two_planes: {
      const double half = std::sqrt((1.0 - kPlaneOffset * kPlaneOffset) / 2.0);
      const double z = u01(rng) < 0.5 ? kPlaneOffset : -kPlaneOffset;
      return {u(rng) * half, u(rng) * half, z};
    }
  }
  return {0, 0, 0};
}

}  // namespace

PointCloud make_synthetic(const SyntheticSpec& spec) {
  if (spec.n_points < 8) throw std::invalid_argument("synthetic cloud needs n_points >= 8");
  if (!(spec.noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be >= 0");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  PointCloud pc;
  pc.coords.reserve(spec.n_points);
  for (std::size_t i = 0; i < spec.n_points; ++i) {
    Point3 p = sample_surface(spec.shape_kind, rng);
    if (spec.noise_sigma > 0) {
      for (auto& v : p) v += spec.noise_sigma * noise(rng);
    }
    pc.coords.push_back(p);
  }
  pc.class_id = static_cast<int>(spec.shape_kind);
  return pc;
}

PointCloud normalize_unit_sphere(const PointCloud& pc) {
  validate(pc);
  PointCloud out = pc;
  const bool coincident = std::all_of(pc.coords.begin(), pc.coords.end(),
                                      [&](const Point3& p) { return p == pc.coords.front(); });
  if (coincident) {
    for (auto& p : out.coords) p = {0, 0, 0};
    return out;
  }
  const double n = static_cast<double>(pc.size());
  Point3 c{0, 0, 0};
  for (const auto& p : pc.coords) {
    for (int k = 0; k < 3; ++k) c[k] += p[k];
  }
  for (auto& v : c) v /= n;
  double max_norm = 0;
  for (auto& p : out.coords) {
    for (int k = 0; k < 3; ++k) p[k] -= c[k];
    max_norm = std::max(max_norm, std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]));
  }
  for (auto& p : out.coords) {
    for (auto& v : p) v /= max_norm;
  }
  return out;
}

}  // namespace hydra
