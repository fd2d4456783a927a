// hydra: command-line front end for serialization, benchmarks, toy training,
// evaluation, ablations and gradient checks.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hydra/config.hpp"
#include "hydra/gradsuite.hpp"
#include "hydra/model.hpp"
#include "hydra/pointio.hpp"
#include "hydra/spacefill.hpp"
#include "hydra/sscan.hpp"
#include "hydra/train.hpp"

namespace {

using namespace hydra;
using Clock = std::chrono::steady_clock;

// Output sink: stdout unless --out names a file.
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw std::runtime_error("cannot write " + path);
    }
  }
  std::ostream& os() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

struct RunFlags {
  std::string preset = "toy";
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::size_t> epochs;
  std::string out;
};

void add_run_flags(CLI::App* app, RunFlags& f) {
  app->add_option("--preset", f.preset, "Base configuration")->check(CLI::IsMember({"toy", "tiny"}));
  app->add_option("--config", f.config_path, "key = value config file")->check(CLI::ExistingFile);
  app->add_option("--set", f.sets, "Override one key (key=value), repeatable");
  app->add_option("--seed", f.seed, "Seed for weights, data and batch order (default 0)");
  app->add_option("--threads", f.threads, "Worker threads");
  app->add_option("--epochs", f.epochs, "Training epochs");
  app->add_option("--out", f.out, "Output path (default stdout)");
}

RunConfig resolve(const RunFlags& f) {
  RunConfig cfg = preset(f.preset);
  if (!f.config_path.empty()) apply_config_file(cfg, f.config_path);
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (f.seed) {
    cfg.train.seed = *f.seed;
    cfg.data.seed = *f.seed;
  }
  if (f.threads) cfg.train.threads = *f.threads;
  if (f.epochs) cfg.train.epochs = *f.epochs;
  cfg.model.validate();
  return cfg;
}

void print_resolved(const std::string& cmd, const std::string& body) {
  std::cerr << "# " << cmd << " resolved config\n";
  std::istringstream in(body);
  for (std::string line; std::getline(in, line);) std::cerr << "#   " << line << '\n';
}

// --- serialize ---------------------------------------------------------------

struct SerializeFlags {
  std::string curve = "hilbert";
  std::string priority = "xyz";
  int bits = kDefaultCurveBits;
  std::string input;
  std::string out;
};

int run_serialize(const SerializeFlags& f) {
  const CurveVariant v{parse_curve(f.curve), parse_axis_order(f.priority)};
  std::ostringstream cfg;
  cfg << "curve = " << f.curve << "\npriority = " << f.priority << "\nbits = " << f.bits << "\ninput = " << f.input
      << '\n';
  print_resolved("serialize", cfg.str());
  const PointCloud pc = load_xyz(f.input);
  const Serialization s = serialize(pc, v, f.bits);
  Sink sink(f.out);
  for (auto i : s.perm) sink.os() << i << '\n';
  return 0;
}

// --- locality-bench ----------------------------------------------------------

struct LocalityFlags {
  std::size_t n = 4096;
  std::size_t trials = 100;
  std::uint64_t seed = 0;
  int bits = kDefaultCurveBits;
  std::string out;
};

int run_locality(const LocalityFlags& f) {
  std::ostringstream cfg;
  cfg << "n = " << f.n << "\ntrials = " << f.trials << "\nseed = " << f.seed << "\nbits = " << f.bits << '\n';
  print_resolved("locality-bench", cfg.str());
  std::vector<CurveVariant> variants;
  for (Curve c : {Curve::hilbert, Curve::zorder}) {
    for (AxisOrder o : kAllAxisOrders) variants.push_back({c, o});
  }
  Sink sink(f.out);
  auto& os = sink.os();
  os << "trial";
  for (const auto& v : variants) os << '\t' << variant_name(v);
  os << "\trandom\thilbert_better\n";
  std::size_t wins = 0;
  for (std::size_t t = 0; t < f.trials; ++t) {
    std::mt19937_64 rng(f.seed * 1000003ULL + t);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Point3> pts(f.n);
    for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
    os << t << std::setprecision(8);
    double hil = 0, zor = 0;
    for (const auto& v : variants) {
      const double d = mean_neighbor_distance(pts, serialize(pts, v, f.bits).perm);
      if (v == CurveVariant{Curve::hilbert, AxisOrder::xyz}) hil = d;
      if (v == CurveVariant{Curve::zorder, AxisOrder::xyz}) zor = d;
      os << '\t' << d;
    }
    const auto rnd = random_serialization(f.n, rng());
    os << '\t' << mean_neighbor_distance(pts, rnd.perm) << '\t' << (hil < zor ? 1 : 0) << '\n';
    wins += hil < zor ? 1 : 0;
  }
  std::cerr << "hilbert_xyz < zorder_xyz in " << wins << "/" << f.trials << " trials\n";
  return 0;
}

// --- scan-bench --------------------------------------------------------------

struct ScanBenchFlags {
  std::size_t len = 4096;
  std::size_t dim = 8;
  std::size_t state = 16;
  std::size_t chunk = 64;
  std::size_t threads = 1;
  std::size_t repeats = 5;
  std::uint64_t seed = 0;
  std::string out;
};

int run_scan_bench(const ScanBenchFlags& f) {
  if (f.len == 0 || f.dim == 0 || f.state == 0 || f.chunk == 0 || f.threads == 0 || f.repeats == 0) {
    throw CLI::ValidationError("scan-bench", "sizes, chunk, threads and repeats must be positive");
  }
  std::ostringstream cfg;
  cfg << "len = " << f.len << "\ndim = " << f.dim << "\nstate = " << f.state << "\nchunk = " << f.chunk
      << "\nthreads = " << f.threads << "\nrepeats = " << f.repeats << "\nseed = " << f.seed << '\n';
  print_resolved("scan-bench", cfg.str());
  std::mt19937_64 rng(f.seed);
  std::uniform_real_distribution<double> ua(0.5, 0.999), ub(-1.0, 1.0);
  ScanParams p;
  p.length = f.len;
  p.channels = f.dim;
  p.state = f.state;
  p.a_bar.resize(f.len * f.dim * f.state);
  p.bx.resize(p.a_bar.size());
  p.c.resize(f.len * f.state);
  for (auto& v : p.a_bar) v = ua(rng);
  for (auto& v : p.bx) v = ub(rng);
  for (auto& v : p.c) v = ub(rng);

  auto time_it = [&](auto&& fn) {
    double best = 1e300;
    std::vector<double> y;
    for (std::size_t r = 0; r < f.repeats; ++r) {
      const auto t0 = Clock::now();
      y = fn();
      best = std::min(best, std::chrono::duration<double>(Clock::now() - t0).count());
    }
    return std::pair{best, y};
  };
  const auto [seq_t, seq_y] = time_it([&] { return selective_scan_seq(p); });
  const auto [par_t, par_y] = time_it([&] { return selective_scan_par(p, f.chunk, f.threads); });
  double max_dev = 0.0;
  for (std::size_t i = 0; i < seq_y.size(); ++i) {
    max_dev = std::max(max_dev, std::abs(par_y[i] - seq_y[i]) / std::max(std::abs(seq_y[i]), 1e-300));
  }
  Sink sink(f.out);
  sink.os() << "len\tdim\tstate\tchunk\tthreads\tseq_tokens_per_s\tpar_tokens_per_s\tmax_rel_dev\n"
            << f.len << '\t' << f.dim << '\t' << f.state << '\t' << f.chunk << '\t' << f.threads << '\t'
            << std::setprecision(6) << static_cast<double>(f.len) / seq_t << '\t'
            << static_cast<double>(f.len) / par_t << '\t' << std::setprecision(3) << max_dev << '\n';
  return 0;
}

// --- train-toy / eval / ablate --------------------------------------------------

int run_train(const RunFlags& f, const std::string& checkpoint, std::optional<double> target) {
  RunConfig cfg = resolve(f);
  if (target) cfg.train.target_acc = *target;
  print_resolved("train-toy", format_config(cfg));
  const Dataset data = make_toy_dataset(cfg.data);
  Sink sink(f.out);
  const auto t0 = Clock::now();
  const TrainResult r = train_toy(data, cfg.model, cfg.train, [&](const EpochMetrics& m) {
    sink.os() << to_jsonl(m) << std::endl;
  });
  std::cerr << "best test_acc " << r.best_test_acc << " at epoch " << r.best_epoch << " ("
            << std::chrono::duration<double>(Clock::now() - t0).count() << " s)\n";
  if (!checkpoint.empty()) save_checkpoint(checkpoint, cfg.model, r.best_weights);
  return 0;
}

int run_eval(const RunFlags& f, const std::string& checkpoint) {
  const RunConfig cfg = resolve(f);
  print_resolved("eval", format_config(cfg) + "checkpoint = " + checkpoint + '\n');
  ModelWeights w = init_model(cfg.model, cfg.train.seed);
  load_checkpoint(checkpoint, cfg.model, w);
  const Dataset data = make_toy_dataset(cfg.data);
  const EvalResult r = evaluate(data.test, cfg.model, w, cfg.train.threads);
  Sink sink(f.out);
  sink.os() << R"({"test_acc":)" << r.accuracy << R"(,"loss":)" << std::setprecision(10) << r.loss << "}\n";
  return 0;
}

int run_ablate(const RunFlags& f, const std::string& grid, std::size_t num_seeds) {
  const RunConfig cfg = resolve(f);
  print_resolved("ablate", format_config(cfg) + "grid = " + grid + "\nseeds = " + std::to_string(num_seeds) + '\n');
  const auto cells = grid == "full" ? full_ablation_grid() : echo_ablation_grid();
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < num_seeds; ++i) seeds.push_back(cfg.train.seed + i);
  const Dataset data = make_toy_dataset(cfg.data);
  Sink sink(f.out);
  sink.os() << ablation_tsv_header() << '\n';
  const auto rows = run_ablation(cells, seeds, data, cfg.model, cfg.train, [&](const AblationRow& row) {
    sink.os() << to_tsv(row) << std::endl;
  });
  for (const auto& r : rows) {
    if (r.failed) return 2;
  }
  return 0;
}

// --- gradcheck ---------------------------------------------------------------

int run_gradcheck(const RunFlags& f, const std::string& only) {
  RunFlags g = f;
  const RunConfig cfg = resolve(g);
  const std::uint64_t seed = f.seed.value_or(0);
  print_resolved("gradcheck", format_config(cfg) + "only = " + only + '\n');
  Sink sink(f.out);
  sink.os() << "case\tinputs\tmax_rel_error\tstatus\n";
  bool ok = true;
  std::size_t ran = 0;
  for (const auto& c : gradient_suite(cfg, seed)) {
    if (!only.empty() && c.name.find(only) == std::string::npos) continue;
    const auto r = run_grad_case(c);
    ++ran;
    ok = ok && r.report.passed;
    sink.os() << r.name << '\t' << r.report.entries.size() << '\t' << std::setprecision(3)
              << r.report.max_rel_error() << '\t' << (r.report.passed ? "pass" : "FAIL");
    if (!r.report.diagnostic.empty()) sink.os() << " (" << r.report.diagnostic << ")";
    for (const auto& e : r.report.entries) {
      if (!e.passed) sink.os() << ' ' << e.name << '=' << e.max_rel_error;
    }
    sink.os() << std::endl;
  }
  if (ran == 0) throw CLI::ValidationError("--only", "no gradient case matches '" + only + "'");
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HydraMamba point-cloud toolkit"};
  app.require_subcommand(1);

  SerializeFlags ser;
  auto* serialize_cmd = app.add_subcommand("serialize", "Print the curve-order permutation of an .xyz cloud");
  serialize_cmd->add_option("--curve", ser.curve)->check(CLI::IsMember({"hilbert", "zorder"}));
  serialize_cmd->add_option("--priority", ser.priority)->check(CLI::IsMember({"xyz", "yxz", "xzy", "zxy", "yzx", "zyx"}));
  serialize_cmd->add_option("--bits", ser.bits)->check(CLI::Range(1, kMaxCurveBits));
  serialize_cmd->add_option("input", ser.input, "Input .xyz file")->required()->check(CLI::ExistingFile);
  serialize_cmd->add_option("--out", ser.out);

  LocalityFlags loc;
  auto* locality_cmd = app.add_subcommand("locality-bench", "Mean consecutive-neighbor distance per curve variant");
  locality_cmd->add_option("--n", loc.n)->check(CLI::PositiveNumber);
  locality_cmd->add_option("--trials", loc.trials)->check(CLI::PositiveNumber);
  locality_cmd->add_option("--seed", loc.seed);
  locality_cmd->add_option("--bits", loc.bits)->check(CLI::Range(1, kMaxCurveBits));
  locality_cmd->add_option("--out", loc.out);

  ScanBenchFlags sb;
  auto* scan_cmd = app.add_subcommand("scan-bench", "Sequential vs chunked parallel selective scan");
  scan_cmd->add_option("--len", sb.len);
  scan_cmd->add_option("--dim", sb.dim);
  scan_cmd->add_option("--state", sb.state);
  scan_cmd->add_option("--chunk", sb.chunk);
  scan_cmd->add_option("--threads", sb.threads);
  scan_cmd->add_option("--repeats", sb.repeats);
  scan_cmd->add_option("--seed", sb.seed);
  scan_cmd->add_option("--out", sb.out);

  RunFlags train_flags;
  std::string train_ckpt;
  std::optional<double> target;
  auto* train_cmd = app.add_subcommand("train-toy", "Train on synthetic shapes, one JSON line per epoch");
  add_run_flags(train_cmd, train_flags);
  train_cmd->add_option("--checkpoint", train_ckpt, "Write the best weights here");
  train_cmd->add_option("--target-acc", target, "Stop once test accuracy reaches this");

  RunFlags eval_flags;
  std::string eval_ckpt;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the synthetic test split");
  add_run_flags(eval_cmd, eval_flags);
  eval_cmd->add_option("--checkpoint", eval_ckpt)->required()->check(CLI::ExistingFile);

  RunFlags ablate_flags;
  std::string grid = "echo";
  std::size_t num_seeds = 3;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train every ablation cell and emit a TSV table");
  add_run_flags(ablate_cmd, ablate_flags);
  ablate_cmd->add_option("--grid", grid)->check(CLI::IsMember({"echo", "full"}));
  ablate_cmd->add_option("--seeds", num_seeds)->check(CLI::PositiveNumber);

  RunFlags grad_flags;
  grad_flags.preset = "tiny";
  std::string only;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference checks for every differentiable op");
  add_run_flags(grad_cmd, grad_flags);
  grad_cmd->add_option("--only", only, "Run cases whose name contains this");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*serialize_cmd) return run_serialize(ser);
    if (*locality_cmd) return run_locality(loc);
    if (*scan_cmd) return run_scan_bench(sb);
    if (*train_cmd) return run_train(train_flags, train_ckpt, target);
    if (*eval_cmd) return run_eval(eval_flags, eval_ckpt);
    if (*ablate_cmd) return run_ablate(ablate_flags, grid, num_seeds);
    if (*grad_cmd) return run_gradcheck(grad_flags, only);
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
