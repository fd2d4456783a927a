#include <doctest.h>

#include <filesystem>
#include <random>
#include <sstream>

#include "hydra/config.hpp"
#include "hydra/gradsuite.hpp"
#include "hydra/model.hpp"
#include "hydra/ops.hpp"
#include "hydra/tape.hpp"
#include "hydra/train.hpp"
#include "support.hpp"

using namespace hydra;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

PointCloud cloud(std::size_t n, std::uint64_t seed, ShapeKind kind = ShapeKind::torus) {
  PointCloud pc = normalize_unit_sphere(make_synthetic({kind, n, 0.01, seed}));
  pc.class_id = static_cast<int>(kind);
  return pc;
}

ModelConfig tiny() { return preset("tiny").model; }

ModelConfig tiny_segmentation(Transition t) {
  ModelConfig cfg = tiny();
  cfg.task = Task::segmentation;
  cfg.num_classes = 3;
  cfg.transition = t;
  if (t == Transition::grid) cfg.stages[1].down = 0.5;
  return cfg;
}

}  // namespace

TEST_CASE("recognition logits have one entry per class") {
  const ModelConfig cfg = tiny();
  const ModelWeights w = init_model(cfg, 1);
  for (std::size_t n : {8, 32, 77}) {
    CHECK(forward(cloud(n, n), cfg, w, {}).shape() == Shape{cfg.num_classes});
  }
}

TEST_CASE("segmentation logits keep every input point") {
  for (Transition t : {Transition::fps, Transition::grid}) {
    const ModelConfig cfg = tiny_segmentation(t);
    const ModelWeights w = init_model(cfg, 2);
    for (std::size_t n : {9, 32, 61}) {
      ForwardTrace trace;
      const Tensor out = forward(cloud(n, n + 1), cfg, w, {}, &trace);
      CHECK(out.shape() == Shape{n, 3});
      REQUIRE(trace.stage_points.size() == 2);
      CHECK(trace.stage_points[0] == n);
      CHECK(trace.stage_points[1] <= n);
      if (t == Transition::fps) CHECK(trace.stage_points[1] == (n + 1) / 2);
      CHECK(trace.block_variants.size() == cfg.total_blocks());
    }
  }
}

TEST_CASE("every block gets a variant from the shuffle plan") {
  ModelConfig cfg = preset("toy").model;
  const ModelWeights w = init_model(cfg, 3);
  ForwardTrace a, b, c;
  const PointCloud pc = cloud(64, 3);
  forward(pc, cfg, w, {.plan_seed = 10}, &a);
  forward(pc, cfg, w, {.plan_seed = 10}, &b);
  CHECK(a.block_variants == b.block_variants);
  bool differs = false;
  for (std::uint64_t s = 11; s < 20 && !differs; ++s) {
    forward(pc, cfg, w, {.plan_seed = s}, &c);
    differs = c.block_variants != a.block_variants;
  }
  CHECK(differs);
}

TEST_CASE("one moved point changes the recognition logits") {
  const ModelConfig cfg = tiny();
  const ModelWeights w = init_model(cfg, 4);
  const PointCloud pc = cloud(40, 4);
  const Tensor base = forward(pc, cfg, w, {});
  for (std::size_t i : {0, 17, 39}) {
    PointCloud moved = pc;
    moved.coords[i][1] += 0.05;
    CHECK(values(forward(moved, cfg, w, {})) != values(base));
  }
}

TEST_CASE("evaluation is bit-exact for a fixed plan seed") {
  const ModelConfig cfg = preset("toy").model;
  const ModelWeights a = init_model(cfg, 5), b = init_model(cfg, 5);
  const PointCloud pc = cloud(100, 5);
  const auto first = values(forward(pc, cfg, a, {.plan_seed = 9}));
  CHECK(values(forward(pc, cfg, b, {.plan_seed = 9})) == first);
  // Shift the heap between calls so buffers land at different addresses.
  std::vector<std::vector<double>> clutter;
  for (std::size_t i = 1; i < 12; ++i) {
    clutter.emplace_back(i * 3);
    CHECK(values(forward(pc, cfg, a, {.plan_seed = 9})) == first);
  }
}

TEST_CASE("fuzzed configurations keep stage shape contracts") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 25; ++trial) {
    ModelConfig cfg;
    cfg.task = rng() % 2 ? Task::segmentation : Task::recognition;
    cfg.transition = rng() % 2 ? Transition::grid : Transition::fps;
    cfg.num_classes = 2 + rng() % 4;
    cfg.stages.clear();
    const std::size_t stages = 1 + rng() % 3;
    const std::size_t head_dim = 2 + rng() % 3;
    for (std::size_t s = 0; s < stages; ++s) {
      const std::size_t heads = 1 + rng() % 3;
      const double down = cfg.transition == Transition::fps ? 1.0 + static_cast<double>(rng() % 3)
                                                            : 0.2 * static_cast<double>(1 + rng() % 3);
      cfg.stages.push_back({1, heads * head_dim, heads, s == 0 ? 1.0 : down});
    }
    cfg.state_dim = 2 + rng() % 3;
    cfg.conv_kernel = 3;
    cfg.ffn_ratio = 1;
    cfg.conv_kind = rng() % 2 ? ConvKind::traditional : ConvKind::depthwise;
    cfg.bidirectional = rng() % 2;
    cfg.conv_branch = rng() % 2;
    REQUIRE_NOTHROW(cfg.validate());
    const std::size_t n = 8 + rng() % 40;
    const ModelWeights w = init_model(cfg, trial);
    ForwardTrace trace;
    const Tensor out = forward(cloud(n, trial), cfg, w, {.plan_seed = static_cast<std::uint64_t>(trial)}, &trace);
    INFO("trial ", trial);
    if (cfg.task == Task::recognition) CHECK(out.shape() == Shape{cfg.num_classes});
    else CHECK(out.shape() == Shape{n, cfg.num_classes});
    CHECK(trace.stage_points.size() == stages);
    for (std::size_t s = 1; s < stages; ++s) CHECK(trace.stage_points[s] <= trace.stage_points[s - 1]);
    for (double v : out.data()) CHECK(std::isfinite(v));
  }
}

TEST_CASE("invalid model configurations are rejected") {
  ModelConfig cfg = tiny();
  cfg.stages[0].heads = 5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny();
  cfg.num_classes = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny();
  cfg.stages.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny();
  cfg.curve_bits = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny();
  cfg.in_features = 2;
  CHECK_THROWS(forward(cloud(10, 1), cfg, init_model(cfg, 1), {}));
}

TEST_CASE("no parameter is on a dead path") {
  for (const ModelConfig& cfg : {tiny(), tiny_segmentation(Transition::fps), tiny_segmentation(Transition::grid)}) {
    const ModelWeights w = init_model(cfg, 7);
    PointCloud pc = cloud(32, 7);
    pc.labels.assign(32, 0);
    for (std::size_t i = 0; i < 32; ++i) pc.labels[i] = static_cast<int>(i % 3);
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = cfg.task == Task::recognition ? ops::cross_entropy(forward(pc, cfg, w, {}), 1)
                                           : ops::cross_entropy(forward(pc, cfg, w, {}), pc.labels);
    }
    const auto tensors = w.tensors();
    const Gradients g = tape.grad(loss, tensors);
    for (const auto& p : w.parameters()) {
      double mag = 0;
      const Tensor grad = g.of(p.tensor);
      for (double v : grad.data()) mag += std::abs(v);
      INFO(p.name);
      CHECK(mag > 0.0);
    }
  }
}

TEST_CASE("single-sample loss drops within ten steps for nearly every seed") {
  RunConfig rc = preset("tiny");
  int decreased = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    rc.train.seed = seed;
    const auto r = overfit_single(cloud(32, seed, static_cast<ShapeKind>(seed % 4)), rc.model, rc.train, 10, false);
    REQUIRE(r.losses.size() == 10);
    if (r.losses.back() < r.losses.front()) ++decreased;
  }
  CHECK(decreased >= 95);
}

TEST_CASE("single-sample overfit reaches perfect accuracy") {
  RunConfig rc = preset("tiny");
  rc.model.task = Task::segmentation;
  rc.model.num_classes = 3;
  PointCloud pc = cloud(32, 8);
  for (std::size_t i = 0; i < 32; ++i) pc.labels.push_back(pc.coords[i][0] > 0 ? 1 : (pc.coords[i][2] > 0 ? 2 : 0));
  const auto r = overfit_single(pc, rc.model, rc.train, 200);
  CHECK(r.reached);
  CHECK(r.steps_to_perfect <= 200);
}

TEST_CASE("training histories are reproducible") {
  const RunConfig rc = preset("tiny");
  const Dataset data = make_toy_dataset(rc.data);
  const auto a = train_toy(data, rc.model, rc.train);
  const auto b = train_toy(data, rc.model, rc.train);
  CHECK(a.history.size() == rc.train.epochs);
  CHECK(a.history == b.history);
  TrainConfig threaded = rc.train;
  threaded.threads = 3;
  CHECK(train_toy(data, rc.model, threaded).history == a.history);
  TrainConfig other = rc.train;
  other.seed = 1;
  CHECK(train_toy(data, rc.model, other).history != a.history);
}

TEST_CASE("early stopping and best weights") {
  RunConfig rc = preset("tiny");
  rc.train.target_acc = 0.01;
  const Dataset data = make_toy_dataset(rc.data);
  const auto r = train_toy(data, rc.model, rc.train);
  CHECK(r.history.size() == 1);
  CHECK(r.best_epoch == r.history[0].epoch);
  CHECK(evaluate(data.test, rc.model, r.best_weights).accuracy == r.best_test_acc);
}

TEST_CASE("toy dataset is balanced and normalized") {
  ToyDataConfig dc;
  dc.train_size = 12;
  dc.test_size = 8;
  dc.points = 50;
  dc.rotate = true;
  const Dataset d = make_toy_dataset(dc);
  REQUIRE(d.train.size() == 12);
  std::array<int, 4> counts{};
  for (const auto& pc : d.train) {
    counts[*pc.class_id]++;
    double r = 0;
    for (const auto& p : pc.coords) r = std::max(r, std::hypot(p[0], p[1], p[2]));
    CHECK(r == doctest::Approx(1.0));
  }
  CHECK(counts == std::array<int, 4>{3, 3, 3, 3});
  CHECK(d.train[0].coords != d.test[0].coords);
}

TEST_CASE("cosine schedule") {
  CHECK(cosine_lr(1e-3, 0, 11) == 1e-3);
  CHECK(cosine_lr(1e-3, 5, 11) == doctest::Approx(5e-4));
  CHECK(cosine_lr(1e-3, 10, 11) == doctest::Approx(0.0));
}

TEST_CASE("adamw first step moves each weight by lr against the gradient sign") {
  Tensor w(Shape{2, 2}, std::vector<double>{1, -1, 2, 0.5});
  AdamW opt({{"w", w}}, 0.1, 0.0);
  opt.step({{3.0, -0.5, 1e-3, -7.0}}, 0.1);
  const std::vector<double> want{0.9, -0.9, 1.9, 0.6};
  for (std::size_t i = 0; i < 4; ++i) CHECK(w[i] == doctest::Approx(want[i]).epsilon(1e-6));
}

TEST_CASE("adamw decays matrices but not vectors") {
  Tensor m(Shape{1, 1}, 2.0), v(Shape{1}, 2.0);
  AdamW opt({{"m", m}, {"v", v}}, 0.1, 0.5);
  opt.step({{0.0}, {0.0}}, 0.1);
  CHECK(m[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
  CHECK(v[0] == 2.0);
}

TEST_CASE("checkpoint round trip") {
  const ModelConfig cfg = tiny();
  const ModelWeights a = init_model(cfg, 9);
  const auto path = std::filesystem::temp_directory_path() / "hydra_test_checkpoint.json";
  save_checkpoint(path, cfg, a);
  ModelWeights b = init_model(cfg, 10);
  load_checkpoint(path, cfg, b);
  const PointCloud pc = cloud(32, 9);
  CHECK(values(forward(pc, cfg, a, {})) == values(forward(pc, cfg, b, {})));

  ModelConfig bigger = cfg;
  bigger.stages[0].blocks = 2;
  ModelWeights c = init_model(bigger, 1);
  CHECK_THROWS(load_checkpoint(path, bigger, c));
  std::filesystem::remove(path);
}

TEST_CASE("config text") {
  RunConfig rc = preset("toy");
  apply_config_text(rc, "# comment\nepochs = 7\nstage_dims = 24,24,24\n\nserialization = sequential\n");
  CHECK(rc.train.epochs == 7);
  REQUIRE(rc.model.stages.size() == 3);
  CHECK(rc.model.stages[2].dim == 24);
  CHECK(rc.model.serialization == SerializationMode::sequential);

  RunConfig back = preset("toy");
  apply_config_text(back, format_config(rc));
  CHECK(format_config(back) == format_config(rc));

  try {
    apply_config_text(rc, "epochs = 3\nwidth = 9\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    CHECK(std::string(e.what()).find("width") != std::string::npos);
  }
  CHECK_THROWS_AS(apply_config_text(rc, "epochs = many\n"), ConfigError);
  CHECK_THROWS_AS(apply_config_text(rc, "epochs\n"), ConfigError);
  CHECK_THROWS_AS(preset("huge"), ConfigError);
}

TEST_CASE("ablation harness") {
  RunConfig rc = preset("tiny");
  rc.data.train_size = 8;
  rc.data.test_size = 4;
  rc.train.epochs = 1;
  const Dataset data = make_toy_dataset(rc.data);
  const auto one = run_ablation({echo_ablation_grid()[0]}, {0}, data, rc.model, rc.train);
  REQUIRE(one.size() == 1);
  CHECK_FALSE(one[0].failed);
  CHECK(one[0].test_acc.size() == 1);

  std::vector<AblationCell> cells{{"bad", SerializationMode::shuffle, true, true, 5}, echo_ablation_grid()[0]};
  std::vector<std::string> seen;
  const auto rows = run_ablation(cells, {0}, data, rc.model, rc.train,
                                 [&](const AblationRow& r) { seen.push_back(r.cell.name); });
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].failed);
  CHECK_FALSE(rows[0].error.empty());
  CHECK(to_tsv(rows[0]).find("failed") != std::string::npos);
  CHECK_FALSE(rows[1].failed);
  CHECK(seen == std::vector<std::string>{"bad", "shuffle-hilbert"});

  CHECK(full_ablation_grid().size() == 48);
  CHECK(echo_ablation_grid().size() == 5);
}

TEST_CASE("model-level gradients pass the finite-difference check") {
  for (const auto& c : gradient_suite(preset("tiny"))) {
    if (!c.name.starts_with("model")) continue;
    const auto r = run_grad_case(c);
    INFO(c.name, " ", r.report.max_rel_error(), " ", r.report.diagnostic);
    CHECK(r.report.passed);
  }
}
