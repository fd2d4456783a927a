#include "hydra/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "hydra/ops.hpp"
#include "hydra/parallel.hpp"
#include "hydra/tape.hpp"

namespace hydra {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over the combined words.
  std::uint64_t z = a * 0x9e3779b97f4a7c15ULL + b + 0x632be59bd9b4e019ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void rotate_random(PointCloud& pc, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  double q[4];
  double norm = 0;
  do {
    norm = 0;
    for (double& v : q) {
      v = g(rng);
      norm += v * v;
    }
  } while (norm < 1e-12);
  norm = std::sqrt(norm);
  for (double& v : q) v /= norm;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  const double r[3][3] = {{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
                          {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
                          {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}};
  for (auto& p : pc.coords) {
    const Point3 o = p;
    for (int i = 0; i < 3; ++i) p[i] = r[i][0] * o[0] + r[i][1] * o[1] + r[i][2] * o[2];
  }
}

std::vector<PointCloud> make_split(std::size_t count, const ToyDataConfig& cfg, std::uint64_t stream) {
  std::vector<PointCloud> out;
  out.reserve(count);
  std::mt19937_64 rot(mix(cfg.seed, stream ^ 0x5bd1e995ULL));
  for (std::size_t i = 0; i < count; ++i) {
    SyntheticSpec spec;
    spec.shape_kind = static_cast<ShapeKind>(i % kNumShapeKinds);
    spec.n_points = cfg.points;
    spec.noise_sigma = cfg.noise;
    spec.seed = mix(mix(cfg.seed, stream), i);
    PointCloud pc = make_synthetic(spec);
    if (cfg.rotate) rotate_random(pc, rot);
    PointCloud normed = normalize_unit_sphere(pc);
    normed.class_id = pc.class_id;
    out.push_back(std::move(normed));
  }
  return out;
}

}  // namespace

Dataset make_toy_dataset(const ToyDataConfig& cfg) {
  Dataset d;
  d.train = make_split(cfg.train_size, cfg, 1);
  d.test = make_split(cfg.test_size, cfg, 2);
  return d;
}

std::string to_jsonl(const EpochMetrics& m) {
  nlohmann::json j{{"epoch", m.epoch}, {"train_acc", m.train_acc}, {"test_acc", m.test_acc}, {"loss", m.loss}};
  return j.dump();
}

AdamW::AdamW(std::vector<NamedTensor> params, double lr, double weight_decay, double beta1,
             double beta2, double eps)
    : params_(std::move(params)), lr_(lr), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.size(), 0.0);
    v_.emplace_back(p.tensor.size(), 0.0);
    // Decay matrices and kernels; leave norms, biases and A_log alone.
    decay_.push_back(p.tensor.rank() >= 2 && p.name.find("a_log") == std::string::npos);
  }
}

void AdamW::step(const std::vector<std::vector<double>>& grads, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto w = params_[k].tensor.mutable_data();
    const auto& g = grads[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = m[i] / bc1, vhat = v[i] / bc2;
      if (decay_[k]) w[i] -= lr * weight_decay_ * w[i];
      w[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
  (void)lr_;
}

double cosine_lr(double base, std::size_t step, std::size_t total) {
  if (total <= 1) return base;
  const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(total - 1));
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * frac));
}

std::vector<int> target_labels(const PointCloud& pc, Task task) {
  if (task == Task::recognition) {
    if (!pc.class_id) throw std::invalid_argument("recognition sample has no class id");
    return {*pc.class_id};
  }
  if (pc.labels.size() != pc.size()) throw std::invalid_argument("segmentation sample needs per-point labels");
  return pc.labels;
}

namespace {

struct ItemOutcome {
  std::vector<std::vector<double>> grads;
  double loss = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
};

void score(const Tensor& logits, const std::vector<int>& labels, std::size_t& correct) {
  const std::size_t c = logits.shape().back();
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const double* row = logits.ptr() + r * c;
    const auto pred = static_cast<int>(std::max_element(row, row + c) - row);
    if (pred == labels[r]) ++correct;
  }
}

ItemOutcome run_item(const PointCloud& pc, const ModelConfig& cfg, const ModelWeights& weights,
                     const std::vector<Tensor>& params, std::uint64_t plan_seed) {
  ItemOutcome out;
  const auto labels = target_labels(pc, cfg.task);
  Tape tape;
  TapeScope scope(tape);
  ForwardOptions fo;
  fo.plan_seed = plan_seed;
  const Tensor logits = forward(pc, cfg, weights, fo);
  const Tensor loss = ops::cross_entropy(logits, labels);
  out.loss = loss.item();
  if (!std::isfinite(out.loss)) return out;
  score(logits, labels, out.correct);
  out.total = labels.size();
  const Gradients g = tape.grad(loss, params);
  out.grads.reserve(params.size());
  for (const auto& p : params) {
    const Tensor gp = g.of(p);
    out.grads.emplace_back(gp.data().begin(), gp.data().end());
  }
  return out;
}

}  // namespace

EvalResult evaluate(const std::vector<PointCloud>& clouds, const ModelConfig& cfg,
                    const ModelWeights& weights, std::size_t threads) {
  if (clouds.empty()) return {};
  std::vector<std::size_t> correct(clouds.size(), 0), total(clouds.size(), 0);
  std::vector<double> losses(clouds.size(), 0.0);
  parallel_for(clouds.size(), threads, [&](std::size_t i) {
    NoGradScope no_grad;
    ForwardOptions fo;
    fo.plan_seed = cfg.plan_seed;
    const auto labels = target_labels(clouds[i], cfg.task);
    const Tensor logits = forward(clouds[i], cfg, weights, fo);
    losses[i] = ops::cross_entropy(logits, labels).item();
    score(logits, labels, correct[i]);
    total[i] = labels.size();
  });
  EvalResult r;
  const double c = static_cast<double>(std::accumulate(correct.begin(), correct.end(), std::size_t{0}));
  const double t = static_cast<double>(std::accumulate(total.begin(), total.end(), std::size_t{0}));
  r.accuracy = c / t;
  r.loss = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(clouds.size());
  return r;
}

TrainResult train_toy(const Dataset& data, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                      const EpochCallback& on_epoch) {
  model_cfg.validate();
  if (data.train.empty()) throw std::invalid_argument("train_toy: empty training set");
  if (train_cfg.batch_size == 0 || train_cfg.epochs == 0 || !(train_cfg.lr > 0)) {
    throw std::invalid_argument("train_toy: epochs, batch size and learning rate must be positive");
  }
  ModelWeights weights = init_model(model_cfg, train_cfg.seed);
  const std::vector<NamedTensor> named = weights.parameters();
  std::vector<Tensor> params;
  for (const auto& p : named) params.push_back(p.tensor);
  AdamW opt(named, train_cfg.lr, train_cfg.weight_decay);

  const std::size_t n = data.train.size();
  const std::size_t steps_per_epoch = (n + train_cfg.batch_size - 1) / train_cfg.batch_size;
  const std::size_t total_steps = steps_per_epoch * train_cfg.epochs;
  std::mt19937_64 order_rng(mix(train_cfg.seed, 0x6f72646572ULL));

  TrainResult result;
  result.best_test_acc = -1.0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0;
    for (std::size_t start = 0; start < n; start += train_cfg.batch_size) {
      const std::size_t count = std::min(train_cfg.batch_size, n - start);
      std::vector<ItemOutcome> outcomes(count);
      parallel_for(count, train_cfg.threads, [&](std::size_t j) {
        outcomes[j] = run_item(data.train[order[start + j]], model_cfg, weights, params,
                               mix(mix(train_cfg.seed, step), j));
      });
      std::vector<std::vector<double>> grads(params.size());
      for (std::size_t k = 0; k < params.size(); ++k) grads[k].assign(params[k].size(), 0.0);
      const double inv = 1.0 / static_cast<double>(count);
      for (std::size_t j = 0; j < count; ++j) {
        const auto& o = outcomes[j];
        if (!std::isfinite(o.loss)) {
          throw DivergenceError("loss became non-finite at epoch " + std::to_string(epoch) + ", step " +
                                std::to_string(step));
        }
        loss_sum += o.loss;
        correct += o.correct;
        seen += o.total;
        for (std::size_t k = 0; k < params.size(); ++k) {
          for (std::size_t i = 0; i < o.grads[k].size(); ++i) grads[k][i] += o.grads[k][i] * inv;
        }
      }
      opt.step(grads, cosine_lr(train_cfg.lr, step, total_steps));
      ++step;
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.loss = loss_sum / static_cast<double>(n);
    m.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
    m.test_acc = data.test.empty() ? 0.0 : evaluate(data.test, model_cfg, weights, train_cfg.threads).accuracy;
    result.history.push_back(m);
    if (on_epoch) on_epoch(m);
    if (m.test_acc > result.best_test_acc) {
      result.best_test_acc = m.test_acc;
      result.best_epoch = epoch;
      result.best_weights = weights.clone();
    }
    if (train_cfg.target_acc > 0.0 && m.test_acc >= train_cfg.target_acc) break;
  }
  result.final_weights = std::move(weights);
  return result;
}

OverfitResult overfit_single(const PointCloud& pc, const ModelConfig& model_cfg,
                             const TrainConfig& train_cfg, std::size_t steps, bool stop_when_perfect) {
  model_cfg.validate();
  ModelWeights weights = init_model(model_cfg, train_cfg.seed);
  const std::vector<NamedTensor> named = weights.parameters();
  std::vector<Tensor> params;
  for (const auto& p : named) params.push_back(p.tensor);
  AdamW opt(named, train_cfg.lr, train_cfg.weight_decay);
  OverfitResult r;
  for (std::size_t s = 0; s < steps; ++s) {
    ItemOutcome o = run_item(pc, model_cfg, weights, params, mix(train_cfg.seed, s));
    if (!std::isfinite(o.loss)) throw DivergenceError("loss became non-finite at step " + std::to_string(s));
    r.losses.push_back(o.loss);
    if (o.correct == o.total && !r.reached) {
      r.reached = true;
      r.steps_to_perfect = s + 1;
      if (stop_when_perfect) break;
    }
    opt.step(o.grads, train_cfg.lr);
  }
  return r;
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const ModelWeights& weights) {
  nlohmann::json j;
  j["format"] = "hydramamba-checkpoint-v1";
  j["task"] = std::string(task_name(cfg.task));
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : weights.parameters()) {
    params.push_back({{"name", p.name},
                      {"shape", p.tensor.shape()},
                      {"data", std::vector<double>(p.tensor.data().begin(), p.tensor.data().end())}});
  }
  j["params"] = std::move(params);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << j.dump();
}

void load_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, ModelWeights& weights) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  const nlohmann::json j = nlohmann::json::parse(in);
  if (j.value("format", "") != "hydramamba-checkpoint-v1") throw std::runtime_error("not a checkpoint file");
  if (j.value("task", "") != task_name(cfg.task)) throw std::runtime_error("checkpoint task does not match config");
  const auto expected = weights.parameters();
  const auto& params = j.at("params");
  if (params.size() != expected.size()) {
    throw std::runtime_error("checkpoint has " + std::to_string(params.size()) + " tensors, config needs " +
                             std::to_string(expected.size()));
  }
  std::vector<Tensor> values;
  for (std::size_t k = 0; k < expected.size(); ++k) {
    const auto& p = params[k];
    if (p.at("name").get<std::string>() != expected[k].name) {
      throw std::runtime_error("checkpoint tensor " + p.at("name").get<std::string>() + " where " +
                               expected[k].name + " was expected");
    }
    values.emplace_back(p.at("shape").get<Shape>(), p.at("data").get<std::vector<double>>());
  }
  weights.assign(values);
}

// ---------------------------------------------------------------------------

std::vector<AblationCell> echo_ablation_grid() {
  return {
      {"shuffle-hilbert", SerializationMode::shuffle, true, true, 6},
      {"no-curve", SerializationMode::random, true, true, 6},
      {"bi-only", SerializationMode::shuffle, true, false, 6},
      {"neither", SerializationMode::shuffle, false, false, 6},
      {"single-head", SerializationMode::shuffle, true, true, 1},
  };
}

std::vector<AblationCell> full_ablation_grid() {
  std::vector<AblationCell> cells;
  for (auto ser : {SerializationMode::shuffle, SerializationMode::sequential, SerializationMode::random}) {
    for (bool bi : {true, false}) {
      for (bool conv : {true, false}) {
        for (std::size_t h : {1, 3, 6, 12}) {
          AblationCell c;
          c.serialization = ser;
          c.bidirectional = bi;
          c.conv_branch = conv;
          c.heads = h;
          c.name = std::string(serialization_mode_name(ser)) + (bi ? "+bi" : "-bi") + (conv ? "+conv" : "-conv") +
                   "+h" + std::to_string(h);
          cells.push_back(c);
        }
      }
    }
  }
  return cells;
}

ModelConfig apply_cell(const ModelConfig& base, const AblationCell& cell) {
  ModelConfig cfg = base;
  cfg.serialization = cell.serialization;
  cfg.bidirectional = cell.bidirectional;
  cfg.conv_branch = cell.conv_branch;
  const std::size_t d0 = cfg.stages[0].dim;
  for (auto& st : cfg.stages) {
    if (cell.heads * st.dim % d0 != 0) {
      throw ConfigError("cell " + cell.name + ": heads do not scale to stage dim " + std::to_string(st.dim));
    }
    st.heads = cell.heads * st.dim / d0;
  }
  cfg.validate();
  return cfg;
}

std::vector<AblationRow> run_ablation(const std::vector<AblationCell>& cells,
                                      const std::vector<std::uint64_t>& seeds, const Dataset& data,
                                      const ModelConfig& base, const TrainConfig& train_cfg,
                                      const AblationCallback& on_row) {
  std::vector<AblationRow> rows;
  for (const auto& cell : cells) {
    AblationRow row;
    row.cell = cell;
    try {
      const ModelConfig cfg = apply_cell(base, cell);
      for (auto seed : seeds) {
        TrainConfig tc = train_cfg;
        tc.seed = seed;
        row.test_acc.push_back(train_toy(data, cfg, tc).best_test_acc);
      }
      row.mean_test_acc =
          std::accumulate(row.test_acc.begin(), row.test_acc.end(), 0.0) / static_cast<double>(row.test_acc.size());
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
    if (on_row) on_row(row);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_tsv_header() {
  return "cell\tserialization\tbidirectional\tconv\theads\tseeds\tmean_test_acc\tper_seed\tstatus";
}

std::string to_tsv(const AblationRow& row) {
  std::ostringstream os;
  os << row.cell.name << '\t' << serialization_mode_name(row.cell.serialization) << '\t'
     << (row.cell.bidirectional ? 1 : 0) << '\t' << (row.cell.conv_branch ? 1 : 0) << '\t' << row.cell.heads
     << '\t' << row.test_acc.size() << '\t' << std::setprecision(6) << row.mean_test_acc << '\t';
  for (std::size_t i = 0; i < row.test_acc.size(); ++i) os << (i ? "," : "") << row.test_acc[i];
  if (row.test_acc.empty()) os << '-';
  os << '\t' << (row.failed ? "failed: " + row.error : std::string("ok"));
  return os.str();
}

}  // namespace hydra
