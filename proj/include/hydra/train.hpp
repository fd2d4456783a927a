#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hydra/model.hpp"
#include "hydra/pointio.hpp"

namespace hydra {

struct ToyDataConfig {
  std::size_t train_size = 400;
  std::size_t test_size = 100;
  std::size_t points = 256;
  double noise = 0.01;
  bool rotate = false;  // random 3D rotation per cloud
  std::uint64_t seed = 0;
};

struct Dataset {
  std::vector<PointCloud> train;
  std::vector<PointCloud> test;
};

// Balanced over the four synthetic shapes, each cloud normalized to the unit sphere.
Dataset make_toy_dataset(const ToyDataConfig& cfg);

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  // Stop once test accuracy reaches this value; 0 disables early stopping.
  double target_acc = 0.0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double loss = 0.0;

  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

std::string to_jsonl(const EpochMetrics& m);

struct TrainResult {
  std::vector<EpochMetrics> history;
  double best_test_acc = 0.0;
  std::size_t best_epoch = 0;
  ModelWeights best_weights;
  ModelWeights final_weights;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// AdamW with cosine learning-rate decay.
class AdamW {
 public:
  AdamW(std::vector<NamedTensor> params, double lr, double weight_decay, double beta1 = 0.9,
        double beta2 = 0.999, double eps = 1e-8);
  // grads are aligned with the parameter list.
  void step(const std::vector<std::vector<double>>& grads, double lr);
  std::size_t steps() const { return t_; }

 private:
  std::vector<NamedTensor> params_;
  std::vector<std::vector<double>> m_, v_;
  std::vector<char> decay_;
  double lr_, weight_decay_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

double cosine_lr(double base, std::size_t step, std::size_t total);

// Labels a cloud contributes to the loss: its class id (recognition) or its
// per-point labels (segmentation).
std::vector<int> target_labels(const PointCloud& pc, Task task);

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
};

// Deterministic evaluation with the config's frozen plan seed.
EvalResult evaluate(const std::vector<PointCloud>& clouds, const ModelConfig& cfg,
                    const ModelWeights& weights, std::size_t threads = 1);

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Mini-batch AdamW on cross-entropy. The shuffle plan is redrawn for every
// training forward pass from (seed, step, item). Batch items run in parallel
// but gradients are reduced in item order, so results do not depend on
// `threads`.
TrainResult train_toy(const Dataset& data, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                      const EpochCallback& on_epoch = {});

// Repeats one cloud for `steps` optimizer steps (batch of one).
struct OverfitResult {
  std::vector<double> losses;
  std::size_t steps_to_perfect = 0;  // 0 when never reached
  bool reached = false;
};
OverfitResult overfit_single(const PointCloud& pc, const ModelConfig& model_cfg,
                             const TrainConfig& train_cfg, std::size_t steps,
                             bool stop_when_perfect = true);

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg,
                     const ModelWeights& weights);
// Fills `weights` (already initialized for `cfg`) from the file.
void load_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, ModelWeights& weights);

// ---------------------------------------------------------------------------
// Ablation harness.
// ---------------------------------------------------------------------------

struct AblationCell {
  std::string name;
  SerializationMode serialization = SerializationMode::shuffle;
  bool bidirectional = true;
  bool conv_branch = true;
  std::size_t heads = 6;  // heads at stage 0; later stages scale with dim
};

struct AblationRow {
  AblationCell cell;
  std::vector<double> test_acc;  // best test accuracy per seed
  double mean_test_acc = 0.0;
  bool failed = false;
  std::string error;
};

// The cells needed for the directional echoes of the serialization,
// ConvBiS6 and head-count ablations.
std::vector<AblationCell> echo_ablation_grid();
// {shuffle, sequential, random} x {bi on/off} x {conv on/off} x {1, 3, 6, 12}.
std::vector<AblationCell> full_ablation_grid();

ModelConfig apply_cell(const ModelConfig& base, const AblationCell& cell);

using AblationCallback = std::function<void(const AblationRow&)>;

// Failed cells are marked and the sweep continues.
std::vector<AblationRow> run_ablation(const std::vector<AblationCell>& cells,
                                      const std::vector<std::uint64_t>& seeds, const Dataset& data,
                                      const ModelConfig& base, const TrainConfig& train_cfg,
                                      const AblationCallback& on_row = {});

std::string ablation_tsv_header();
std::string to_tsv(const AblationRow& row);

}  // namespace hydra
