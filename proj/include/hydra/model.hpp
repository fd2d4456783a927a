#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hydra/blocks.hpp"
#include "hydra/pointio.hpp"
#include "hydra/resample.hpp"
#include "hydra/spacefill.hpp"
#include "hydra/sscan.hpp"

namespace hydra {

enum class Task { recognition, segmentation };
enum class Transition { fps, grid };
// `random` orders every block by a fresh random permutation (no curve).
enum class SerializationMode { shuffle, sequential, fixed, random };

std::string_view task_name(Task t);
Task parse_task(std::string_view s);
std::string_view transition_name(Transition t);
Transition parse_transition(std::string_view s);
std::string_view serialization_mode_name(SerializationMode m);
SerializationMode parse_serialization_mode(std::string_view s);

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct StageConfig {
  std::size_t blocks = 2;
  std::size_t dim = 48;
  std::size_t heads = 6;
  // Entering this stage: FPS keeps ceil(n / down) points; grid pooling uses
  // `down` as the voxel edge. Ignored for stage 0.
  double down = 1.0;
};

struct ModelConfig {
  Task task = Task::recognition;
  std::size_t num_classes = 4;
  std::size_t in_features = 0;
  std::vector<StageConfig> stages{{2, 48, 6, 1.0}, {2, 48, 6, 2.0}};
  Transition transition = Transition::fps;
  std::size_t decoder_blocks = 1;
  int curve_bits = kDefaultCurveBits;
  SerializationMode serialization = SerializationMode::shuffle;
  std::uint64_t plan_seed = 0;  // evaluation-time plan
  std::size_t state_dim = 8;
  ConvKind conv_kind = ConvKind::depthwise;
  std::size_t conv_kernel = 7;
  std::size_t ffn_ratio = 4;
  bool bidirectional = true;
  bool conv_branch = true;
  std::size_t interp_k = 3;

  // Throws ConfigError on any inconsistency.
  void validate() const;
  BlockConfig block_config(std::size_t stage) const;
  std::size_t encoder_blocks() const;
  std::size_t total_blocks() const;
};

struct ModelWeights {
  EmbedState embed;
  std::vector<std::vector<BlockState>> encoder;  // [stage][block]
  std::vector<Tensor> down_w, down_b;            // entering stage s >= 1
  std::vector<std::vector<BlockState>> decoder;  // [stage s < S-1][block]
  std::vector<Tensor> up_w, up_b;                // stage s+1 -> s
  Tensor norm_gamma, norm_beta;
  Tensor head_w1, head_b1, head_w2, head_b2;

  std::vector<NamedTensor> parameters() const;
  std::vector<Tensor> tensors() const;
  void assign(std::span<const Tensor> values);
  ModelWeights clone() const;
};

ModelWeights init_model(const ModelConfig& cfg, std::uint64_t seed);

struct ForwardOptions {
  std::uint64_t plan_seed = 0;
  ScanOptions scan;
};

// Optional shape/serialization trace of one forward pass.
struct ForwardTrace {
  std::vector<std::size_t> stage_points;
  std::vector<CurveVariant> block_variants;  // encoder then decoder order
};

// Recognition: [num_classes]. Segmentation: [n, num_classes].
Tensor forward(const PointCloud& pc, const ModelConfig& cfg, const ModelWeights& weights,
               const ForwardOptions& options, ForwardTrace* trace = nullptr);

}  // namespace hydra
