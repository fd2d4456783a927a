#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "hydra/model.hpp"
#include "hydra/train.hpp"

namespace hydra {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  ToyDataConfig data;
};

// "toy": the acceptance-scale recognition setup (2 stages x 2 blocks, D=48,
// h=6, N=8). "tiny": n=32, D=12, h=3, N=4, used by gradient checks.
RunConfig preset(std::string_view name);

// Flat key = value lines, '#' comments. Unknown keys and bad values throw
// ConfigError naming the line.
void apply_config_text(RunConfig& cfg, std::string_view text);
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);

// Round-trips through apply_config_text.
std::string format_config(const RunConfig& cfg);

}  // namespace hydra
