#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hydra/config.hpp"
#include "hydra/gradcheck.hpp"

namespace hydra {

// One finite-difference check: a function and its seeded random inputs.
struct GradCase {
  std::string name;
  TensorFn fn;
  std::vector<GradInput> inputs;
  GradCheckOptions options;
};

// Every primitive, the scan ops, S6, MHS6, bidirectional mixing, resampling,
// embedding, ConvBiS6, full blocks and the full model at `tiny` scale.
std::vector<GradCase> gradient_suite(const RunConfig& tiny, std::uint64_t seed = 0);

struct GradCaseResult {
  std::string name;
  GradCheckReport report;
};

GradCaseResult run_grad_case(const GradCase& c);

}  // namespace hydra
