#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hydra/tensor.hpp"

namespace hydra {

struct GradInput {
  std::string name;
  Tensor value;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Probe at most this many entries per input (seeded choice); 0 probes all.
  std::size_t max_entries = 0;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t probed = 0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool passed = false;
  // Set when evaluation failed, e.g. a non-finite intermediate; names the op.
  std::string diagnostic;

  double max_rel_error() const;
};

// f maps the inputs to a tensor; non-scalar outputs are reduced against fixed
// seeded random weights so every output entry contributes.
using TensorFn = std::function<Tensor(std::span<const Tensor>)>;

// Central finite differences against the tape gradient. Per input the error is
// max |analytic - fd| / max(|analytic|, |fd|, 1e-8) over probed entries.
GradCheckReport check_gradients(const TensorFn& f, std::vector<GradInput> inputs,
                                const GradCheckOptions& options = {});

}  // namespace hydra
