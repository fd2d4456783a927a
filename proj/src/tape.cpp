#include "hydra/tape.hpp"

#include <atomic>
#include <cstdlib>
#include <string>
#include <unordered_set>

namespace hydra {

namespace {

thread_local Tape* g_active = nullptr;

bool env_finite_checks() {
  const char* v = std::getenv("HYDRA_CHECK_FINITE");
  return v != nullptr && *v != '\0' && std::string(v) != "0";
}

std::atomic<bool>& finite_flag() {
  static std::atomic<bool> flag{env_finite_checks()};
  return flag;
}

}  // namespace

Tensor Gradients::of(const Tensor& t) const {
  auto it = grads_.find(t.id());
  if (it == grads_.end()) return Tensor(t.shape());
  return it->second;
}

void Tape::record(std::string_view name, std::vector<Tensor> inputs, const Tensor& output,
                  BackwardFn backward) {
  entries_.push_back(Entry{name, std::move(inputs), output, std::move(backward)});
}

Gradients Tape::grad(const Tensor& loss, std::span<const Tensor> wrt) const {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("grad: loss must be a scalar tensor, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }

  std::unordered_set<const TensorStorage*> wanted;
  for (const auto& t : wrt) wanted.insert(t.id());

  // Forward sweep: which entries lie on a path from some wrt tensor.
  std::unordered_set<const TensorStorage*> live = wanted;
  std::vector<char> active(entries_.size(), 0);
  for (std::size_t e = 0; e < entries_.size(); ++e) {
    for (const auto& in : entries_[e].inputs) {
      if (live.count(in.id())) {
        active[e] = 1;
        live.insert(entries_[e].output.id());
        break;
      }
    }
  }

  std::unordered_map<const TensorStorage*, AlignedBuffer> acc;
  acc[loss.id()] = AlignedBuffer{1.0};

  std::vector<std::span<double>> spans;
  for (std::size_t e = entries_.size(); e-- > 0;) {
    if (!active[e]) continue;
    const Entry& entry = entries_[e];
    auto out_it = acc.find(entry.output.id());
    if (out_it == acc.end()) continue;

    spans.assign(entry.inputs.size(), std::span<double>{});
    for (std::size_t i = 0; i < entry.inputs.size(); ++i) {
      const Tensor& in = entry.inputs[i];
      if (!live.count(in.id())) continue;
      auto& buf = acc[in.id()];
      if (buf.empty()) buf.assign(in.size(), 0.0);
      spans[i] = buf;
    }
    // acc nodes are address-stable, so out_it stays valid across the inserts above.
    entry.backward(out_it->second, spans);
    if (!wanted.count(entry.output.id())) acc.erase(out_it);
  }

  Gradients result;
  for (const auto& t : wrt) {
    auto it = acc.find(t.id());
    if (it == acc.end()) {
      result.grads_.emplace(t.id(), Tensor(t.shape()));
    } else {
      result.grads_.emplace(t.id(), Tensor(t.shape(), std::move(it->second)));
      acc.erase(it);
    }
  }
  return result;
}

Tape* active_tape() { return g_active; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active) { g_active = &tape; }
TapeScope::~TapeScope() { g_active = previous_; }

NoGradScope::NoGradScope() : previous_(g_active) { g_active = nullptr; }
NoGradScope::~NoGradScope() { g_active = previous_; }

bool finite_checks_enabled() { return finite_flag().load(std::memory_order_relaxed); }
void set_finite_checks(bool enabled) { finite_flag().store(enabled, std::memory_order_relaxed); }

Tensor emit(std::string_view name, Tensor output, std::vector<Tensor> inputs, BackwardFn backward) {
  if (finite_checks_enabled() && !all_finite(output.data())) {
    throw NonFiniteError(name, "non-finite value produced by op '" + std::string(name) + "'");
  }
  if (g_active != nullptr) g_active->record(name, std::move(inputs), output, std::move(backward));
  return output;
}

}  // namespace hydra
