#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hydra/tensor.hpp"

namespace hydra {

class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Raised when finite checks are on and an op writes NaN/Inf.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(std::string_view op, const std::string& what)
      : std::runtime_error(what), op_(op) {}
  std::string_view op() const { return op_; }

 private:
  std::string_view op_;
};

// Per-input gradient buffers. A span is empty when that input needs no gradient.
using GradSpans = std::span<const std::span<double>>;
using BackwardFn = std::function<void(std::span<const double> grad_out, GradSpans grad_in)>;

class Gradients {
 public:
  // Returns a zero tensor shaped like `t` when `t` was not reachable.
  Tensor of(const Tensor& t) const;
  bool contains(const Tensor& t) const { return grads_.count(t.id()) != 0; }

 private:
  friend class Tape;
  std::unordered_map<const TensorStorage*, Tensor> grads_;
};

// Eager reverse-mode tape. Operations append in execution order, which is a
// topological order, so backward is a single reverse sweep.
class Tape {
 public:
  struct Entry {
    std::string_view name;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  void record(std::string_view name, std::vector<Tensor> inputs, const Tensor& output,
              BackwardFn backward);

  // d(loss)/d(t) for every t in `wrt`. Unreachable tensors get zero gradients.
  Gradients grad(const Tensor& loss, std::span<const Tensor> wrt) const;

  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

 private:
  std::vector<Entry> entries_;
};

// The tape that ops on this thread record into, or nullptr.
Tape* active_tape();

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording on this thread (inference, finite-difference probes).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

// Finite checks default to the HYDRA_CHECK_FINITE environment variable.
bool finite_checks_enabled();
void set_finite_checks(bool enabled);

// Finishes an op: optional finite check, then records on the active tape.
// Every differentiable primitive in the library goes through here.
Tensor emit(std::string_view name, Tensor output, std::vector<Tensor> inputs, BackwardFn backward);

}  // namespace hydra
