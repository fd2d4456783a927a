#include "hydra/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "hydra/ops.hpp"
#include "hydra/tape.hpp"

namespace hydra {

namespace {

class FiniteCheckGuard {
 public:
  FiniteCheckGuard() : previous_(finite_checks_enabled()) { set_finite_checks(true); }
  ~FiniteCheckGuard() { set_finite_checks(previous_); }

 private:
  bool previous_;
};

Tensor reduce_to_scalar(const Tensor& out, const Tensor& weights) {
  if (out.size() == 1) return out;
  return ops::weighted_sum(out, weights);
}

}  // namespace

double GradCheckReport::max_rel_error() const {
  double m = 0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

GradCheckReport check_gradients(const TensorFn& f, std::vector<GradInput> inputs,
                                const GradCheckOptions& options) {
  GradCheckReport report;
  FiniteCheckGuard guard;
  std::vector<Tensor> values;
  for (const auto& in : inputs) values.push_back(in.value);

  try {
    Tensor weights;
    {
      NoGradScope no_grad;
      Tensor probe = f(values);
      if (probe.size() != 1) {
        std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        weights = Tensor(probe.shape());
        for (auto& w : weights.mutable_data()) w = u(rng);
      }
    }

    Tape tape;
    Gradients grads;
    {
      TapeScope scope(tape);
      Tensor loss = reduce_to_scalar(f(values), weights);
      grads = tape.grad(loss, values);
    }

    auto eval = [&] {
      NoGradScope no_grad;
      return reduce_to_scalar(f(values), weights).item();
    };

    std::mt19937_64 pick(options.seed);
    report.passed = true;
    for (std::size_t k = 0; k < values.size(); ++k) {
      Tensor& v = values[k];
      const Tensor analytic = grads.of(v);
      std::vector<std::size_t> probe(v.size());
      std::iota(probe.begin(), probe.end(), std::size_t{0});
      if (options.max_entries > 0 && probe.size() > options.max_entries) {
        std::shuffle(probe.begin(), probe.end(), pick);
        probe.resize(options.max_entries);
        std::sort(probe.begin(), probe.end());
      }
      GradCheckEntry entry{inputs[k].name, 0.0, probe.size(), false};
      for (std::size_t j : probe) {
        double& x = v.mutable_data()[j];
        const double saved = x;
        x = saved + options.step;
        const double up = eval();
        x = saved - options.step;
        const double down = eval();
        x = saved;
        const double fd = (up - down) / (2.0 * options.step);
        const double a = analytic[j];
        const double denom = std::max({std::abs(a), std::abs(fd), 1e-8});
        entry.max_rel_error = std::max(entry.max_rel_error, std::abs(a - fd) / denom);
      }
      entry.passed = entry.max_rel_error < options.tolerance;
      report.passed = report.passed && entry.passed;
      report.entries.push_back(std::move(entry));
    }
  } catch (const NonFiniteError& e) {
    report.passed = false;
    report.diagnostic = e.what();
  }
  return report;
}

}  // namespace hydra
