#include "swarmloc/ad/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace swarmloc::ad {

const GradcheckEntry* GradcheckReport::worst() const {
  if (entries.empty()) return nullptr;
  return &*std::max_element(entries.begin(), entries.end(),
                            [](const auto& a, const auto& b) { return a.rel_error < b.rel_error; });
}

double gradcheck_rel_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradcheckReport gradcheck(const ScalarFn& f, const Tensor& x, double step, double tol) {
  GradcheckOptions opt;
  opt.step = step;
  opt.tol = tol;
  NamedTensors inputs{{"x", x}};
  return gradcheck(
      [&f](Tape& t, const std::map<std::string, Var>& v) { return f(t, v.at("x")); }, inputs, opt);
}

GradcheckReport gradcheck(const NamedScalarFn& f, const NamedTensors& inputs,
                          const GradcheckOptions& options) {
  auto evaluate = [&f](const NamedTensors& values, bool with_grad, Gradients* grads) {
    Tape tape(with_grad);
    std::map<std::string, Var> vars;
    for (const auto& [name, value] : values) vars[name] = tape.parameter(name, value);
    Var loss = f(tape, vars);
    const double out = loss.item();
    if (grads != nullptr) *grads = tape.backward(loss);
    return out;
  };

  Gradients grads;
  evaluate(inputs, true, &grads);

  GradcheckReport report;
  std::mt19937_64 rng(options.seed);
  NamedTensors probe = inputs;
  for (const auto& [name, value] : inputs) {
    std::vector<std::size_t> idx(value.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (options.samples_per_tensor > 0 && options.samples_per_tensor < idx.size()) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(options.samples_per_tensor);
      std::sort(idx.begin(), idx.end());
    }
    const Tensor& analytic = grads.params.at(name);
    Tensor& x = probe.at(name);
    for (std::size_t i : idx) {
      const double orig = x[i];
      x[i] = orig + options.step;
      const double fp = evaluate(probe, false, nullptr);
      x[i] = orig - options.step;
      const double fm = evaluate(probe, false, nullptr);
      x[i] = orig;
      const double numeric = (fp - fm) / (2.0 * options.step);
      GradcheckEntry e{name, i, analytic[i], numeric,
                       gradcheck_rel_error(analytic[i], numeric, options.floor)};
      report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
      if (!(e.rel_error < options.tol)) report.passed = false;
      report.entries.push_back(e);
    }
  }
  return report;
}

}  // namespace swarmloc::ad
