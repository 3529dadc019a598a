#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "swarmloc/ad/tape.hpp"

namespace swarmloc::ad {

struct GradcheckEntry {
  std::string tensor;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradcheckReport {
  bool passed = true;
  double max_rel_error = 0.0;
  std::vector<GradcheckEntry> entries;
  /// Entry with the largest relative error, if any were checked.
  const GradcheckEntry* worst() const;
};

/// Relative error used by every gradient check:
/// |a - n| / max(|a|, |n|, floor).
double gradcheck_rel_error(double analytic, double numeric, double floor = 1e-4);

using ScalarFn = std::function<Var(Tape&, const Var&)>;

/// Compares the tape gradient of `f` at `x` with central differences, one
/// element at a time.
GradcheckReport gradcheck(const ScalarFn& f, const Tensor& x, double step = 1e-6,
                          double tol = 1e-4);

using NamedTensors = std::map<std::string, Tensor>;
using NamedScalarFn = std::function<Var(Tape&, const std::map<std::string, Var>&)>;

struct GradcheckOptions {
  double step = 1e-6;
  double tol = 1e-4;
  double floor = 1e-4;
  /// Elements checked per tensor; 0 checks every element.
  std::size_t samples_per_tensor = 0;
  std::uint64_t seed = 1;
};

/// Multi-input variant: every tensor in `inputs` becomes a tape leaf.
GradcheckReport gradcheck(const NamedScalarFn& f, const NamedTensors& inputs,
                          const GradcheckOptions& options);

}  // namespace swarmloc::ad
