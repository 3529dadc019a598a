#pragma once

#include <map>
#include <string>

#include "swarmloc/ad/checkpoint.hpp"

namespace swarmloc::train {

struct AdamWConfig {
  double lr = 1e-4;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

/// Adam with decoupled weight decay:
/// p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p).
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {});

  /// Parameters without an entry in `grads` still decay.
  void step(ad::ParamMap& params, const ad::ParamMap& grads);
  long steps() const { return t_; }
  const AdamWConfig& config() const { return config_; }

 private:
  AdamWConfig config_;
  long t_ = 0;
  ad::ParamMap m_;
  ad::ParamMap v_;
};

}  // namespace swarmloc::train
