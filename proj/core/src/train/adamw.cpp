#include "swarmloc/train/adamw.hpp"

#include <cmath>

#include "swarmloc/error.hpp"

namespace swarmloc::train {

void AdamWConfig::validate() const {
  if (!(lr > 0.0) || !(weight_decay >= 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) ||
      !(eps > 0.0)) {
    throw ConfigError("adamw: lr and eps must be positive, betas in [0, 1), weight decay >= 0");
  }
}

AdamW::AdamW(AdamWConfig config) : config_(config) { config_.validate(); }

void AdamW::step(ad::ParamMap& params, const ad::ParamMap& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    auto g = grads.find(name);
    if (g != grads.end() && (g->second.rows() != p.rows() || g->second.cols() != p.cols())) {
      throw ShapeError("adamw: gradient shape mismatch for " + name);
    }
    auto [mi, fresh_m] = m_.try_emplace(name, p.rows(), p.cols(), 0.0);
    auto [vi, fresh_v] = v_.try_emplace(name, p.rows(), p.cols(), 0.0);
    ad::Tensor& m = mi->second;
    ad::Tensor& v = vi->second;
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = g != grads.end() ? g->second[k] : 0.0;
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * gk;
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * gk * gk;
      const double mh = m[k] / c1;
      const double vh = v[k] / c2;
      p[k] -= config_.lr * (mh / (std::sqrt(vh) + config_.eps) + config_.weight_decay * p[k]);
    }
  }
}

}  // namespace swarmloc::train
