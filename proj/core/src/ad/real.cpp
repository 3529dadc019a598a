#include "swarmloc/ad/real.hpp"

#include "swarmloc/error.hpp"

namespace swarmloc::ad {
namespace {
thread_local RealTape* g_active = nullptr;
}

void RealTape::backward(std::vector<double>& adjoint) const {
  if (adjoint.size() != entries_.size()) {
    throw Error("RealTape::backward: adjoint vector has the wrong length");
  }
  for (std::size_t i = entries_.size(); i-- > 0;) {
    const double g = adjoint[i];
    if (g == 0.0) continue;
    const Entry& e = entries_[i];
    if (e.a != kNone) adjoint[static_cast<std::size_t>(e.a)] += g * e.da;
    if (e.b != kNone) adjoint[static_cast<std::size_t>(e.b)] += g * e.db;
  }
}

RealTapeScope::RealTapeScope(RealTape& tape) : previous_(g_active) { g_active = &tape; }
RealTapeScope::~RealTapeScope() { g_active = previous_; }

RealTape* active_real_tape() { return g_active; }

Real Real::variable(double v) {
  if (g_active == nullptr) throw Error("Real::variable without an active RealTape");
  Real r(v);
  r.idx_ = g_active->leaf();
  return r;
}

Real Real::unary(const Real& a, double v, double da) {
  Real r(v);
  if (a.is_variable()) r.idx_ = g_active->push(a.idx_, da, RealTape::kNone, 0.0);
  return r;
}

Real Real::binary(const Real& a, const Real& b, double v, double da, double db) {
  Real r(v);
  if (a.is_variable() || b.is_variable()) {
    r.idx_ = g_active->push(a.idx_, a.is_variable() ? da : 0.0, b.idx_,
                            b.is_variable() ? db : 0.0);
  }
  return r;
}

Real sqrt(const Real& a) {
  const double s = std::sqrt(a.value());
  return Real::unary(a, s, s > 0.0 ? 0.5 / s : 0.0);
}
Real sin(const Real& a) { return Real::unary(a, std::sin(a.value()), std::cos(a.value())); }
Real cos(const Real& a) { return Real::unary(a, std::cos(a.value()), -std::sin(a.value())); }
Real atan2(const Real& y, const Real& x) {
  const double r2 = x.value() * x.value() + y.value() * y.value();
  const double dy = r2 > 0.0 ? x.value() / r2 : 0.0;
  const double dx = r2 > 0.0 ? -y.value() / r2 : 0.0;
  return Real::binary(y, x, std::atan2(y.value(), x.value()), dy, dx);
}
Real exp(const Real& a) {
  const double e = std::exp(a.value());
  return Real::unary(a, e, e);
}
Real log(const Real& a) { return Real::unary(a, std::log(a.value()), 1.0 / a.value()); }

}  // namespace swarmloc::ad
