#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace swarmloc::ad {

/// Scalar reverse-mode tape. Each entry records up to two parents with their
/// local partial derivatives. Used where computations are scalar-heavy
/// (nonlinear least squares) and a tensor-level tape would be wasteful.
class RealTape {
 public:
  static constexpr std::int32_t kNone = -1;

  std::int32_t push(std::int32_t a, double da, std::int32_t b, double db) {
    entries_.push_back(Entry{a, b, da, db});
    return static_cast<std::int32_t>(entries_.size() - 1);
  }
  std::int32_t leaf() { return push(kNone, 0.0, kNone, 0.0); }

  std::size_t size() const { return entries_.size(); }

  /// Reverse sweep; `adjoint` must be sized size() and seeded by the caller.
  void backward(std::vector<double>& adjoint) const;

 private:
  struct Entry {
    std::int32_t a;
    std::int32_t b;
    double da;
    double db;
  };
  std::vector<Entry> entries_;
};

/// Sets the thread's active RealTape for the lifetime of the scope.
class RealTapeScope {
 public:
  explicit RealTapeScope(RealTape& tape);
  ~RealTapeScope();
  RealTapeScope(const RealTapeScope&) = delete;
  RealTapeScope& operator=(const RealTapeScope&) = delete;

 private:
  RealTape* previous_;
};

RealTape* active_real_tape();

/// Scalar with an optional slot on the active RealTape. Constants (no slot)
/// never create tape entries.
class Real {
 public:
  Real() = default;
  Real(double v) : v_(v) {}  // NOLINT(google-explicit-constructor)

  /// New independent variable on the active tape.
  static Real variable(double v);

  double value() const { return v_; }
  std::int32_t index() const { return idx_; }
  bool is_variable() const { return idx_ != RealTape::kNone; }

  static Real unary(const Real& a, double v, double da);
  static Real binary(const Real& a, const Real& b, double v, double da, double db);

  Real& operator+=(const Real& o) { return *this = *this + o; }
  Real& operator-=(const Real& o) { return *this = *this - o; }
  Real& operator*=(const Real& o) { return *this = *this * o; }
  Real& operator/=(const Real& o) { return *this = *this / o; }

  friend Real operator+(const Real& a, const Real& b) {
    return binary(a, b, a.v_ + b.v_, 1.0, 1.0);
  }
  friend Real operator-(const Real& a, const Real& b) {
    return binary(a, b, a.v_ - b.v_, 1.0, -1.0);
  }
  friend Real operator*(const Real& a, const Real& b) {
    return binary(a, b, a.v_ * b.v_, b.v_, a.v_);
  }
  friend Real operator/(const Real& a, const Real& b) {
    const double inv = 1.0 / b.v_;
    return binary(a, b, a.v_ * inv, inv, -a.v_ * inv * inv);
  }
  friend Real operator-(const Real& a) { return unary(a, -a.v_, -1.0); }

  friend bool operator<(const Real& a, const Real& b) { return a.v_ < b.v_; }
  friend bool operator>(const Real& a, const Real& b) { return a.v_ > b.v_; }
  friend bool operator<=(const Real& a, const Real& b) { return a.v_ <= b.v_; }
  friend bool operator>=(const Real& a, const Real& b) { return a.v_ >= b.v_; }

 private:
  double v_ = 0.0;
  std::int32_t idx_ = RealTape::kNone;
};

Real sqrt(const Real& a);
Real sin(const Real& a);
Real cos(const Real& a);
Real atan2(const Real& y, const Real& x);
Real exp(const Real& a);
Real log(const Real& a);

inline double value_of(double v) { return v; }
inline double value_of(const Real& v) { return v.value(); }

}  // namespace swarmloc::ad
