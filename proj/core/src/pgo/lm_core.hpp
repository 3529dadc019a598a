#pragma once

// Scalar-generic Levenberg-Marquardt core shared by lm_solve (double) and
// the differentiable solver (ad::Real). Branches compare values only.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "swarmloc/ad/real.hpp"
#include "swarmloc/error.hpp"
#include "swarmloc/pgo/solver.hpp"

namespace swarmloc::pgo::detail {

using ad::value_of;

template <class S>
using V3 = std::array<S, 3>;

template <class S>
struct QuatT {
  S w{1.0}, x{0.0}, y{0.0}, z{0.0};
};

template <class S>
struct PoseT {
  QuatT<S> q;
  V3<S> t{S(0.0), S(0.0), S(0.0)};
};

template <class S>
S sqrt_s(const S& v) {
  using std::sqrt;
  using ad::sqrt;
  return sqrt(v);
}
template <class S>
S sin_s(const S& v) {
  using std::sin;
  using ad::sin;
  return sin(v);
}
template <class S>
S cos_s(const S& v) {
  using std::cos;
  using ad::cos;
  return cos(v);
}
template <class S>
S atan2_s(const S& y, const S& x) {
  using std::atan2;
  using ad::atan2;
  return atan2(y, x);
}

template <class S>
QuatT<S> qmul(const QuatT<S>& a, const QuatT<S>& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z, a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x, a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

template <class S>
QuatT<S> qconj(const QuatT<S>& a) {
  return {a.w, -a.x, -a.y, -a.z};
}

template <class S>
QuatT<S> qnormalize(const QuatT<S>& a) {
  const S n = sqrt_s(a.w * a.w + a.x * a.x + a.y * a.y + a.z * a.z);
  QuatT<S> q{a.w / n, a.x / n, a.y / n, a.z / n};
  if (value_of(q.w) < 0.0) q = {-q.w, -q.x, -q.y, -q.z};
  return q;
}

/// Row-major rotation matrix of a unit quaternion.
template <class S>
std::array<S, 9> rotmat(const QuatT<S>& q) {
  const S xx = q.x * q.x, yy = q.y * q.y, zz = q.z * q.z;
  const S xy = q.x * q.y, xz = q.x * q.z, yz = q.y * q.z;
  const S wx = q.w * q.x, wy = q.w * q.y, wz = q.w * q.z;
  return {S(1.0) - S(2.0) * (yy + zz), S(2.0) * (xy - wz), S(2.0) * (xz + wy),
          S(2.0) * (xy + wz), S(1.0) - S(2.0) * (xx + zz), S(2.0) * (yz - wx),
          S(2.0) * (xz - wy), S(2.0) * (yz + wx), S(1.0) - S(2.0) * (xx + yy)};
}

template <class S>
V3<S> mul_t(const std::array<S, 9>& r, const V3<S>& v) {  // r^T v
  return {r[0] * v[0] + r[3] * v[1] + r[6] * v[2], r[1] * v[0] + r[4] * v[1] + r[7] * v[2],
          r[2] * v[0] + r[5] * v[1] + r[8] * v[2]};
}

template <class S>
QuatT<S> exp_q(const V3<S>& phi) {
  const S th2 = phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2];
  if (value_of(th2) < 1e-16) {
    return qnormalize(QuatT<S>{S(1.0) - th2 / S(8.0), S(0.5) * phi[0], S(0.5) * phi[1], S(0.5) * phi[2]});
  }
  const S th = sqrt_s(th2);
  const S k = sin_s(S(0.5) * th) / th;
  return qnormalize(QuatT<S>{cos_s(S(0.5) * th), k * phi[0], k * phi[1], k * phi[2]});
}

template <class S>
V3<S> log_q(const QuatT<S>& q_in) {
  QuatT<S> q = q_in;
  if (value_of(q.w) < 0.0) q = {-q.w, -q.x, -q.y, -q.z};
  const S s2 = q.x * q.x + q.y * q.y + q.z * q.z;
  S k;
  if (value_of(s2) < 1e-20) {
    k = S(2.0) / q.w * (S(1.0) - s2 / (S(3.0) * q.w * q.w));
  } else {
    const S s = sqrt_s(s2);
    k = S(2.0) * atan2_s(s, q.w) / s;
  }
  return {k * q.x, k * q.y, k * q.z};
}

/// Inverse right Jacobian of SO(3) at rotation vector `th`, row-major.
template <class S>
std::array<S, 9> jr_inv(const V3<S>& th) {
  const S t2 = th[0] * th[0] + th[1] * th[1] + th[2] * th[2];
  const std::array<S, 9> k = {S(0.0), -th[2], th[1], th[2], S(0.0), -th[0], -th[1], th[0], S(0.0)};
  std::array<S, 9> k2{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      S acc(0.0);
      for (int m = 0; m < 3; ++m) acc = acc + k[r * 3 + m] * k[m * 3 + c];
      k2[r * 3 + c] = acc;
    }
  }
  S coef;
  if (value_of(t2) < 1e-10) {
    coef = S(1.0 / 12.0) + t2 / S(720.0);
  } else {
    const S t = sqrt_s(t2);
    coef = S(1.0) / t2 - (S(1.0) + cos_s(t)) / (S(2.0) * t * sin_s(t));
  }
  std::array<S, 9> out{};
  for (int i = 0; i < 9; ++i) out[i] = S(0.5) * k[i] + coef * k2[i];
  out[0] = out[0] + S(1.0);
  out[4] = out[4] + S(1.0);
  out[8] = out[8] + S(1.0);
  return out;
}

template <class S>
struct MutualT {
  int i, j;
  V3<S> meas;
  V3<S> info;
};
template <class S>
struct PriorT {
  int robot;
  QuatT<S> q;
  V3<S> t;
  V3<S> info_t;
  V3<S> info_r;
};
template <class S>
struct RangeT {
  int i, j;
  S d;
  S info;
};

template <class S>
struct Problem {
  int n_robots = 0;
  std::vector<int> slot;  // robot -> variable slot, -1 for the reference
  std::vector<MutualT<S>> mutual;
  std::vector<PriorT<S>> prior;
  std::vector<RangeT<S>> range;
  int dim() const { return 6 * (n_robots - 1); }
};

template <class S>
QuatT<S> to_q(const Quat& q) {
  return {S(q.w()), S(q.x()), S(q.y()), S(q.z())};
}

// Residual blocks; J has r rows and 6 columns per touched variable.
template <class S>
struct Block {
  int slot;
  std::array<S, 18> j{};  // up to 3 x 6
};

// Accumulates one factor with residual e (dim r), diagonal weights w and
// Jacobian blocks.
template <class S>
void accumulate(int r, const S* e, const S* w, const Block<S>* blocks, int nb, int dim, std::vector<S>& h,
                std::vector<S>& g) {
  for (int a = 0; a < nb; ++a) {
    const int ra = blocks[a].slot * 6;
    for (int c = 0; c < 6; ++c) {
      S acc(0.0);
      for (int k = 0; k < r; ++k) acc = acc + blocks[a].j[k * 6 + c] * w[k] * e[k];
      g[ra + c] = g[ra + c] + acc;
    }
    for (int b = 0; b < nb; ++b) {
      const int rb = blocks[b].slot * 6;
      for (int c = 0; c < 6; ++c) {
        for (int d = 0; d < 6; ++d) {
          S acc(0.0);
          for (int k = 0; k < r; ++k) acc = acc + blocks[a].j[k * 6 + c] * w[k] * blocks[b].j[k * 6 + d];
          h[(ra + c) * dim + rb + d] = h[(ra + c) * dim + rb + d] + acc;
        }
      }
    }
  }
}

template <class S>
V3<S> mutual_residual(const MutualT<S>& f, const std::vector<PoseT<S>>& x, V3<S>* w_out = nullptr) {
  const auto r = rotmat(x[f.i].q);
  const V3<S> delta{x[f.j].t[0] - x[f.i].t[0], x[f.j].t[1] - x[f.i].t[1], x[f.j].t[2] - x[f.i].t[2]};
  const V3<S> w = mul_t(r, delta);
  if (w_out) *w_out = w;
  return {f.meas[0] - w[0], f.meas[1] - w[1], f.meas[2] - w[2]};
}

template <class S>
std::array<S, 6> prior_residual(const PriorT<S>& f, const std::vector<PoseT<S>>& x) {
  const PoseT<S>& p = x[f.robot];
  const V3<S> er = log_q(qmul(qconj(f.q), p.q));
  return {f.t[0] - p.t[0], f.t[1] - p.t[1], f.t[2] - p.t[2], er[0], er[1], er[2]};
}

template <class S>
S range_norm(const RangeT<S>& f, const std::vector<PoseT<S>>& x, V3<S>* delta_out = nullptr) {
  const V3<S> d{x[f.i].t[0] - x[f.j].t[0], x[f.i].t[1] - x[f.j].t[1], x[f.i].t[2] - x[f.j].t[2]};
  if (delta_out) *delta_out = d;
  return sqrt_s(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
}

template <class S>
S cost(const Problem<S>& p, const std::vector<PoseT<S>>& x) {
  S c(0.0);
  for (const auto& f : p.mutual) {
    const V3<S> e = mutual_residual(f, x);
    for (int k = 0; k < 3; ++k) c = c + f.info[k] * e[k] * e[k];
  }
  for (const auto& f : p.prior) {
    const auto e = prior_residual(f, x);
    for (int k = 0; k < 3; ++k) c = c + f.info_t[k] * e[k] * e[k] + f.info_r[k] * e[3 + k] * e[3 + k];
  }
  for (const auto& f : p.range) {
    const S e = f.d - range_norm(f, x);
    c = c + f.info * e * e;
  }
  return c;
}

template <class S>
void linearize(const Problem<S>& p, const std::vector<PoseT<S>>& x, std::vector<S>& h, std::vector<S>& g) {
  const int dim = p.dim();
  h.assign(static_cast<std::size_t>(dim) * dim, S(0.0));
  g.assign(dim, S(0.0));
  Block<S> blocks[2];
  for (const auto& f : p.mutual) {
    V3<S> w;
    const V3<S> e = mutual_residual(f, x, &w);
    const auto r = rotmat(x[f.i].q);
    int nb = 0;
    if (p.slot[f.j] >= 0) {
      Block<S>& b = blocks[nb++];
      b = Block<S>{p.slot[f.j], {}};
      for (int k = 0; k < 3; ++k) {
        for (int c = 0; c < 3; ++c) b.j[k * 6 + c] = -r[c * 3 + k];
      }
    }
    if (p.slot[f.i] >= 0) {
      Block<S>& b = blocks[nb++];
      b = Block<S>{p.slot[f.i], {}};
      // d e / d t_i = R^T, d e / d phi_i = -[w]x
      for (int k = 0; k < 3; ++k) {
        for (int c = 0; c < 3; ++c) b.j[k * 6 + c] = r[c * 3 + k];
      }
      b.j[0 * 6 + 4] = w[2];
      b.j[0 * 6 + 5] = -w[1];
      b.j[1 * 6 + 3] = -w[2];
      b.j[1 * 6 + 5] = w[0];
      b.j[2 * 6 + 3] = w[1];
      b.j[2 * 6 + 4] = -w[0];
    }
    accumulate(3, e.data(), f.info.data(), blocks, nb, dim, h, g);
  }
  for (const auto& f : p.prior) {
    if (p.slot[f.robot] < 0) continue;
    const auto e = prior_residual(f, x);
    const V3<S> er{e[3], e[4], e[5]};
    const auto ji = jr_inv(er);
    Block<S> bt{p.slot[f.robot], {}};
    for (int k = 0; k < 3; ++k) bt.j[k * 6 + k] = S(-1.0);
    accumulate(3, e.data(), f.info_t.data(), &bt, 1, dim, h, g);
    Block<S> br{p.slot[f.robot], {}};
    for (int k = 0; k < 3; ++k) {
      for (int c = 0; c < 3; ++c) br.j[k * 6 + 3 + c] = ji[k * 3 + c];
    }
    accumulate(3, e.data() + 3, f.info_r.data(), &br, 1, dim, h, g);
  }
  for (const auto& f : p.range) {
    V3<S> d;
    const S nrm = range_norm(f, x, &d);
    if (value_of(nrm) < 1e-6) continue;  // direction undefined; skip this iteration
    const S e = f.d - nrm;
    int nb = 0;
    if (p.slot[f.i] >= 0) {
      Block<S>& b = blocks[nb++];
      b = Block<S>{p.slot[f.i], {}};
      for (int c = 0; c < 3; ++c) b.j[c] = -d[c] / nrm;
    }
    if (p.slot[f.j] >= 0) {
      Block<S>& b = blocks[nb++];
      b = Block<S>{p.slot[f.j], {}};
      for (int c = 0; c < 3; ++c) b.j[c] = d[c] / nrm;
    }
    accumulate(1, &e, &f.info, blocks, nb, dim, h, g);
  }
}

/// Solves A x = b for symmetric positive definite A (row-major, n x n).
/// Returns false when a pivot is not safely positive.
template <class S>
bool cholesky_solve(std::vector<S> a, std::vector<S> b, int n, std::vector<S>& x) {
  double max_diag = 0.0;
  for (int i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(value_of(a[i * n + i])));
  const double floor = std::max(1e-300, 1e-14 * max_diag);
  for (int j = 0; j < n; ++j) {
    S d = a[j * n + j];
    for (int k = 0; k < j; ++k) d = d - a[j * n + k] * a[j * n + k];
    if (!(value_of(d) > floor) || !std::isfinite(value_of(d))) return false;
    const S l = sqrt_s(d);
    a[j * n + j] = l;
    for (int i = j + 1; i < n; ++i) {
      S s = a[i * n + j];
      for (int k = 0; k < j; ++k) s = s - a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / l;
    }
  }
  for (int i = 0; i < n; ++i) {
    S s = b[i];
    for (int k = 0; k < i; ++k) s = s - a[i * n + k] * b[k];
    b[i] = s / a[i * n + i];
  }
  for (int i = n; i-- > 0;) {
    S s = b[i];
    for (int k = i + 1; k < n; ++k) s = s - a[k * n + i] * b[k];
    b[i] = s / a[i * n + i];
  }
  x = std::move(b);
  return true;
}

template <class S>
std::vector<PoseT<S>> retract(const Problem<S>& p, const std::vector<PoseT<S>>& x, const std::vector<S>& dx) {
  std::vector<PoseT<S>> out = x;
  for (int r = 0; r < p.n_robots; ++r) {
    const int s = p.slot[r];
    if (s < 0) continue;
    for (int k = 0; k < 3; ++k) out[r].t[k] = x[r].t[k] + dx[s * 6 + k];
    const V3<S> phi{dx[s * 6 + 3], dx[s * 6 + 4], dx[s * 6 + 5]};
    out[r].q = qnormalize(qmul(x[r].q, exp_q(phi)));
  }
  return out;
}

struct RunStats {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  int accepted = 0;
  bool converged = false;
  std::vector<double> trace;
};

/// Runs LM until convergence, max_iters solves, or max_accepted accepted
/// steps (negative = unlimited).
template <class S>
std::vector<PoseT<S>> run(const Problem<S>& p, std::vector<PoseT<S>> x, const LMSettings& s, int max_accepted,
                          RunStats& stats) {
  S c = cost(p, x);
  stats = RunStats{};
  stats.initial_cost = value_of(c);
  stats.trace.push_back(value_of(c));
  const int dim = p.dim();
  double lambda = s.lambda0;
  std::vector<S> h, g, dx;
  bool relinearize = true;
  bool solved_once = false;
  while (stats.iterations < s.max_iters && (max_accepted < 0 || stats.accepted < max_accepted)) {
    if (relinearize) {
      linearize(p, x, h, g);
      relinearize = false;
    }
    ++stats.iterations;
    std::vector<S> a = h;
    for (int i = 0; i < dim; ++i) {
      const S dv = value_of(h[i * dim + i]) > 1e-6 ? h[i * dim + i] : S(1e-6);
      a[i * dim + i] = a[i * dim + i] + S(lambda) * dv;
    }
    std::vector<S> rhs(dim);
    for (int i = 0; i < dim; ++i) rhs[i] = -g[i];
    if (!cholesky_solve(std::move(a), std::move(rhs), dim, dx)) {
      lambda *= s.lambda_up;
      if (lambda > s.lambda_max) break;
      continue;
    }
    solved_once = true;
    double step = 0.0;
    for (const S& d : dx) step = std::max(step, std::abs(value_of(d)));
    if (step < 1e-12) {  // already at a stationary point, up to roundoff
      stats.converged = true;
      break;
    }
    std::vector<PoseT<S>> xn = retract(p, x, dx);
    const S cn = cost(p, xn);
    if (value_of(cn) <= value_of(c)) {
      const double drop = value_of(c) - value_of(cn);
      x = std::move(xn);
      c = cn;
      ++stats.accepted;
      stats.trace.push_back(value_of(c));
      lambda = std::max(lambda * s.lambda_down, 1e-12);
      relinearize = true;
      if (drop <= s.tol * std::max(value_of(c), 1e-300) || value_of(c) == 0.0) {
        stats.converged = true;
        break;
      }
    } else {
      lambda *= s.lambda_up;
      if (lambda > s.lambda_max) {
        stats.converged = true;  // no further descent available at this point
        break;
      }
    }
  }
  if (!solved_once && stats.iterations > 0) {
    throw SolverError("lm_solve: normal equations singular at every damping level");
  }
  stats.final_cost = value_of(c);
  return x;
}

}  // namespace swarmloc::pgo::detail
