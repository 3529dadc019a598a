#include "swarmloc/ad/ops.hpp"

#include <algorithm>
#include <memory>
#include <cmath>
#include <limits>
#include <string>

#include "swarmloc/error.hpp"

namespace swarmloc::ad {
namespace {

std::string shape_str(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

Tape& common_tape(const Var& a, const Var& b) {
  if (!a.valid() || !b.valid() || a.tape() != b.tape()) {
    throw Error("operands live on different tapes");
  }
  return *a.tape();
}

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (!a.value().same_shape(b.value())) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.value()) + " vs " +
                     shape_str(b.value()));
  }
}

bool needs(const Tape& t, const Var& v) { return t.requires_grad(v); }

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: " + shape_str(av) + " times " + shape_str(bv));
  }
  Tensor out(av.rows(), bv.cols());
  out.map().noalias() = av.map() * bv.map();
  const std::size_t ia = a.id(), ib = b.id();
  const bool ga = needs(t, a), gb = needs(t, b);
  return t.record(std::move(out), ga || gb, [ia, ib, ga, gb](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_view(self);
    if (ga) tp.grad(ia).map().noalias() += g.map() * tp.value(ib).map().transpose();
    if (gb) tp.grad(ib).map().noalias() += tp.value(ia).map().transpose() * g.map();
  });
}

namespace {

enum class Binary { Add, Sub, Mul, Div };

Var binary(Binary kind, const char* name, const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  require_same_shape(name, a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.rows(), av.cols());
  switch (kind) {
    case Binary::Add: out.map() = av.map() + bv.map(); break;
    case Binary::Sub: out.map() = av.map() - bv.map(); break;
    case Binary::Mul: out.map() = av.map().cwiseProduct(bv.map()); break;
    case Binary::Div: out.map() = av.map().cwiseQuotient(bv.map()); break;
  }
  const std::size_t ia = a.id(), ib = b.id();
  const bool ga = needs(t, a), gb = needs(t, b);
  return t.record(std::move(out), ga || gb, [=](Tape& tp, std::size_t self) {
    const auto g = tp.grad_view(self).map();
    switch (kind) {
      case Binary::Add:
        if (ga) tp.grad(ia).map() += g;
        if (gb) tp.grad(ib).map() += g;
        break;
      case Binary::Sub:
        if (ga) tp.grad(ia).map() += g;
        if (gb) tp.grad(ib).map() -= g;
        break;
      case Binary::Mul:
        if (ga) tp.grad(ia).map() += g.cwiseProduct(tp.value(ib).map());
        if (gb) tp.grad(ib).map() += g.cwiseProduct(tp.value(ia).map());
        break;
      case Binary::Div: {
        const auto bvv = tp.value(ib).map();
        if (ga) tp.grad(ia).map() += g.cwiseQuotient(bvv);
        if (gb) {
          tp.grad(ib).map() -=
              g.cwiseProduct(tp.value(ia).map()).cwiseQuotient(bvv.cwiseProduct(bvv));
        }
        break;
      }
    }
  });
}

}  // namespace

Var add(const Var& a, const Var& b) { return binary(Binary::Add, "add", a, b); }
Var sub(const Var& a, const Var& b) { return binary(Binary::Sub, "sub", a, b); }
Var mul(const Var& a, const Var& b) { return binary(Binary::Mul, "mul", a, b); }
Var div(const Var& a, const Var& b) { return binary(Binary::Div, "div", a, b); }

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double s) {
  Tape& t = *a.tape();
  Tensor out(a.rows(), a.cols());
  out.map() = a.value().map() * s;
  const std::size_t ia = a.id();
  return t.record(std::move(out), needs(t, a), [ia, s](Tape& tp, std::size_t self) {
    tp.grad(ia).map() += tp.grad_view(self).map() * s;
  });
}

Var add_scalar(const Var& a, double s) {
  Tape& t = *a.tape();
  Tensor out(a.rows(), a.cols());
  out.map() = a.value().map().array() + s;
  const std::size_t ia = a.id();
  return t.record(std::move(out), needs(t, a), [ia](Tape& tp, std::size_t self) {
    tp.grad(ia).map() += tp.grad_view(self).map();
  });
}

Var add_row(const Var& a, const Var& row) {
  Tape& t = common_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeError("add_row: " + shape_str(a.value()) + " plus row " + shape_str(row.value()));
  }
  Tensor out(a.rows(), a.cols());
  out.map() = a.value().map().rowwise() + row.value().map().row(0);
  const std::size_t ia = a.id(), ir = row.id();
  const bool ga = needs(t, a), gr = needs(t, row);
  return t.record(std::move(out), ga || gr, [=](Tape& tp, std::size_t self) {
    const auto g = tp.grad_view(self).map();
    if (ga) tp.grad(ia).map() += g;
    if (gr) tp.grad(ir).map() += g.colwise().sum();
  });
}

Var add_col(const Var& a, const Var& col) {
  Tape& t = common_tape(a, col);
  if (col.cols() != 1 || col.rows() != a.rows()) {
    throw ShapeError("add_col: " + shape_str(a.value()) + " plus column " + shape_str(col.value()));
  }
  Tensor out(a.rows(), a.cols());
  out.map() = a.value().map().colwise() + col.value().map().col(0);
  const std::size_t ia = a.id(), ic = col.id();
  const bool ga = needs(t, a), gc = needs(t, col);
  return t.record(std::move(out), ga || gc, [=](Tape& tp, std::size_t self) {
    const auto g = tp.grad_view(self).map();
    if (ga) tp.grad(ia).map() += g;
    if (gc) tp.grad(ic).map() += g.rowwise().sum();
  });
}

Var broadcast(const Var& a, std::size_t rows, std::size_t cols) {
  Tape& t = *a.tape();
  const std::size_t ar = a.rows(), ac = a.cols();
  const bool ok = (ar == 1 || ar == rows) && (ac == 1 || ac == cols);
  if (!ok) {
    throw ShapeError("broadcast: cannot expand " + shape_str(a.value()) + " to " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
  Tensor out(rows, cols);
  const Tensor& av = a.value();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      out(r, c) = av(ar == 1 ? 0 : r, ac == 1 ? 0 : c);
    }
  }
  const std::size_t ia = a.id();
  return t.record(std::move(out), needs(t, a), [ia, ar, ac, rows, cols](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_view(self);
    Tensor& ga = tp.grad(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        ga(ar == 1 ? 0 : r, ac == 1 ? 0 : c) += g(r, c);
      }
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Tape& t = *parts.front().tape();
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  bool any = false;
  for (const Var& p : parts) {
    common_tape(parts.front(), p);
    if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p.cols();
    any = any || needs(t, p);
  }
  Tensor out(rows, cols);
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    if (p.cols() > 0) out.map().middleCols(off, p.cols()) = p.value().map();
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.cols();
  }
  return t.record(std::move(out), any, [ids, offsets](Tape& tp, std::size_t self) {
    const auto g = tp.grad_view(self).map();
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tp.requires_grad(Var(&tp, ids[k]))) continue;
      const std::size_t w = tp.value(ids[k]).cols();
      if (w > 0) tp.grad(ids[k]).map() += g.middleCols(offsets[k], w);
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Tape& t = *parts.front().tape();
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  bool any = false;
  for (const Var& p : parts) {
    common_tape(parts.front(), p);
    if (p.cols() != cols) throw ShapeError("concat_rows: column count mismatch");
    rows += p.rows();
    any = any || needs(t, p);
  }
  Tensor out(rows, cols);
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    if (p.rows() > 0) out.map().middleRows(off, p.rows()) = p.value().map();
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.rows();
  }
  return t.record(std::move(out), any, [ids, offsets](Tape& tp, std::size_t self) {
    const auto g = tp.grad_view(self).map();
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tp.requires_grad(Var(&tp, ids[k]))) continue;
      const std::size_t h = tp.value(ids[k]).rows();
      if (h > 0) tp.grad(ids[k]).map() += g.middleRows(offsets[k], h);
    }
  });
}

Var slice(const Var& a, std::size_t row0, std::size_t nrows, std::size_t col0, std::size_t ncols) {
  Tape& t = *a.tape();
  if (row0 + nrows > a.rows() || col0 + ncols > a.cols()) {
    throw ShapeError("slice: block out of range for " + shape_str(a.value()));
  }
  Tensor out(nrows, ncols);
  out.map() = a.value().map().block(row0, col0, nrows, ncols);
  const std::size_t ia = a.id();
  return t.record(std::move(out), needs(t, a), [=](Tape& tp, std::size_t self) {
    tp.grad(ia).map().block(row0, col0, nrows, ncols) += tp.grad_view(self).map();
  });
}

Var transpose(const Var& a) {
  Tape& t = *a.tape();
  Tensor out(a.cols(), a.rows());
  out.map() = a.value().map().transpose();
  const std::size_t ia = a.id();
  return t.record(std::move(out), needs(t, a), [ia](Tape& tp, std::size_t self) {
    tp.grad(ia).map() += tp.grad_view(self).map().transpose();
  });
}

Var take(const Var& a, const std::vector<long>& index, std::size_t rows, std::size_t cols) {
  Tape& t = *a.tape();
  if (index.size() != rows * cols) throw ShapeError("take: index length does not match shape");
  const Tensor& av = a.value();
  Tensor out(rows, cols);
  for (std::size_t k = 0; k < index.size(); ++k) {
    const long ix = index[k];
    if (ix >= static_cast<long>(av.size())) throw ShapeError("take: index out of range");
    out[k] = ix < 0 ? 0.0 : av[static_cast<std::size_t>(ix)];
  }
  const std::size_t ia = a.id();
  return t.record(std::move(out), needs(t, a), [ia, index](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_view(self);
    Tensor& ga = tp.grad(ia);
    for (std::size_t k = 0; k < index.size(); ++k) {
      if (index[k] >= 0) ga[static_cast<std::size_t>(index[k])] += g[k];
    }
  });
}

Var relu(const Var& a) {
  Tape& t = *a.tape();
  Tensor out(a.rows(), a.cols());
  out.map() = a.value().map().cwiseMax(0.0);
  const std::size_t ia = a.id();
  return t.record(std::move(out), needs(t, a), [ia](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_view(self);
    const Tensor& x = tp.value(ia);
    Tensor& ga = tp.grad(ia);
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (x[k] > 0.0) ga[k] += g[k];
    }
  });
}

Var exp(const Var& a) {
  Tape& t = *a.tape();
  Tensor out(a.rows(), a.cols());
  out.map() = a.value().map().array().exp();
  const std::size_t ia = a.id();
  return t.record(std::move(out), needs(t, a), [ia](Tape& tp, std::size_t self) {
    tp.grad(ia).map() += tp.grad_view(self).map().cwiseProduct(tp.value(self).map());
  });
}

Var log(const Var& a) {
  Tape& t = *a.tape();
  Tensor out(a.rows(), a.cols());
  out.map() = a.value().map().array().log();
  const std::size_t ia = a.id();
  return t.record(std::move(out), needs(t, a), [ia](Tape& tp, std::size_t self) {
    tp.grad(ia).map() += tp.grad_view(self).map().cwiseQuotient(tp.value(ia).map());
  });
}

Var square(const Var& a) {
  Tape& t = *a.tape();
  Tensor out(a.rows(), a.cols());
  out.map() = a.value().map().array().square();
  const std::size_t ia = a.id();
  return t.record(std::move(out), needs(t, a), [ia](Tape& tp, std::size_t self) {
    tp.grad(ia).map() += 2.0 * tp.grad_view(self).map().cwiseProduct(tp.value(ia).map());
  });
}

Var clamp(const Var& a, double lo, double hi) {
  if (!(lo <= hi)) throw Error("clamp: lower bound exceeds upper bound");
  Tape& t = *a.tape();
  Tensor out(a.rows(), a.cols());
  out.map() = a.value().map().cwiseMax(lo).cwiseMin(hi);
  const std::size_t ia = a.id();
  return t.record(std::move(out), needs(t, a), [ia, lo, hi](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_view(self);
    const Tensor& x = tp.value(ia);
    Tensor& ga = tp.grad(ia);
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (x[k] >= lo && x[k] <= hi) ga[k] += g[k];
    }
  });
}

Var softmax_rows(const Var& a) {
  Tape& t = *a.tape();
  const Tensor& x = a.value();
  Tensor out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < x.cols(); ++c) mx = std::max(mx, x(r, c));
    double s = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      out(r, c) = std::exp(x(r, c) - mx);
      s += out(r, c);
    }
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) /= s;
  }
  const std::size_t ia = a.id();
  return t.record(std::move(out), needs(t, a), [ia](Tape& tp, std::size_t self) {
    const auto g = tp.grad_view(self).map();
    const auto y = tp.value(self).map();
    const Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    tp.grad(ia).map() += y.cwiseProduct((g.colwise() - dot));
  });
}

namespace {

// Stable log-sum-exp along rows (axis = 1) or columns (axis = 0).
Tensor lse(const Tensor& x, int axis) {
  const std::size_t n_out = axis == 1 ? x.rows() : x.cols();
  const std::size_t n_in = axis == 1 ? x.cols() : x.rows();
  Tensor out = axis == 1 ? Tensor(x.rows(), 1) : Tensor(1, x.cols());
  for (std::size_t o = 0; o < n_out; ++o) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n_in; ++i) {
      mx = std::max(mx, axis == 1 ? x(o, i) : x(i, o));
    }
    if (!std::isfinite(mx)) {
      out[o] = mx;
      continue;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < n_in; ++i) {
      s += std::exp((axis == 1 ? x(o, i) : x(i, o)) - mx);
    }
    out[o] = mx + std::log(s);
  }
  return out;
}

}  // namespace

Var logsumexp_rows(const Var& a) {
  Tape& t = *a.tape();
  Tensor out = lse(a.value(), 1);
  const std::size_t ia = a.id();
  return t.record(std::move(out), needs(t, a), [ia](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_view(self);
    const Tensor& x = tp.value(ia);
    const Tensor& y = tp.value(self);
    Tensor& ga = tp.grad(ia);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      if (!std::isfinite(y[r])) continue;
      for (std::size_t c = 0; c < x.cols(); ++c) ga(r, c) += g[r] * std::exp(x(r, c) - y[r]);
    }
  });
}

Var logsumexp_cols(const Var& a) {
  Tape& t = *a.tape();
  Tensor out = lse(a.value(), 0);
  const std::size_t ia = a.id();
  return t.record(std::move(out), needs(t, a), [ia](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_view(self);
    const Tensor& x = tp.value(ia);
    const Tensor& y = tp.value(self);
    Tensor& ga = tp.grad(ia);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (std::size_t c = 0; c < x.cols(); ++c) {
        if (std::isfinite(y[c])) ga(r, c) += g[c] * std::exp(x(r, c) - y[c]);
      }
    }
  });
}

Var sum(const Var& a) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.record(Tensor::scalar(a.value().map().sum()), needs(t, a),
                  [ia](Tape& tp, std::size_t self) {
                    tp.grad(ia).map().array() += tp.grad_view(self)[0];
                  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0.0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var sum_over_rows(const Var& a) {
  Tape& t = *a.tape();
  Tensor out(1, a.cols());
  out.map() = a.value().map().colwise().sum();
  const std::size_t ia = a.id();
  return t.record(std::move(out), needs(t, a), [ia](Tape& tp, std::size_t self) {
    tp.grad(ia).map().rowwise() += tp.grad_view(self).map().row(0);
  });
}

Var sum_over_cols(const Var& a) {
  Tape& t = *a.tape();
  Tensor out(a.rows(), 1);
  out.map() = a.value().map().rowwise().sum();
  const std::size_t ia = a.id();
  return t.record(std::move(out), needs(t, a), [ia](Tape& tp, std::size_t self) {
    tp.grad(ia).map().colwise() += tp.grad_view(self).map().col(0);
  });
}

Var l2norm(const Var& a) {
  Tape& t = *a.tape();
  const double n = a.value().map().norm();
  const std::size_t ia = a.id();
  return t.record(Tensor::scalar(n), needs(t, a), [ia](Tape& tp, std::size_t self) {
    const double y = tp.value(self)[0];
    if (y == 0.0) return;
    tp.grad(ia).map() += tp.value(ia).map() * (tp.grad_view(self)[0] / y);
  });
}

Var range_attention(const Var& q, const Var& k, const Var& v, const std::vector<KeyRange>& ranges,
                    double scale) {
  Tape& t = common_tape(q, k);
  common_tape(q, v);
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  if (qv.cols() != kv.cols() || kv.rows() != vv.rows() || ranges.size() != qv.rows()) {
    throw ShapeError("range_attention: inconsistent shapes q " + shape_str(qv) + " k " +
                     shape_str(kv) + " v " + shape_str(vv));
  }
  for (const auto& [b, e] : ranges) {
    if (b > e || e > kv.rows()) throw ShapeError("range_attention: key range out of bounds");
  }
  const std::size_t n = qv.rows();
  const std::size_t dv = vv.cols();
  Tensor out(n, dv);
  // Attention weights, stored contiguously per query row.
  std::vector<std::size_t> offset(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) offset[i + 1] = offset[i] + (ranges[i].second - ranges[i].first);
  auto weights = std::make_shared<std::vector<double>>(offset[n]);
  auto out_map = out.map();
  const auto qm = qv.map();
  const auto km = kv.map();
  const auto vm = vv.map();
  for (std::size_t i = 0; i < n; ++i) {
    const auto [b, e] = ranges[i];
    if (b == e) continue;
    double* w = weights->data() + offset[i];
    const std::size_t len = e - b;
    Eigen::Map<Eigen::VectorXd> wv(w, static_cast<Eigen::Index>(len));
    wv.noalias() = km.middleRows(b, len) * qm.row(i).transpose();
    wv *= scale;
    const double mx = wv.maxCoeff();
    wv = (wv.array() - mx).exp();
    wv /= wv.sum();
    out_map.row(i).noalias() = wv.transpose() * vm.middleRows(b, len);
  }
  const std::size_t iq = q.id(), ik = k.id(), iv = v.id();
  const bool gq = needs(t, q), gk = needs(t, k), gv = needs(t, v);
  return t.record(std::move(out), gq || gk || gv,
                  [=, offset = std::move(offset)](Tape& tp, std::size_t self) {
                    const auto g = tp.grad_view(self).map();
                    const auto qmm = tp.value(iq).map();
                    const auto kmm = tp.value(ik).map();
                    const auto vmm = tp.value(iv).map();
                    Tensor* dq = gq ? &tp.grad(iq) : nullptr;
                    Tensor* dk = gk ? &tp.grad(ik) : nullptr;
                    Tensor* dvv = gv ? &tp.grad(iv) : nullptr;
                    Eigen::VectorXd da;
                    for (std::size_t i = 0; i < ranges.size(); ++i) {
                      const auto [b, e] = ranges[i];
                      if (b == e) continue;
                      const std::size_t len = e - b;
                      Eigen::Map<const Eigen::VectorXd> w(weights->data() + offset[i],
                                                          static_cast<Eigen::Index>(len));
                      if (dvv) dvv->map().middleRows(b, len).noalias() += w * g.row(i);
                      if (!dq && !dk) continue;
                      da.noalias() = vmm.middleRows(b, len) * g.row(i).transpose();
                      const double mix = w.dot(da);
                      const Eigen::VectorXd ds = (w.array() * (da.array() - mix)).matrix() * scale;
                      if (dq) dq->map().row(i).noalias() += ds.transpose() * kmm.middleRows(b, len);
                      if (dk) dk->map().middleRows(b, len).noalias() += ds * qmm.row(i);
                    }
                  });
}

Var custom(const std::vector<Var>& inputs, Tensor value, CustomVjp vjp) {
  if (inputs.empty()) throw Error("custom: at least one input required");
  Tape& t = *inputs.front().tape();
  std::vector<std::size_t> ids;
  bool any = false;
  for (const Var& v : inputs) {
    common_tape(inputs.front(), v);
    ids.push_back(v.id());
    any = any || needs(t, v);
  }
  return t.record(std::move(value), any, [ids, vjp = std::move(vjp)](Tape& tp, std::size_t self) {
    std::vector<Tensor*> grads;
    std::vector<Tensor> scratch(ids.size());
    grads.reserve(ids.size());
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tp.requires_grad(Var(&tp, ids[k]))) {
        grads.push_back(&tp.grad(ids[k]));
      } else {
        scratch[k] = Tensor(tp.value(ids[k]).rows(), tp.value(ids[k]).cols());
        grads.push_back(&scratch[k]);
      }
    }
    vjp(tp.grad_view(self), grads);
  });
}

}  // namespace swarmloc::ad
