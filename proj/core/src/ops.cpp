#include "pathohr/numeric/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pathohr/error.hpp"
#include "pathohr/numeric/kernels.hpp"

namespace pathohr::ad {

namespace {

void same_tape(Var a, Var b, const char* what) {
  if (&a.tape() != &b.tape()) throw Error(std::string(what) + ": variables on different tapes");
}

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

template <typename F>
Var unary_elementwise(Var a, F&& f, double (*df)(double x, double y)) {
  Tape& t = a.tape();
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y.data()[i] = f(x.data()[i]);
  return t.record(std::move(y), {a}, [a, df](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    const Matrix& xv = tp.value(a);
    const Matrix& yv = tp.value(self);
    Matrix* ga = tp.grad_slot(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga->data()[i] += g.data()[i] * df(xv.data()[i], yv.data()[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  same_tape(a, b, "matmul");
  Tape& t = a.tape();
  Matrix out = pathohr::matmul(a.value(), b.value());
  t.add_macs(static_cast<std::uint64_t>(a.rows()) * a.cols() * b.cols());
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    if (Matrix* ga = tp.grad_slot(a)) *ga += matmul_nt(g, tp.value(b));
    if (Matrix* gb = tp.grad_slot(b)) *gb += matmul_tn(tp.value(a), g);
  });
}

Var matmul_nt(Var a, Var b) {
  same_tape(a, b, "matmul_nt");
  Tape& t = a.tape();
  Matrix out = pathohr::matmul_nt(a.value(), b.value());
  t.add_macs(static_cast<std::uint64_t>(a.rows()) * a.cols() * b.rows());
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    if (Matrix* ga = tp.grad_slot(a)) *ga += pathohr::matmul(g, tp.value(b));
    if (Matrix* gb = tp.grad_slot(b)) *gb += matmul_tn(g, tp.value(a));
  });
}

Var transpose(Var a) {
  return a.tape().record(a.value().transposed(), {a}, [a](Tape& tp, std::size_t self) {
    *tp.grad_slot(a) += tp.upstream(self).transposed();
  });
}

Var add(Var a, Var b) {
  same_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "ad::add");
  Matrix out = a.value();
  out += b.value();
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    if (Matrix* ga = tp.grad_slot(a)) *ga += g;
    if (Matrix* gb = tp.grad_slot(b)) *gb += g;
  });
}

Var sub(Var a, Var b) {
  same_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "ad::sub");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.value().data()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    if (Matrix* ga = tp.grad_slot(a)) *ga += g;
    if (Matrix* gb = tp.grad_slot(b))
      for (std::size_t i = 0; i < g.size(); ++i) gb->data()[i] -= g.data()[i];
  });
}

Var hadamard(Var a, Var b) {
  same_tape(a, b, "hadamard");
  require_same_shape(a.value(), b.value(), "ad::hadamard");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.value().data()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    const Matrix& av = tp.value(a);
    const Matrix& bv = tp.value(b);
    if (Matrix* ga = tp.grad_slot(a))
      for (std::size_t i = 0; i < g.size(); ++i) ga->data()[i] += g.data()[i] * bv.data()[i];
    if (Matrix* gb = tp.grad_slot(b))
      for (std::size_t i = 0; i < g.size(); ++i) gb->data()[i] += g.data()[i] * av.data()[i];
  });
}

Var add_row(Var a, Var row) {
  same_tape(a, row, "add_row");
  const Matrix& r = row.value();
  if (r.rows() != 1 || r.cols() != a.cols()) {
    throw DimensionError("add_row: row " + shape(r) + " vs matrix " + shape(a.value()));
  }
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += r(0, c);
  }
  return a.tape().record(std::move(out), {a, row}, [a, row](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    if (Matrix* ga = tp.grad_slot(a)) *ga += g;
    if (Matrix* gr = tp.grad_slot(row))
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t c = 0; c < g.cols(); ++c) (*gr)(0, c) += g(i, c);
  });
}

Var scale(Var a, double s) {
  Matrix out = a.value();
  for (double& v : out.data()) v *= s;
  return a.tape().record(std::move(out), {a}, [a, s](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    Matrix* ga = tp.grad_slot(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga->data()[i] += s * g.data()[i];
  });
}

Var scale_by(Var a, Var s) {
  same_tape(a, s, "scale_by");
  if (s.rows() != 1 || s.cols() != 1) throw DimensionError("scale_by: scalar must be 1x1, got " + shape(s.value()));
  const double sv = s.value()(0, 0);
  Matrix out = a.value();
  for (double& v : out.data()) v *= sv;
  return a.tape().record(std::move(out), {a, s}, [a, s](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    const double scalar = tp.value(s)(0, 0);
    if (Matrix* ga = tp.grad_slot(a))
      for (std::size_t i = 0; i < g.size(); ++i) ga->data()[i] += scalar * g.data()[i];
    if (Matrix* gs = tp.grad_slot(s)) {
      const Matrix& av = tp.value(a);
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g.data()[i] * av.data()[i];
      (*gs)(0, 0) += acc;
    }
  });
}

Var linear(Var x, Var weight, Var bias) {
  return add_row(matmul(x, weight), bias);
}

namespace {

// Shared softmax backward: dx = y * (dy - sum(dy * y)) per row.
void softmax_backward(Tape& tp, std::size_t self, Var a) {
  const Matrix& g = tp.upstream(self);
  const Matrix& y = tp.value(self);
  Matrix* ga = tp.grad_slot(a);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    double dot = 0.0;
    for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
    for (std::size_t c = 0; c < y.cols(); ++c) (*ga)(r, c) += y(r, c) * (g(r, c) - dot);
  }
}

}  // namespace

Var softmax_rows(Var a) {
  return a.tape().record(pathohr::softmax_rows(a.value()), {a},
                         [a](Tape& tp, std::size_t self) { softmax_backward(tp, self, a); });
}

Var masked_softmax_rows(Var a, const Matrix& mask) {
  const Matrix& x = a.value();
  require_same_shape(x, mask, "masked_softmax_rows");
  if (x.empty()) throw DimensionError("masked_softmax_rows: empty matrix");
  Matrix y(x.rows(), x.cols());
  std::vector<char> live(x.rows(), 0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mx = -INFINITY;
    for (std::size_t c = 0; c < x.cols(); ++c)
      if (mask(r, c) != 0.0) mx = std::max(mx, x(r, c));
    if (mx == -INFINITY) {
      for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) = 1.0 / static_cast<double>(x.cols());
      continue;
    }
    live[r] = 1;
    double total = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      y(r, c) = mask(r, c) != 0.0 ? std::exp(x(r, c) - mx) : 0.0;
      total += y(r, c);
    }
    for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) /= total;
  }
  return a.tape().record(std::move(y), {a}, [a, live = std::move(live)](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    const Matrix& yv = tp.value(self);
    Matrix* ga = tp.grad_slot(a);
    for (std::size_t r = 0; r < yv.rows(); ++r) {
      if (!live[r]) continue;
      double dot = 0.0;
      for (std::size_t c = 0; c < yv.cols(); ++c) dot += g(r, c) * yv(r, c);
      for (std::size_t c = 0; c < yv.cols(); ++c) (*ga)(r, c) += yv(r, c) * (g(r, c) - dot);
    }
  });
}

Var normalize_row_sums(Var a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  std::vector<double> sums(x.rows(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) sums[r] += x(r, c);
    for (std::size_t c = 0; c < x.cols(); ++c)
      y(r, c) = sums[r] > 0.0 ? x(r, c) / sums[r] : 1.0 / static_cast<double>(x.cols());
  }
  return a.tape().record(std::move(y), {a}, [a, sums = std::move(sums)](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    const Matrix& yv = tp.value(self);
    Matrix* ga = tp.grad_slot(a);
    for (std::size_t r = 0; r < yv.rows(); ++r) {
      if (!(sums[r] > 0.0)) continue;
      double dot = 0.0;
      for (std::size_t c = 0; c < yv.cols(); ++c) dot += g(r, c) * yv(r, c);
      for (std::size_t c = 0; c < yv.cols(); ++c) (*ga)(r, c) += (g(r, c) - dot) / sums[r];
    }
  });
}

Var apply_mask(Var a, const Matrix& mask) {
  require_same_shape(a.value(), mask, "apply_mask");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= mask.data()[i];
  return a.tape().record(std::move(out), {a}, [a, mask](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    Matrix* ga = tp.grad_slot(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga->data()[i] += g.data()[i] * mask.data()[i];
  });
}

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  same_tape(x, gain, "layer_norm_rows");
  same_tape(x, bias, "layer_norm_rows");
  const Matrix& xv = x.value();
  const std::size_t n = xv.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw DimensionError("layer_norm_rows: gain " + shape(gain.value()) + ", bias " + shape(bias.value()) +
                         " vs width " + std::to_string(n));
  }
  if (!(eps > 0.0)) throw ConfigError("layer_norm_rows: eps must be positive");
  Matrix xhat(xv.rows(), n);
  std::vector<double> inv_std(xv.rows());
  Matrix out(xv.rows(), n);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) mean += xv(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (xv(r, c) - mean) * (xv(r, c) - mean);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat(r, c) = (xv(r, c) - mean) * inv_std[r];
      out(r, c) = gain.value()(0, c) * xhat(r, c) + bias.value()(0, c);
    }
  }
  return x.tape().record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp, std::size_t self) {
        const Matrix& g = tp.upstream(self);
        const Matrix& gv = tp.value(gain);
        const std::size_t width = g.cols();
        Matrix* gg = tp.grad_slot(gain);
        Matrix* gb = tp.grad_slot(bias);
        Matrix* gx = tp.grad_slot(x);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          double mean_dxhat = 0.0;
          double mean_dxhat_xhat = 0.0;
          for (std::size_t c = 0; c < width; ++c) {
            if (gg) (*gg)(0, c) += g(r, c) * xhat(r, c);
            if (gb) (*gb)(0, c) += g(r, c);
            const double dxhat = g(r, c) * gv(0, c);
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xhat(r, c);
          }
          if (!gx) continue;
          mean_dxhat /= static_cast<double>(width);
          mean_dxhat_xhat /= static_cast<double>(width);
          for (std::size_t c = 0; c < width; ++c) {
            const double dxhat = g(r, c) * gv(0, c);
            (*gx)(r, c) += inv_std[r] * (dxhat - mean_dxhat - xhat(r, c) * mean_dxhat_xhat);
          }
        }
      });
}

Var gelu(Var a) {
  return unary_elementwise(a, [](double v) { return pathohr::gelu(v); },
                           [](double xv, double) { return gelu_derivative(xv); });
}

Var tanh(Var a) {
  return unary_elementwise(a, [](double v) { return std::tanh(v); },
                           [](double, double yv) { return 1.0 - yv * yv; });
}

Var sigmoid(Var a) {
  return unary_elementwise(a, [](double v) { return pathohr::sigmoid(v); },
                           [](double, double yv) { return yv * (1.0 - yv); });
}

Var exp(Var a) {
  return unary_elementwise(a, [](double v) { return std::exp(v); }, [](double, double yv) { return yv; });
}

Var normalize_rows(Var a, double eps) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  std::vector<double> norms(x.rows(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double ss = 0.0;
    for (double v : x.row(r)) ss += v * v;
    norms[r] = std::sqrt(ss);
    if (norms[r] < eps) continue;
    for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) = x(r, c) / norms[r];
  }
  return a.tape().record(std::move(y), {a}, [a, eps, norms = std::move(norms)](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    const Matrix& yv = tp.value(self);
    Matrix* ga = tp.grad_slot(a);
    for (std::size_t r = 0; r < yv.rows(); ++r) {
      if (norms[r] < eps) continue;
      double dot = 0.0;
      for (std::size_t c = 0; c < yv.cols(); ++c) dot += g(r, c) * yv(r, c);
      for (std::size_t c = 0; c < yv.cols(); ++c) (*ga)(r, c) += (g(r, c) - yv(r, c) * dot) / norms[r];
    }
  });
}

Var pairwise_distance(Var q, Var k) {
  same_tape(q, k, "pairwise_distance");
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  if (qv.cols() != kv.cols()) throw DimensionError("pairwise_distance: " + shape(qv) + " vs " + shape(kv));
  Matrix d(qv.rows(), kv.rows());
  for (std::size_t i = 0; i < qv.rows(); ++i)
    for (std::size_t j = 0; j < kv.rows(); ++j) {
      double ss = 0.0;
      for (std::size_t c = 0; c < qv.cols(); ++c) {
        const double diff = qv(i, c) - kv(j, c);
        ss += diff * diff;
      }
      d(i, j) = std::sqrt(ss);
    }
  return q.tape().record(std::move(d), {q, k}, [q, k](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    const Matrix& dist = tp.value(self);
    const Matrix& qm = tp.value(q);
    const Matrix& km = tp.value(k);
    Matrix* gq = tp.grad_slot(q);
    Matrix* gk = tp.grad_slot(k);
    for (std::size_t i = 0; i < dist.rows(); ++i)
      for (std::size_t j = 0; j < dist.cols(); ++j) {
        // Zero distance is a kink; take the zero subgradient.
        if (dist(i, j) == 0.0) continue;
        const double w = g(i, j) / dist(i, j);
        for (std::size_t c = 0; c < qm.cols(); ++c) {
          const double diff = w * (qm(i, c) - km(j, c));
          if (gq) (*gq)(i, c) += diff;
          if (gk) (*gk)(j, c) -= diff;
        }
      }
  });
}

Var concat_rows(Var a, Var b) {
  same_tape(a, b, "concat_rows");
  if (a.cols() != b.cols()) throw DimensionError("concat_rows: " + shape(a.value()) + " vs " + shape(b.value()));
  Matrix out(a.rows() + b.rows(), a.cols());
  std::copy(a.value().data().begin(), a.value().data().end(), out.data().begin());
  std::copy(b.value().data().begin(), b.value().data().end(), out.data().begin() + a.value().size());
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    const std::size_t split = tp.value(a).size();
    if (Matrix* ga = tp.grad_slot(a))
      for (std::size_t i = 0; i < split; ++i) ga->data()[i] += g.data()[i];
    if (Matrix* gb = tp.grad_slot(b))
      for (std::size_t i = 0; i < gb->size(); ++i) gb->data()[i] += g.data()[split + i];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    same_tape(parts.front(), p, "concat_cols");
    if (p.rows() != rows) throw DimensionError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < p.cols(); ++c) out(r, offset + c) = p.value()(r, c);
    offset += p.cols();
  }
  return parts.front().tape().record(std::move(out), parts, [parts](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    std::size_t off = 0;
    for (const Var& p : parts) {
      const std::size_t width = tp.value(p).cols();
      if (Matrix* gp = tp.grad_slot(p))
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < width; ++c) (*gp)(r, c) += g(r, off + c);
      off += width;
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Matrix& x = a.value();
  if (begin + count > x.rows()) throw IndexError("slice_rows: range past " + std::to_string(x.rows()) + " rows");
  Matrix out(count, x.cols());
  for (std::size_t r = 0; r < count; ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(begin + r, c);
  return a.tape().record(std::move(out), {a}, [a, begin](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    Matrix* ga = tp.grad_slot(a);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) (*ga)(begin + r, c) += g(r, c);
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Matrix& x = a.value();
  if (begin + count > x.cols()) throw IndexError("slice_cols: range past " + std::to_string(x.cols()) + " cols");
  Matrix out(x.rows(), count);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = x(r, begin + c);
  return a.tape().record(std::move(out), {a}, [a, begin](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    Matrix* ga = tp.grad_slot(a);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) (*ga)(r, begin + c) += g(r, c);
  });
}

Var gather_weighted(Var table, const std::vector<std::vector<WeightedIndex>>& taps) {
  const Matrix& tv = table.value();
  Matrix out(taps.size(), tv.cols());
  for (std::size_t t = 0; t < taps.size(); ++t)
    for (const WeightedIndex& tap : taps[t]) {
      if (tap.row >= tv.rows()) throw IndexError("gather_weighted: row " + std::to_string(tap.row) + " out of table");
      for (std::size_t c = 0; c < tv.cols(); ++c) out(t, c) += tap.weight * tv(tap.row, c);
    }
  return table.tape().record(std::move(out), {table}, [table, taps](Tape& tp, std::size_t self) {
    const Matrix& g = tp.upstream(self);
    Matrix* gt = tp.grad_slot(table);
    for (std::size_t t = 0; t < taps.size(); ++t)
      for (const WeightedIndex& tap : taps[t])
        for (std::size_t c = 0; c < g.cols(); ++c) (*gt)(tap.row, c) += tap.weight * g(t, c);
  });
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return a.tape().record(Matrix(1, 1, total), {a}, [a](Tape& tp, std::size_t self) {
    const double g = tp.upstream(self)(0, 0);
    Matrix* ga = tp.grad_slot(a);
    for (double& v : ga->data()) v += g;
  });
}

Var mse(Var pred, const Matrix& target) {
  require_same_shape(pred.value(), target, "mse");
  if (target.empty()) throw DimensionError("mse: empty input");
  const double n = static_cast<double>(target.size());
  double total = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double diff = pred.value().data()[i] - target.data()[i];
    total += diff * diff;
  }
  return pred.tape().record(Matrix(1, 1, total / n), {pred}, [pred, target, n](Tape& tp, std::size_t self) {
    const double g = tp.upstream(self)(0, 0);
    const Matrix& pv = tp.value(pred);
    Matrix* gp = tp.grad_slot(pred);
    for (std::size_t i = 0; i < pv.size(); ++i) gp->data()[i] += g * 2.0 * (pv.data()[i] - target.data()[i]) / n;
  });
}

}  // namespace pathohr::ad
