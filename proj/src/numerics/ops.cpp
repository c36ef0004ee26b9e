// SPDX-License-Identifier: Apache-2.0
#include "tsed/numerics/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>

namespace tsed::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

MatMap mat(Tensor& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return MatMap(t.data().data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
ConstMatMap cmat(const Tensor& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return ConstMatMap(t.data().data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

bool wants(const Node& n, std::size_t i) { return n.parents.size() > i && n.parents[i]->requires_grad; }

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

// Splits a shape around `axis` into (outer, axis, inner) extents.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};
AxisSplit split_axis(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) throw std::invalid_argument("axis " + std::to_string(axis) + " out of range " + shape_str(s));
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

template <typename F, typename DF>
Var unary(const Var& x, F f, DF df, const char* name) {
  Tensor out(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return make_result(
      std::move(out), {x},
      [df](Node& n) {
        auto& gx = n.parent_grad(0);
        const auto& xv = n.parents[0]->value;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += n.grad[i] * df(xv[i], n.value[i]);
      },
      name);
}

double sigmoid_scalar(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_result(
      std::move(out), {a, b},
      [](Node& n) {
        for (std::size_t p = 0; p < 2; ++p) {
          if (!wants(n, p)) continue;
          auto& g = n.parent_grad(p);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
      },
      "add");
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result(
      std::move(out), {a, b},
      [](Node& n) {
        if (wants(n, 0)) {
          auto& g = n.parent_grad(0);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (wants(n, 1)) {
          auto& g = n.parent_grad(1);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
        }
      },
      "sub");
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(
      std::move(out), {a, b},
      [](Node& n) {
        const auto& av = n.parents[0]->value;
        const auto& bv = n.parents[1]->value;
        if (wants(n, 0)) {
          auto& g = n.parent_grad(0);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * bv[i];
        }
        if (wants(n, 1)) {
          auto& g = n.parent_grad(1);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * av[i];
        }
      },
      "mul");
}

Var scale(const Var& a, double s) {
  return unary(
      a, [s](double v) { return v * s; }, [s](double, double) { return s; }, "scale");
}

Var sigmoid(const Var& x) {
  return unary(
      x, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

Var tanh(const Var& x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; }, "tanh");
}

Var relu(const Var& x) {
  return unary(
      x, [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; }, "relu");
}

Var leaky_relu(const Var& x, double slope) {
  return unary(
      x, [slope](double v) { return v > 0 ? v : slope * v; },
      [slope](double v, double) { return v > 0 ? 1.0 : slope; }, "leaky_relu");
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return make_result(
      Tensor::scalar(s), {x},
      [](Node& n) {
        auto& g = n.parent_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0];
      },
      "sum");
}

Var mean(const Var& x) {
  if (x.value().size() == 0) throw std::invalid_argument("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

Var sum_axis(const Var& x, std::size_t axis) {
  auto sp = split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor out(out_shape, 0.0);
  const auto& xv = x.value();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t a = 0; a < sp.len; ++a)
      for (std::size_t i = 0; i < sp.inner; ++i) out[o * sp.inner + i] += xv[(o * sp.len + a) * sp.inner + i];
  return make_result(
      std::move(out), {x},
      [sp](Node& n) {
        auto& g = n.parent_grad(0);
        for (std::size_t o = 0; o < sp.outer; ++o)
          for (std::size_t a = 0; a < sp.len; ++a)
            for (std::size_t i = 0; i < sp.inner; ++i) g[(o * sp.len + a) * sp.inner + i] += n.grad[o * sp.inner + i];
      },
      "sum_axis");
}

Var mean_axis(const Var& x, std::size_t axis) {
  auto len = x.value().dim(axis);
  if (len == 0) throw std::invalid_argument("mean over empty axis");
  return scale(sum_axis(x, axis), 1.0 / static_cast<double>(len));
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(
      std::move(out), {x},
      [](Node& n) {
        auto& g = n.parent_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
      },
      "reshape");
}

Var permute(const Var& x, const std::vector<std::size_t>& order) {
  const Shape& in = x.shape();
  if (order.size() != in.size()) throw std::invalid_argument("permute: order rank mismatch");
  std::vector<bool> seen(in.size(), false);
  Shape out_shape(in.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i] >= in.size() || seen[order[i]]) throw std::invalid_argument("permute: invalid axis order");
    seen[order[i]] = true;
    out_shape[i] = in[order[i]];
  }
  std::vector<std::size_t> in_strides(in.size(), 1);
  for (std::size_t i = in.size(); i-- > 1;) in_strides[i - 1] = in_strides[i] * in[i];
  // source offset for each output element
  auto src = std::make_shared<std::vector<std::size_t>>(numel(in));
  std::vector<std::size_t> idx(in.size(), 0);
  for (std::size_t flat = 0; flat < src->size(); ++flat) {
    std::size_t off = 0;
    for (std::size_t d = 0; d < idx.size(); ++d) off += idx[d] * in_strides[order[d]];
    (*src)[flat] = off;
    for (std::size_t d = idx.size(); d-- > 0;) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
  Tensor out(out_shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[(*src)[i]];
  return make_result(
      std::move(out), {x},
      [src](Node& n) {
        auto& g = n.parent_grad(0);
        for (std::size_t i = 0; i < n.grad.size(); ++i) g[(*src)[i]] += n.grad[i];
      },
      "permute");
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat of nothing");
  Shape out_shape = parts[0].shape();
  if (axis >= out_shape.size()) throw std::invalid_argument("concat: axis out of range");
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != out_shape.size()) throw std::invalid_argument("concat: rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != out_shape[d]) {
        throw std::invalid_argument("concat: shape mismatch " + shape_str(s) + " vs " + shape_str(out_shape));
      }
    }
    total += s[axis];
  }
  out_shape[axis] = total;
  auto sp = split_axis(out_shape, axis);
  Tensor out(out_shape);
  std::vector<std::size_t> lens;
  std::size_t base = 0;
  for (const auto& p : parts) {
    std::size_t len = p.shape()[axis];
    lens.push_back(len);
    const auto& v = p.value();
    for (std::size_t o = 0; o < sp.outer; ++o)
      std::copy_n(v.data().begin() + static_cast<std::ptrdiff_t>(o * len * sp.inner), len * sp.inner,
                  out.data().begin() + static_cast<std::ptrdiff_t>((o * total + base) * sp.inner));
    base += len;
  }
  return make_result(
      std::move(out), parts,
      [sp, lens, total](Node& n) {
        std::size_t base = 0;
        for (std::size_t p = 0; p < lens.size(); ++p) {
          std::size_t len = lens[p];
          if (wants(n, p)) {
            auto& g = n.parent_grad(p);
            for (std::size_t o = 0; o < sp.outer; ++o)
              for (std::size_t i = 0; i < len * sp.inner; ++i)
                g[o * len * sp.inner + i] += n.grad[(o * total + base) * sp.inner + i];
          }
          base += len;
        }
      },
      "concat");
}

Var take(const Var& x, std::span<const std::size_t> indices) {
  if (x.value().rank() == 0) throw std::invalid_argument("take on scalar");
  std::size_t rows = x.shape()[0];
  std::size_t row_size = rows ? x.value().size() / rows : 0;
  Shape out_shape = x.shape();
  out_shape[0] = indices.size();
  Tensor out(out_shape);
  auto idx = std::make_shared<std::vector<std::size_t>>(indices.begin(), indices.end());
  for (std::size_t r = 0; r < idx->size(); ++r) {
    if ((*idx)[r] >= rows) throw std::out_of_range("take: index out of range");
    std::copy_n(x.value().data().begin() + static_cast<std::ptrdiff_t>((*idx)[r] * row_size), row_size,
                out.data().begin() + static_cast<std::ptrdiff_t>(r * row_size));
  }
  return make_result(
      std::move(out), {x},
      [idx, row_size](Node& n) {
        auto& g = n.parent_grad(0);
        for (std::size_t r = 0; r < idx->size(); ++r)
          for (std::size_t i = 0; i < row_size; ++i) g[(*idx)[r] * row_size + i] += n.grad[r * row_size + i];
      },
      "take");
}

Var linear(const Var& x, const Var& w, const Var& b) {
  const auto& ws = w.shape();
  if (ws.size() != 2) throw std::invalid_argument("linear: weight must be 2-D, got " + shape_str(ws));
  if (x.value().rank() == 0 || x.shape().back() != ws[1]) {
    throw std::invalid_argument("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                                shape_str(ws));
  }
  if (b.defined() && (b.shape().size() != 1 || b.shape()[0] != ws[0])) {
    throw std::invalid_argument("linear: bias shape " + shape_str(b.shape()));
  }
  std::size_t in = ws[1], out_dim = ws[0];
  std::size_t rows = x.value().size() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  Tensor out(out_shape);
  auto Y = mat(out, rows, out_dim);
  Y.noalias() = cmat(x.value(), rows, in) * cmat(w.value(), out_dim, in).transpose();
  if (b.defined()) Y.rowwise() += ConstVecMap(b.value().data().data(), static_cast<Eigen::Index>(out_dim)).transpose();
  std::vector<Var> parents{x, w};
  if (b.defined()) parents.push_back(b);
  return make_result(
      std::move(out), parents,
      [rows, in, out_dim](Node& n) {
        auto dY = cmat(n.grad, rows, out_dim);
        if (wants(n, 0)) mat(n.parent_grad(0), rows, in).noalias() += dY * cmat(n.parents[1]->value, out_dim, in);
        if (wants(n, 1)) mat(n.parent_grad(1), out_dim, in).noalias() += dY.transpose() * cmat(n.parents[0]->value, rows, in);
        if (wants(n, 2)) {
          VecMap(n.parent_grad(2).data().data(), static_cast<Eigen::Index>(out_dim)) += dY.colwise().sum().transpose();
        }
      },
      "linear");
}

Var softmax(const Var& x, std::size_t axis) {
  auto sp = split_axis(x.shape(), axis);
  Tensor out(x.shape());
  const auto& xv = x.value();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      auto at = [&](std::size_t a) { return (o * sp.len + a) * sp.inner + i; };
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < sp.len; ++a) mx = std::max(mx, xv[at(a)]);
      double z = 0.0;
      for (std::size_t a = 0; a < sp.len; ++a) z += (out[at(a)] = std::exp(xv[at(a)] - mx));
      for (std::size_t a = 0; a < sp.len; ++a) out[at(a)] /= z;
    }
  return make_result(
      std::move(out), {x},
      [sp](Node& n) {
        auto& g = n.parent_grad(0);
        for (std::size_t o = 0; o < sp.outer; ++o)
          for (std::size_t i = 0; i < sp.inner; ++i) {
            auto at = [&](std::size_t a) { return (o * sp.len + a) * sp.inner + i; };
            double dot = 0.0;
            for (std::size_t a = 0; a < sp.len; ++a) dot += n.grad[at(a)] * n.value[at(a)];
            for (std::size_t a = 0; a < sp.len; ++a) g[at(a)] += n.value[at(a)] * (n.grad[at(a)] - dot);
          }
      },
      "softmax");
}

namespace {

struct ConvGeometry {
  std::size_t batch, cin, f, t, cout, kh, kw, sf, st, pf, pt, fo, to;
  std::size_t k() const { return cin * kh * kw; }
  std::size_t p() const { return fo * to; }
};

void im2col(const double* x, const ConvGeometry& g, double* col) {
  const std::size_t P = g.p();
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* row = col + ((c * g.kh + i) * g.kw + j) * P;
        for (std::size_t fo = 0; fo < g.fo; ++fo) {
          long f = static_cast<long>(fo * g.sf + i) - static_cast<long>(g.pf);
          double* dst = row + fo * g.to;
          if (f < 0 || f >= static_cast<long>(g.f)) {
            std::fill_n(dst, g.to, 0.0);
            continue;
          }
          const double* src = x + (c * g.f + static_cast<std::size_t>(f)) * g.t;
          for (std::size_t to = 0; to < g.to; ++to) {
            long t = static_cast<long>(to * g.st + j) - static_cast<long>(g.pt);
            dst[to] = (t < 0 || t >= static_cast<long>(g.t)) ? 0.0 : src[t];
          }
        }
      }
}

void col2im(const double* col, const ConvGeometry& g, double* dx) {
  const std::size_t P = g.p();
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        const double* row = col + ((c * g.kh + i) * g.kw + j) * P;
        for (std::size_t fo = 0; fo < g.fo; ++fo) {
          long f = static_cast<long>(fo * g.sf + i) - static_cast<long>(g.pf);
          if (f < 0 || f >= static_cast<long>(g.f)) continue;
          double* dst = dx + (c * g.f + static_cast<std::size_t>(f)) * g.t;
          const double* src = row + fo * g.to;
          for (std::size_t to = 0; to < g.to; ++to) {
            long t = static_cast<long>(to * g.st + j) - static_cast<long>(g.pt);
            if (t >= 0 && t < static_cast<long>(g.t)) dst[t] += src[to];
          }
        }
      }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, const Conv2dOptions& opt) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() == 3) {
    Var y = conv2d(reshape(x, {1, xs[0], xs[1], xs[2]}), w, b, opt);
    return reshape(y, {y.shape()[1], y.shape()[2], y.shape()[3]});
  }
  if (xs.size() != 4) throw std::invalid_argument("conv2d: input must be [N,C,F,T] or [C,F,T], got " + shape_str(xs));
  if (ws.size() != 4) throw std::invalid_argument("conv2d: kernels must be [O,C,kH,kW], got " + shape_str(ws));
  if (ws[1] != xs[1]) {
    throw std::invalid_argument("conv2d: input channels " + std::to_string(xs[1]) + " != kernel channels " +
                                std::to_string(ws[1]));
  }
  if (opt.stride.first == 0 || opt.stride.second == 0) throw std::invalid_argument("conv2d: zero stride");
  if (b.defined() && (b.shape().size() != 1 || b.shape()[0] != ws[0])) {
    throw std::invalid_argument("conv2d: bias shape " + shape_str(b.shape()));
  }
  std::size_t pf_ext = xs[2] + 2 * opt.padding.first, pt_ext = xs[3] + 2 * opt.padding.second;
  if (ws[2] > pf_ext || ws[3] > pt_ext) {
    throw std::invalid_argument("conv2d: kernel " + shape_str(ws) + " larger than padded input " + shape_str(xs));
  }
  ConvGeometry g{xs[0],
                 xs[1],
                 xs[2],
                 xs[3],
                 ws[0],
                 ws[2],
                 ws[3],
                 opt.stride.first,
                 opt.stride.second,
                 opt.padding.first,
                 opt.padding.second,
                 (pf_ext - ws[2]) / opt.stride.first + 1,
                 (pt_ext - ws[3]) / opt.stride.second + 1};

  Tensor out({g.batch, g.cout, g.fo, g.to});
  std::vector<double> col(g.k() * g.p());
  auto W = cmat(w.value(), g.cout, g.k());
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(x.value().data().data() + n * g.cin * g.f * g.t, g, col.data());
    auto Y = mat(out, g.cout, g.p(), n * g.cout * g.p());
    Y.noalias() = W * ConstMatMap(col.data(), static_cast<Eigen::Index>(g.k()), static_cast<Eigen::Index>(g.p()));
    if (b.defined()) Y.colwise() += ConstVecMap(b.value().data().data(), static_cast<Eigen::Index>(g.cout));
  }
  std::vector<Var> parents{x, w};
  if (b.defined()) parents.push_back(b);
  return make_result(
      std::move(out), parents,
      [g](Node& n) {
        const auto& xv = n.parents[0]->value;
        const auto& wv = n.parents[1]->value;
        std::vector<double> col(g.k() * g.p());
        std::vector<double> dcol(wants(n, 0) ? g.k() * g.p() : 0);
        auto W = cmat(wv, g.cout, g.k());
        for (std::size_t b = 0; b < g.batch; ++b) {
          auto dY = cmat(n.grad, g.cout, g.p(), b * g.cout * g.p());
          if (wants(n, 1)) {
            im2col(xv.data().data() + b * g.cin * g.f * g.t, g, col.data());
            mat(n.parent_grad(1), g.cout, g.k()).noalias() +=
                dY * ConstMatMap(col.data(), static_cast<Eigen::Index>(g.k()), static_cast<Eigen::Index>(g.p()))
                         .transpose();
          }
          if (wants(n, 2)) {
            VecMap(n.parent_grad(2).data().data(), static_cast<Eigen::Index>(g.cout)) += dY.rowwise().sum();
          }
          if (wants(n, 0)) {
            MatMap(dcol.data(), static_cast<Eigen::Index>(g.k()), static_cast<Eigen::Index>(g.p())).noalias() =
                W.transpose() * dY;
            col2im(dcol.data(), g, n.parent_grad(0).data().data() + b * g.cin * g.f * g.t);
          }
        }
      },
      "conv2d");
}

Var avg_pool2d(const Var& x, std::pair<std::size_t, std::size_t> window) {
  const Shape& xs = x.shape();
  if (xs.size() < 2) throw std::invalid_argument("avg_pool2d: input rank < 2");
  auto [kf, kt] = window;
  std::size_t F = xs[xs.size() - 2], T = xs[xs.size() - 1];
  if (kf == 0 || kt == 0) throw std::invalid_argument("avg_pool2d: zero window");
  if (kf > F || kt > T) {
    throw std::invalid_argument("avg_pool2d: window (" + std::to_string(kf) + "," + std::to_string(kt) +
                                ") larger than input " + shape_str(xs));
  }
  std::size_t Fo = F / kf, To = T / kt;
  std::size_t planes = x.value().size() / (F * T);
  Shape out_shape = xs;
  out_shape[xs.size() - 2] = Fo;
  out_shape[xs.size() - 1] = To;
  Tensor out(out_shape, 0.0);
  const double inv = 1.0 / static_cast<double>(kf * kt);
  const auto& xv = x.value();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t fo = 0; fo < Fo; ++fo)
      for (std::size_t to = 0; to < To; ++to) {
        double s = 0.0;
        for (std::size_t i = 0; i < kf; ++i)
          for (std::size_t j = 0; j < kt; ++j) s += xv[(p * F + fo * kf + i) * T + to * kt + j];
        out[(p * Fo + fo) * To + to] = s * inv;
      }
  return make_result(
      std::move(out), {x},
      [=](Node& n) {
        auto& g = n.parent_grad(0);
        for (std::size_t p = 0; p < planes; ++p)
          for (std::size_t fo = 0; fo < Fo; ++fo)
            for (std::size_t to = 0; to < To; ++to) {
              double d = n.grad[(p * Fo + fo) * To + to] * inv;
              for (std::size_t i = 0; i < kf; ++i)
                for (std::size_t j = 0; j < kt; ++j) g[(p * F + fo * kf + i) * T + to * kt + j] += d;
            }
      },
      "avg_pool2d");
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormStats& stats, bool training,
               const BatchNormOptions& opt) {
  const Shape& xs = x.shape();
  if (xs.size() < 2) throw std::invalid_argument("batch_norm: input rank < 2");
  std::size_t N = xs[0], C = xs[1];
  std::size_t S = x.value().size() / (N * C);
  if (gamma.shape() != Shape{C} || beta.shape() != Shape{C}) {
    throw std::invalid_argument("batch_norm: affine parameters must have shape [" + std::to_string(C) + "]");
  }
  if (stats.running_mean.size() != C) {
    stats.running_mean = Tensor({C}, 0.0);
    stats.running_var = Tensor({C}, 1.0);
  }
  const std::size_t M = N * S;
  auto xhat = std::make_shared<Tensor>(xs);
  auto invstd = std::make_shared<std::vector<double>>(C);
  const auto& xv = x.value();
  Tensor out(xs);
  for (std::size_t c = 0; c < C; ++c) {
    double mu, var;
    if (training) {
      double s = 0.0;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < S; ++i) s += xv[(n * C + c) * S + i];
      mu = s / static_cast<double>(M);
      double ss = 0.0;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < S; ++i) {
          double d = xv[(n * C + c) * S + i] - mu;
          ss += d * d;
        }
      var = ss / static_cast<double>(M);
      double unbiased = M > 1 ? ss / static_cast<double>(M - 1) : var;
      stats.running_mean[c] = (1.0 - opt.momentum) * stats.running_mean[c] + opt.momentum * mu;
      stats.running_var[c] = (1.0 - opt.momentum) * stats.running_var[c] + opt.momentum * unbiased;
    } else {
      mu = stats.running_mean[c];
      var = stats.running_var[c];
    }
    double is = 1.0 / std::sqrt(var + opt.eps);
    (*invstd)[c] = is;
    double gm = gamma.value()[c], bt = beta.value()[c];
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t i = 0; i < S; ++i) {
        std::size_t k = (n * C + c) * S + i;
        double h = (xv[k] - mu) * is;
        (*xhat)[k] = h;
        out[k] = gm * h + bt;
      }
  }
  return make_result(
      std::move(out), {x, gamma, beta},
      [=](Node& n) {
        const auto& gm = n.parents[1]->value;
        for (std::size_t c = 0; c < C; ++c) {
          double sdy = 0.0, sdyh = 0.0;
          for (std::size_t b = 0; b < N; ++b)
            for (std::size_t i = 0; i < S; ++i) {
              std::size_t k = (b * C + c) * S + i;
              sdy += n.grad[k];
              sdyh += n.grad[k] * (*xhat)[k];
            }
          if (wants(n, 1)) n.parent_grad(1)[c] += sdyh;
          if (wants(n, 2)) n.parent_grad(2)[c] += sdy;
          if (!wants(n, 0)) continue;
          auto& gx = n.parent_grad(0);
          double is = (*invstd)[c];
          double m = static_cast<double>(M);
          for (std::size_t b = 0; b < N; ++b)
            for (std::size_t i = 0; i < S; ++i) {
              std::size_t k = (b * C + c) * S + i;
              if (training) {
                gx[k] += gm[c] * is * (n.grad[k] - sdy / m - (*xhat)[k] * sdyh / m);
              } else {
                gx[k] += gm[c] * is * n.grad[k];
              }
            }
        }
      },
      "batch_norm");
}

Var dropout(const Var& x, double p, Rng& rng, bool training) {
  if (!training || p <= 0.0) return x;
  if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
  auto mask = std::make_shared<std::vector<double>>(x.value().size());
  const double keep = 1.0 / (1.0 - p);
  for (auto& m : *mask) m = bernoulli(rng, p) ? 0.0 : keep;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= (*mask)[i];
  return make_result(
      std::move(out), {x},
      [mask](Node& n) {
        auto& g = n.parent_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * (*mask)[i];
      },
      "dropout");
}

Var gru(const Var& x, const GruWeights& w, bool reverse) {
  const Shape& xs = x.shape();
  if (xs.size() != 3) throw std::invalid_argument("gru: input must be [N,T,D], got " + shape_str(xs));
  const std::size_t N = xs[0], T = xs[1], D = xs[2];
  if (T == 0) throw std::invalid_argument("gru: empty time axis");
  const auto& wih = w.w_ih.shape();
  if (wih.size() != 2 || wih[1] != D || wih[0] % 3 != 0) {
    throw std::invalid_argument("gru: w_ih shape " + shape_str(wih) + " incompatible with input " + shape_str(xs));
  }
  const std::size_t H = wih[0] / 3;
  if (w.w_hh.shape() != Shape{3 * H, H} || w.b_ih.shape() != Shape{3 * H} || w.b_hh.shape() != Shape{3 * H}) {
    throw std::invalid_argument("gru: recurrent weight or bias shape mismatch");
  }

  // Per-step caches: reset, update, candidate, recurrent candidate pre-activation, previous hidden.
  struct Cache {
    Tensor gi;                          // [N*T, 3H] input projections
    std::vector<RowMat> r, z, c, hn, hprev;
  };
  auto cache = std::make_shared<Cache>();
  cache->gi = Tensor({N * T, 3 * H});
  mat(cache->gi, N * T, 3 * H).noalias() = cmat(x.value(), N * T, D) * cmat(w.w_ih.value(), 3 * H, D).transpose();
  mat(cache->gi, N * T, 3 * H).rowwise() +=
      ConstVecMap(w.b_ih.value().data().data(), static_cast<Eigen::Index>(3 * H)).transpose();

  Tensor out({N, T, H});
  auto Whh = cmat(w.w_hh.value(), 3 * H, H);
  Eigen::RowVectorXd bhh = ConstVecMap(w.b_hh.value().data().data(), static_cast<Eigen::Index>(3 * H)).transpose();
  RowMat h = RowMat::Zero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(H));
  const auto Hi = static_cast<Eigen::Index>(H);
  for (std::size_t s = 0; s < T; ++s) {
    std::size_t t = reverse ? T - 1 - s : s;
    RowMat gi(static_cast<Eigen::Index>(N), 3 * Hi);
    for (std::size_t b = 0; b < N; ++b) gi.row(static_cast<Eigen::Index>(b)) = cmat(cache->gi, N * T, 3 * H).row(static_cast<Eigen::Index>(b * T + t));
    RowMat gh = h * Whh.transpose();
    gh.rowwise() += bhh;
    RowMat r = (gi.leftCols(Hi) + gh.leftCols(Hi)).unaryExpr(&sigmoid_scalar);
    RowMat z = (gi.middleCols(Hi, Hi) + gh.middleCols(Hi, Hi)).unaryExpr(&sigmoid_scalar);
    RowMat hn = gh.rightCols(Hi);
    RowMat c = (gi.rightCols(Hi) + r.cwiseProduct(hn)).array().tanh().matrix();
    RowMat hnew = (RowMat::Ones(static_cast<Eigen::Index>(N), Hi) - z).cwiseProduct(c) + z.cwiseProduct(h);
    cache->r.push_back(std::move(r));
    cache->z.push_back(std::move(z));
    cache->c.push_back(std::move(c));
    cache->hn.push_back(std::move(hn));
    cache->hprev.push_back(h);
    h = std::move(hnew);
    for (std::size_t b = 0; b < N; ++b)
      for (std::size_t k = 0; k < H; ++k) out[(b * T + t) * H + k] = h(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k));
  }

  return make_result(
      std::move(out), {x, w.w_ih, w.w_hh, w.b_ih, w.b_hh},
      [=](Node& n) {
        const auto Ni = static_cast<Eigen::Index>(N);
        auto Whh = cmat(n.parents[2]->value, 3 * H, H);
        Tensor dgi({N * T, 3 * H}, 0.0);
        auto dGI = mat(dgi, N * T, 3 * H);
        RowMat dWhh = RowMat::Zero(3 * Hi, Hi);
        Eigen::RowVectorXd dbhh = Eigen::RowVectorXd::Zero(3 * Hi);
        RowMat dh = RowMat::Zero(Ni, Hi);
        for (std::size_t s = T; s-- > 0;) {
          std::size_t t = reverse ? T - 1 - s : s;
          for (std::size_t b = 0; b < N; ++b)
            for (std::size_t k = 0; k < H; ++k)
              dh(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k)) += n.grad[(b * T + t) * H + k];
          const RowMat& r = cache->r[s];
          const RowMat& z = cache->z[s];
          const RowMat& c = cache->c[s];
          const RowMat& hn = cache->hn[s];
          const RowMat& hp = cache->hprev[s];
          RowMat dc = dh.cwiseProduct(RowMat::Ones(Ni, Hi) - z);
          RowMat dz = dh.cwiseProduct(hp - c);
          RowMat dprev = dh.cwiseProduct(z);
          RowMat dan = dc.cwiseProduct(RowMat::Ones(Ni, Hi) - c.cwiseProduct(c));
          RowMat dr = dan.cwiseProduct(hn);
          RowMat dar = dr.cwiseProduct(r).cwiseProduct(RowMat::Ones(Ni, Hi) - r);
          RowMat daz = dz.cwiseProduct(z).cwiseProduct(RowMat::Ones(Ni, Hi) - z);
          RowMat dgh(Ni, 3 * Hi);
          dgh.leftCols(Hi) = dar;
          dgh.middleCols(Hi, Hi) = daz;
          dgh.rightCols(Hi) = dan.cwiseProduct(r);
          for (std::size_t b = 0; b < N; ++b) {
            auto row = dGI.row(static_cast<Eigen::Index>(b * T + t));
            row.leftCols(Hi) = dar.row(static_cast<Eigen::Index>(b));
            row.middleCols(Hi, Hi) = daz.row(static_cast<Eigen::Index>(b));
            row.rightCols(Hi) = dan.row(static_cast<Eigen::Index>(b));
          }
          dWhh.noalias() += dgh.transpose() * hp;
          dbhh += dgh.colwise().sum();
          dprev.noalias() += dgh * Whh;
          dh = std::move(dprev);
        }
        if (wants(n, 0)) mat(n.parent_grad(0), N * T, D).noalias() += dGI * cmat(n.parents[1]->value, 3 * H, D);
        if (wants(n, 1)) mat(n.parent_grad(1), 3 * H, D).noalias() += dGI.transpose() * cmat(n.parents[0]->value, N * T, D);
        if (wants(n, 2)) mat(n.parent_grad(2), 3 * H, H) += dWhh;
        if (wants(n, 3)) VecMap(n.parent_grad(3).data().data(), 3 * Hi) += dGI.colwise().sum().transpose();
        if (wants(n, 4)) VecMap(n.parent_grad(4).data().data(), 3 * Hi) += dbhh.transpose();
      },
      "gru");
}

Var bigru(const Var& x, const GruWeights& forward, const GruWeights& backward) {
  if (x.shape().size() == 2) {
    Var y = bigru(reshape(x, {1, x.shape()[0], x.shape()[1]}), forward, backward);
    return reshape(y, {y.shape()[1], y.shape()[2]});
  }
  return concat({gru(x, forward, false), gru(x, backward, true)}, 2);
}

Var frequency_mix(const Var& y, const Var& weights) {
  const Shape& ys = y.shape();
  const Shape& ws = weights.shape();
  if (ys.size() != 4 || ws.size() != 3 || ws[0] != ys[0] || ws[1] != ys[2] || ws[2] == 0 || ys[1] % ws[2] != 0) {
    throw std::invalid_argument("frequency_mix: incompatible shapes " + shape_str(ys) + " and " + shape_str(ws));
  }
  const std::size_t N = ys[0], K = ws[2], O = ys[1] / K, F = ys[2], T = ys[3];
  Tensor out({N, O, F, T}, 0.0);
  const auto& yv = y.value();
  const auto& wv = weights.value();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t o = 0; o < O; ++o)
        for (std::size_t f = 0; f < F; ++f) {
          double a = wv[(n * F + f) * K + k];
          const double* src = yv.data().data() + ((n * K * O + k * O + o) * F + f) * T;
          double* dst = out.data().data() + ((n * O + o) * F + f) * T;
          for (std::size_t t = 0; t < T; ++t) dst[t] += a * src[t];
        }
  return make_result(
      std::move(out), {y, weights},
      [=](Node& nd) {
        const auto& yv = nd.parents[0]->value;
        const auto& wv = nd.parents[1]->value;
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t k = 0; k < K; ++k)
            for (std::size_t o = 0; o < O; ++o)
              for (std::size_t f = 0; f < F; ++f) {
                const double* g = nd.grad.data().data() + ((n * O + o) * F + f) * T;
                std::size_t yoff = ((n * K * O + k * O + o) * F + f) * T;
                if (wants(nd, 0)) {
                  double a = wv[(n * F + f) * K + k];
                  double* dy = nd.parent_grad(0).data().data() + yoff;
                  for (std::size_t t = 0; t < T; ++t) dy[t] += a * g[t];
                }
                if (wants(nd, 1)) {
                  double s = 0.0;
                  for (std::size_t t = 0; t < T; ++t) s += yv[yoff + t] * g[t];
                  nd.parent_grad(1)[(n * F + f) * K + k] += s;
                }
              }
      },
      "frequency_mix");
}

namespace {

void require_target(const Var& p, const Tensor& y, const char* op) {
  if (p.shape() != y.shape()) {
    throw std::invalid_argument(std::string(op) + ": prediction " + shape_str(p.shape()) + " vs target " +
                                shape_str(y.shape()));
  }
  if (y.size() == 0) throw std::invalid_argument(std::string(op) + ": empty input");
}

}  // namespace

Var bce_loss(const Var& p, const Tensor& target) {
  require_target(p, target, "bce_loss");
  const auto& pv = p.value();
  const double m = static_cast<double>(pv.size());
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    double q = std::clamp(pv[i], kProbClamp, 1.0 - kProbClamp);
    total -= target[i] * std::log(q) + (1.0 - target[i]) * std::log(1.0 - q);
  }
  auto y = std::make_shared<Tensor>(target);
  return make_result(
      Tensor::scalar(total / m), {p},
      [y, m](Node& n) {
        auto& g = n.parent_grad(0);
        const auto& pv = n.parents[0]->value;
        for (std::size_t i = 0; i < g.size(); ++i) {
          double q = pv[i];
          if (q < kProbClamp || q > 1.0 - kProbClamp) continue;
          g[i] += n.grad[0] / m * (q - (*y)[i]) / (q * (1.0 - q));
        }
      },
      "bce_loss");
}

Var asymmetric_focal_loss(const Var& p, const Tensor& target, double gamma, double zeta) {
  require_target(p, target, "asymmetric_focal_loss");
  if (gamma < 0 || zeta < 0) throw std::invalid_argument("asymmetric_focal_loss: gamma and zeta must be >= 0");
  const auto& pv = p.value();
  const double m = static_cast<double>(pv.size());
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    double q = std::clamp(pv[i], kProbClamp, 1.0 - kProbClamp);
    double y = target[i];
    double active = y * std::log(q);
    double inactive = (1.0 - y) * std::log(1.0 - q);
    if (gamma != 0.0) active *= std::pow(1.0 - q, gamma);
    if (zeta != 0.0) inactive *= std::pow(q, zeta);
    total -= active + inactive;
  }
  auto y = std::make_shared<Tensor>(target);
  return make_result(
      Tensor::scalar(total / m), {p},
      [y, gamma, zeta, m](Node& n) {
        auto& g = n.parent_grad(0);
        const auto& pv = n.parents[0]->value;
        const double scale = n.grad[0] / m;
        for (std::size_t i = 0; i < g.size(); ++i) {
          double raw = pv[i];
          if (raw < kProbClamp || raw > 1.0 - kProbClamp) continue;
          double q = raw, t = (*y)[i];
          double d_active = t / q;
          if (gamma != 0.0) {
            d_active = t * (std::pow(1.0 - q, gamma) / q - gamma * std::pow(1.0 - q, gamma - 1.0) * std::log(q));
          }
          double d_inactive = -(1.0 - t) / (1.0 - q);
          if (zeta != 0.0) {
            d_inactive =
                (1.0 - t) * (zeta * std::pow(q, zeta - 1.0) * std::log(1.0 - q) - std::pow(q, zeta) / (1.0 - q));
          }
          g[i] -= scale * (d_active + d_inactive);
        }
      },
      "asymmetric_focal_loss");
}

Var mse_loss(const Var& x, const Tensor& target) {
  require_target(x, target, "mse_loss");
  const auto& xv = x.value();
  const double m = static_cast<double>(xv.size());
  double total = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    double d = xv[i] - target[i];
    total += d * d;
  }
  auto y = std::make_shared<Tensor>(target);
  return make_result(
      Tensor::scalar(total / m), {x},
      [y, m](Node& n) {
        auto& g = n.parent_grad(0);
        const auto& xv = n.parents[0]->value;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0] * 2.0 * (xv[i] - (*y)[i]) / m;
      },
      "mse_loss");
}

}  // namespace tsed::ops
