#include "attrgan/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

#include "attrgan/errors.hpp"

namespace attrgan::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMatrix>;
using ConstMapMat = Eigen::Map<const RowMatrix>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), ErrorCode::kShapeMismatch,
          std::string(op) + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

void require_rank(const Tensor& x, int rank, const char* op) {
  require(x.rank() == rank, ErrorCode::kShapeMismatch,
          std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
              shape_string(x.shape()));
}

// Unary op whose derivative is expressed through input x and output y.
template <typename F, typename D>
Tensor unary(const Tensor& x, F f, D dfdx) {
  const auto& in = x.values();
  std::vector<double> out(in.size());
  for (size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_result(x.shape(), std::move(out), {x}, [dfdx](Node& self) {
    Node& a = *self.inputs[0];
    for (size_t i = 0; i < self.grad.size(); ++i)
      a.grad[i] += self.grad[i] * dfdx(a.value[i], self.value[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (auto& in : self.inputs)
      if (in->requires_grad)
        for (size_t i = 0; i < self.grad.size(); ++i) in->grad[i] += self.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    if (x.requires_grad)
      for (size_t i = 0; i < self.grad.size(); ++i) x.grad[i] += self.grad[i];
    if (y.requires_grad)
      for (size_t i = 0; i < self.grad.size(); ++i) y.grad[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    if (x.requires_grad)
      for (size_t i = 0; i < self.grad.size(); ++i) x.grad[i] += self.grad[i] * y.value[i];
    if (y.requires_grad)
      for (size_t i = 0; i < self.grad.size(); ++i) y.grad[i] += self.grad[i] * x.value[i];
  });
}

Tensor scale(const Tensor& x, double s) {
  return unary(x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& x, double s) {
  return unary(x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0 ? v : 0.0; },
               [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary(x, [slope](double v) { return v > 0 ? v : slope * v; },
               [slope](double v, double) { return v > 0 ? 1.0 : slope; });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor abs(const Tensor& x) {
  return unary(x, [](double v) { return std::abs(v); },
               [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
               [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor log_sigmoid(const Tensor& x) {
  return unary(
      x, [](double v) { return v >= 0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v)); },
      [](double v, double) {
        // d/dv log(sigmoid(v)) = 1 - sigmoid(v) = sigmoid(-v)
        if (v >= 0) {
          const double e = std::exp(-v);
          return e / (1.0 + e);
        }
        return 1.0 / (1.0 + std::exp(v));
      });
}

Tensor select(std::span<const char> mask, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "select");
  require(static_cast<int>(mask.size()) == a.size(), ErrorCode::kShapeMismatch,
          "select: mask length");
  std::vector<char> m(mask.begin(), mask.end());
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i)
    if (!m[i]) out[i] = bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [m = std::move(m)](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    for (size_t i = 0; i < self.grad.size(); ++i) {
      if (m[i]) {
        if (x.requires_grad) x.grad[i] += self.grad[i];
      } else if (y.requires_grad) {
        y.grad[i] += self.grad[i];
      }
    }
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_result({1}, {s}, {x}, [](Node& self) {
    Node& a = *self.inputs[0];
    const double g = self.grad[0];
    for (double& v : a.grad) v += g;
  });
}

Tensor mean(const Tensor& x) {
  require(x.size() > 0, ErrorCode::kEmptyInput, "mean of empty tensor");
  return scale(sum(x), 1.0 / x.size());
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  require(!parts.empty(), ErrorCode::kEmptyInput, "concat of nothing");
  require(axis == 0 || axis == 1, ErrorCode::kInvalidArgument, "concat axis must be 0 or 1");
  const Shape& first = parts[0].shape();
  const int rank = static_cast<int>(first.size());
  require(rank >= axis + 1, ErrorCode::kShapeMismatch, "concat rank");
  Shape out_shape = first;
  out_shape[static_cast<size_t>(axis)] = 0;
  for (const auto& p : parts) {
    require(p.rank() == rank, ErrorCode::kShapeMismatch, "concat rank mismatch");
    for (int d = 0; d < rank; ++d)
      if (d != axis)
        require(p.dim(d) == first[static_cast<size_t>(d)], ErrorCode::kShapeMismatch,
                "concat: " + shape_string(p.shape()) + " vs " + shape_string(first));
    out_shape[static_cast<size_t>(axis)] += p.dim(axis);
  }
  // outer = product of dims before axis; inner = product after axis.
  int outer = 1;
  for (int d = 0; d < axis; ++d) outer *= first[static_cast<size_t>(d)];
  int inner = 1;
  for (int d = axis + 1; d < rank; ++d) inner *= first[static_cast<size_t>(d)];
  const int total_axis = out_shape[static_cast<size_t>(axis)];

  std::vector<double> out(static_cast<size_t>(numel(out_shape)));
  std::vector<int> offsets;
  int offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const int len = p.dim(axis);
    const auto& v = p.values();
    for (int o = 0; o < outer; ++o)
      std::copy_n(v.begin() + static_cast<long>(o) * len * inner, len * inner,
                  out.begin() + (static_cast<long>(o) * total_axis + offset) * inner);
    offset += len;
  }
  return make_result(out_shape, std::move(out), parts,
                     [offsets, outer, inner, total_axis, axis](Node& self) {
                       for (size_t k = 0; k < self.inputs.size(); ++k) {
                         Node& in = *self.inputs[k];
                         if (!in.requires_grad) continue;
                         const int len = in.shape[static_cast<size_t>(axis)];
                         for (int o = 0; o < outer; ++o) {
                           const double* src =
                               self.grad.data() +
                               (static_cast<long>(o) * total_axis + offsets[k]) * inner;
                           double* dst = in.grad.data() + static_cast<long>(o) * len * inner;
                           for (int i = 0; i < len * inner; ++i) dst[i] += src[i];
                         }
                       }
                     });
}

Tensor narrow(const Tensor& x, int start, int length) {
  require(x.rank() >= 2, ErrorCode::kShapeMismatch, "narrow needs rank >= 2");
  const int c = x.dim(1);
  require(start >= 0 && length > 0 && start + length <= c, ErrorCode::kShapeMismatch,
          "narrow range out of bounds");
  const int outer = x.dim(0);
  int inner = 1;
  for (int d = 2; d < x.rank(); ++d) inner *= x.dim(d);
  Shape shape = x.shape();
  shape[1] = length;
  std::vector<double> out(static_cast<size_t>(outer) * length * inner);
  const auto& v = x.values();
  for (int o = 0; o < outer; ++o)
    std::copy_n(v.begin() + (static_cast<long>(o) * c + start) * inner, length * inner,
                out.begin() + static_cast<long>(o) * length * inner);
  return make_result(shape, std::move(out), {x}, [outer, inner, c, start, length](Node& self) {
    Node& in = *self.inputs[0];
    for (int o = 0; o < outer; ++o) {
      const double* src = self.grad.data() + static_cast<long>(o) * length * inner;
      double* dst = in.grad.data() + (static_cast<long>(o) * c + start) * inner;
      for (int i = 0; i < length * inner; ++i) dst[i] += src[i];
    }
  });
}

Tensor gather_rows(const Tensor& x, std::span<const int> rows) {
  require(x.rank() >= 1, ErrorCode::kShapeMismatch, "gather_rows on scalar");
  const int n = x.dim(0);
  const int row_size = n == 0 ? 0 : x.size() / n;
  std::vector<int> idx(rows.begin(), rows.end());
  for (int r : idx)
    require(r >= -1 && r < n, ErrorCode::kUnknownIndex, "gather_rows index " + std::to_string(r));
  Shape shape = x.shape();
  shape[0] = static_cast<int>(idx.size());
  std::vector<double> out(idx.size() * static_cast<size_t>(row_size), 0.0);
  const auto& v = x.values();
  for (size_t i = 0; i < idx.size(); ++i)
    if (idx[i] >= 0)
      std::copy_n(v.begin() + static_cast<long>(idx[i]) * row_size, row_size,
                  out.begin() + static_cast<long>(i) * row_size);
  return make_result(shape, std::move(out), {x}, [idx = std::move(idx), row_size](Node& self) {
    Node& in = *self.inputs[0];
    for (size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] < 0) continue;
      const double* src = self.grad.data() + static_cast<long>(i) * row_size;
      double* dst = in.grad.data() + static_cast<long>(idx[i]) * row_size;
      for (int k = 0; k < row_size; ++k) dst[k] += src[k];
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank(x, 2, "linear input");
  require_rank(w, 2, "linear weight");
  const int n = x.dim(0), f = x.dim(1), o = w.dim(0);
  require(w.dim(1) == f, ErrorCode::kShapeMismatch,
          "linear: input width " + std::to_string(f) + " vs weight " + shape_string(w.shape()));
  if (b.defined()) require(b.size() == o, ErrorCode::kShapeMismatch, "linear bias");
  std::vector<double> out(static_cast<size_t>(n) * o);
  MapMat y(out.data(), n, o);
  ConstMapMat xm(x.values().data(), n, f);
  ConstMapMat wm(w.values().data(), o, f);
  y.noalias() = xm * wm.transpose();
  if (b.defined()) {
    Eigen::Map<const Eigen::RowVectorXd> bv(b.values().data(), o);
    y.rowwise() += bv;
  }
  std::vector<Tensor> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  return make_result({n, o}, std::move(out), inputs, [n, f, o](Node& self) {
    Node& xn = *self.inputs[0];
    Node& wn = *self.inputs[1];
    ConstMapMat dy(self.grad.data(), n, o);
    if (xn.requires_grad) {
      MapMat dx(xn.grad.data(), n, f);
      dx.noalias() += dy * ConstMapMat(wn.value.data(), o, f);
    }
    if (wn.requires_grad) {
      MapMat dw(wn.grad.data(), o, f);
      dw.noalias() += dy.transpose() * ConstMapMat(xn.value.data(), n, f);
    }
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      Node& bn = *self.inputs[2];
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < o; ++c) bn.grad[static_cast<size_t>(c)] += dy(r, c);
    }
  });
}

namespace {

struct ConvGeometry {
  int n, c, h, w, o, k, stride, pad, ho, wo;
  long rows() const { return static_cast<long>(c) * k * k; }
  long cols() const { return static_cast<long>(n) * ho * wo; }
};

// Output columns [lo, hi) whose tap offset lands inside [0, size).
inline void valid_range(int offset, int stride, int size, int out, int& lo, int& hi) {
  // o*stride + offset in [0, size)
  lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  hi = size - offset <= 0 ? 0 : (size - offset + stride - 1) / stride;
  hi = std::min(hi, out);
  lo = std::min(lo, hi);
}

void im2col(const double* x, const ConvGeometry& g, double* col) {
  const long cols = g.cols();
  const int plane = g.ho * g.wo;
  for (int ci = 0; ci < g.c; ++ci)
    for (int ki = 0; ki < g.k; ++ki)
      for (int kj = 0; kj < g.k; ++kj) {
        double* row = col + ((static_cast<long>(ci) * g.k + ki) * g.k + kj) * cols;
        int x_lo, x_hi;
        valid_range(kj - g.pad, g.stride, g.w, g.wo, x_lo, x_hi);
        for (int ni = 0; ni < g.n; ++ni) {
          const double* src = x + (static_cast<long>(ni) * g.c + ci) * g.h * g.w;
          double* dst = row + static_cast<long>(ni) * plane;
          for (int oy = 0; oy < g.ho; ++oy) {
            const int iy = oy * g.stride - g.pad + ki;
            double* d = dst + oy * g.wo;
            if (iy < 0 || iy >= g.h) {
              std::fill_n(d, g.wo, 0.0);
              continue;
            }
            const double* s = src + static_cast<long>(iy) * g.w + (kj - g.pad);
            std::fill_n(d, x_lo, 0.0);
            if (g.stride == 1) {
              std::copy(s + x_lo, s + x_hi, d + x_lo);
            } else {
              for (int ox = x_lo; ox < x_hi; ++ox) d[ox] = s[ox * g.stride];
            }
            std::fill(d + x_hi, d + g.wo, 0.0);
          }
        }
      }
}

void col2im(const double* col, const ConvGeometry& g, double* dx) {
  const long cols = g.cols();
  const int plane = g.ho * g.wo;
  for (int ci = 0; ci < g.c; ++ci)
    for (int ki = 0; ki < g.k; ++ki)
      for (int kj = 0; kj < g.k; ++kj) {
        const double* row = col + ((static_cast<long>(ci) * g.k + ki) * g.k + kj) * cols;
        int x_lo, x_hi;
        valid_range(kj - g.pad, g.stride, g.w, g.wo, x_lo, x_hi);
        for (int ni = 0; ni < g.n; ++ni) {
          double* dst = dx + (static_cast<long>(ni) * g.c + ci) * g.h * g.w;
          const double* src = row + static_cast<long>(ni) * plane;
          for (int oy = 0; oy < g.ho; ++oy) {
            const int iy = oy * g.stride - g.pad + ki;
            if (iy < 0 || iy >= g.h) continue;
            double* d = dst + static_cast<long>(iy) * g.w + (kj - g.pad);
            const double* s = src + oy * g.wo;
            if (g.stride == 1) {
              for (int ox = x_lo; ox < x_hi; ++ox) d[ox] += s[ox];
            } else {
              for (int ox = x_lo; ox < x_hi; ++ox) d[ox * g.stride] += s[ox];
            }
          }
        }
      }
}

}  // namespace

namespace {

// Images per im2col chunk: keeps the column buffer near cache size.
int conv_chunk(const ConvGeometry& g) {
  const int plane = g.ho * g.wo;
  return std::max(1, std::min(g.n, 2048 / std::max(1, plane)));
}

// Geometry of images [n0, n0 + count).
ConvGeometry sub_geometry(const ConvGeometry& g, int count) {
  ConvGeometry s = g;
  s.n = count;
  return s;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  require_rank(x, 4, "conv2d input");
  require_rank(w, 4, "conv2d weight");
  ConvGeometry g{};
  g.n = x.dim(0);
  g.c = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.o = w.dim(0);
  g.k = w.dim(2);
  g.stride = stride;
  g.pad = pad;
  require(w.dim(1) == g.c && w.dim(3) == g.k, ErrorCode::kShapeMismatch,
          "conv2d: input " + shape_string(x.shape()) + " vs weight " + shape_string(w.shape()));
  g.ho = (g.h + 2 * pad - g.k) / stride + 1;
  g.wo = (g.w + 2 * pad - g.k) / stride + 1;
  require(g.ho > 0 && g.wo > 0, ErrorCode::kShapeMismatch, "conv2d: output would be empty");
  if (b.defined()) require(b.size() == g.o, ErrorCode::kShapeMismatch, "conv2d bias");

  const int plane = g.ho * g.wo;
  const long in_image = static_cast<long>(g.c) * g.h * g.w;
  const long out_image = static_cast<long>(g.o) * plane;
  const int chunk = conv_chunk(g);
  std::vector<double> out(static_cast<size_t>(g.n) * out_image);
  std::vector<double> col(static_cast<size_t>(g.rows()) * chunk * plane);
  RowMatrix ym;
  ConstMapMat wm(w.values().data(), g.o, g.rows());
  for (int n0 = 0; n0 < g.n; n0 += chunk) {
    const int nc = std::min(chunk, g.n - n0);
    const ConvGeometry s = sub_geometry(g, nc);
    im2col(x.values().data() + n0 * in_image, s, col.data());
    ConstMapMat cm(col.data(), s.rows(), s.cols());
    if (nc == 1) {
      MapMat(out.data() + n0 * out_image, g.o, plane).noalias() = wm * cm;
    } else {
      ym.noalias() = wm * cm;
      for (int ni = 0; ni < nc; ++ni)
        for (int oi = 0; oi < g.o; ++oi)
          std::copy_n(ym.data() + static_cast<long>(oi) * s.cols() + static_cast<long>(ni) * plane,
                      plane, out.data() + (n0 + ni) * out_image + static_cast<long>(oi) * plane);
    }
  }
  if (b.defined())
    for (int ni = 0; ni < g.n; ++ni)
      for (int oi = 0; oi < g.o; ++oi) {
        const double bias = b.values()[static_cast<size_t>(oi)];
        double* dst = out.data() + ni * out_image + static_cast<long>(oi) * plane;
        for (int p = 0; p < plane; ++p) dst[p] += bias;
      }

  std::vector<Tensor> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  return make_result({g.n, g.o, g.ho, g.wo}, std::move(out), inputs, [g](Node& self) {
    Node& xn = *self.inputs[0];
    Node& wn = *self.inputs[1];
    const int plane = g.ho * g.wo;
    const long in_image = static_cast<long>(g.c) * g.h * g.w;
    const long out_image = static_cast<long>(g.o) * plane;
    const int chunk = conv_chunk(g);
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      Node& bn = *self.inputs[2];
      for (int ni = 0; ni < g.n; ++ni)
        for (int oi = 0; oi < g.o; ++oi) {
          const double* src = self.grad.data() + ni * out_image + static_cast<long>(oi) * plane;
          double acc = 0.0;
          for (int p = 0; p < plane; ++p) acc += src[p];
          bn.grad[static_cast<size_t>(oi)] += acc;
        }
    }
    if (!wn.requires_grad && !xn.requires_grad) return;
    std::vector<double> col(static_cast<size_t>(g.rows()) * chunk * plane);
    RowMatrix dy, dcol;
    ConstMapMat wm(wn.value.data(), g.o, g.rows());
    for (int n0 = 0; n0 < g.n; n0 += chunk) {
      const int nc = std::min(chunk, g.n - n0);
      const ConvGeometry s = sub_geometry(g, nc);
      const double* dy_ptr;
      if (nc == 1) {
        dy_ptr = self.grad.data() + n0 * out_image;
      } else {
        dy.resize(g.o, s.cols());
        for (int ni = 0; ni < nc; ++ni)
          for (int oi = 0; oi < g.o; ++oi)
            std::copy_n(self.grad.data() + (n0 + ni) * out_image + static_cast<long>(oi) * plane,
                        plane, dy.data() + static_cast<long>(oi) * s.cols() + static_cast<long>(ni) * plane);
        dy_ptr = dy.data();
      }
      ConstMapMat dym(dy_ptr, g.o, s.cols());
      if (wn.requires_grad) {
        im2col(xn.value.data() + n0 * in_image, s, col.data());
        MapMat(wn.grad.data(), g.o, g.rows()).noalias() +=
            dym * ConstMapMat(col.data(), s.rows(), s.cols()).transpose();
      }
      if (xn.requires_grad) {
        dcol.noalias() = wm.transpose() * dym;
        col2im(dcol.data(), s, xn.grad.data() + n0 * in_image);
      }
    }
  });
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 4, "global_avg_pool");
  const int n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  std::vector<double> out(static_cast<size_t>(n) * c);
  const auto& v = x.values();
  for (int i = 0; i < n * c; ++i) {
    double s = 0.0;
    for (int p = 0; p < plane; ++p) s += v[static_cast<size_t>(i) * plane + p];
    out[static_cast<size_t>(i)] = s / plane;
  }
  return make_result({n, c}, std::move(out), {x}, [plane](Node& self) {
    Node& in = *self.inputs[0];
    for (size_t i = 0; i < self.grad.size(); ++i) {
      const double g = self.grad[i] / plane;
      for (int p = 0; p < plane; ++p) in.grad[i * plane + p] += g;
    }
  });
}

Tensor broadcast_spatial(const Tensor& v, int h, int w) {
  require_rank(v, 2, "broadcast_spatial");
  const int n = v.dim(0), c = v.dim(1), plane = h * w;
  std::vector<double> out(static_cast<size_t>(n) * c * plane);
  for (int i = 0; i < n * c; ++i)
    std::fill_n(out.begin() + static_cast<long>(i) * plane, plane, v.values()[static_cast<size_t>(i)]);
  return make_result({n, c, h, w}, std::move(out), {v}, [plane](Node& self) {
    Node& in = *self.inputs[0];
    for (size_t i = 0; i < in.grad.size(); ++i) {
      double s = 0.0;
      for (int p = 0; p < plane; ++p) s += self.grad[i * plane + p];
      in.grad[i] += s;
    }
  });
}

Tensor resize_nearest(const Tensor& x, int h, int w) {
  require_rank(x, 4, "resize_nearest");
  const int nc = x.dim(0) * x.dim(1), ih = x.dim(2), iw = x.dim(3);
  std::vector<int> src_index(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx) {
      const int sy = static_cast<int>(static_cast<long>(y) * ih / h);
      const int sx = static_cast<int>(static_cast<long>(xx) * iw / w);
      src_index[static_cast<size_t>(y) * w + xx] = sy * iw + sx;
    }
  const int in_plane = ih * iw, out_plane = h * w;
  std::vector<double> out(static_cast<size_t>(nc) * out_plane);
  const auto& v = x.values();
  for (int i = 0; i < nc; ++i)
    for (int p = 0; p < out_plane; ++p)
      out[static_cast<size_t>(i) * out_plane + p] =
          v[static_cast<size_t>(i) * in_plane + src_index[static_cast<size_t>(p)]];
  return make_result({x.dim(0), x.dim(1), h, w}, std::move(out), {x},
                     [src_index = std::move(src_index), nc, in_plane, out_plane](Node& self) {
                       Node& in = *self.inputs[0];
                       for (int i = 0; i < nc; ++i)
                         for (int p = 0; p < out_plane; ++p)
                           in.grad[static_cast<size_t>(i) * in_plane + src_index[static_cast<size_t>(p)]] +=
                               self.grad[static_cast<size_t>(i) * out_plane + p];
                     });
}

Tensor upsample_nearest(const Tensor& x, int factor) {
  require_rank(x, 4, "upsample_nearest");
  return resize_nearest(x, x.dim(2) * factor, x.dim(3) * factor);
}

Tensor normalize(const Tensor& x, NormMode mode, std::span<const double> running_mean,
                 std::span<const double> running_var, NormStats* batch_stats, double eps) {
  require_rank(x, 4, "normalize");
  const int n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  const auto& v = x.values();
  std::vector<double> out(v.size());
  // Each group is a set of (sample, channel) planes sharing statistics.
  // inv_std[group] and xhat are kept for backward.
  const bool per_instance = mode == NormMode::kInstance;
  const int groups = per_instance ? n * c : c;
  std::vector<double> inv_std(static_cast<size_t>(groups));
  auto plane_ptr = [&](int ni, int ci) { return static_cast<size_t>(ni * c + ci) * plane; };

  if (mode == NormMode::kRunning) {
    require(static_cast<int>(running_mean.size()) == c && static_cast<int>(running_var.size()) == c,
            ErrorCode::kShapeMismatch, "normalize: running stats size");
    for (int ci = 0; ci < c; ++ci) {
      const double is = 1.0 / std::sqrt(running_var[static_cast<size_t>(ci)] + eps);
      inv_std[static_cast<size_t>(ci)] = is;
      for (int ni = 0; ni < n; ++ni) {
        const size_t base = plane_ptr(ni, ci);
        for (int p = 0; p < plane; ++p)
          out[base + p] = (v[base + p] - running_mean[static_cast<size_t>(ci)]) * is;
      }
    }
    return make_result(x.shape(), std::move(out), {x}, [inv_std, n, c, plane](Node& self) {
      Node& in = *self.inputs[0];
      for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci) {
          const size_t base = static_cast<size_t>(ni * c + ci) * plane;
          for (int p = 0; p < plane; ++p)
            in.grad[base + p] += self.grad[base + p] * inv_std[static_cast<size_t>(ci)];
        }
    });
  }

  if (batch_stats) {
    batch_stats->mean.assign(static_cast<size_t>(c), 0.0);
    batch_stats->var.assign(static_cast<size_t>(c), 0.0);
  }
  for (int gi = 0; gi < groups; ++gi) {
    const int ci = per_instance ? gi % c : gi;
    const int n_begin = per_instance ? gi / c : 0;
    const int n_end = per_instance ? n_begin + 1 : n;
    const double count = static_cast<double>(n_end - n_begin) * plane;
    double s = 0.0;
    for (int ni = n_begin; ni < n_end; ++ni) {
      const size_t base = plane_ptr(ni, ci);
      for (int p = 0; p < plane; ++p) s += v[base + p];
    }
    const double mu = s / count;
    double sq = 0.0;
    for (int ni = n_begin; ni < n_end; ++ni) {
      const size_t base = plane_ptr(ni, ci);
      for (int p = 0; p < plane; ++p) {
        const double d = v[base + p] - mu;
        sq += d * d;
      }
    }
    const double var = sq / count;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(gi)] = is;
    for (int ni = n_begin; ni < n_end; ++ni) {
      const size_t base = plane_ptr(ni, ci);
      for (int p = 0; p < plane; ++p) out[base + p] = (v[base + p] - mu) * is;
    }
    if (batch_stats && !per_instance) {
      batch_stats->mean[static_cast<size_t>(ci)] = mu;
      batch_stats->var[static_cast<size_t>(ci)] = var;
    }
  }
  return make_result(x.shape(), std::move(out), {x},
                     [inv_std, n, c, plane, per_instance, groups](Node& self) {
                       Node& in = *self.inputs[0];
                       for (int gi = 0; gi < groups; ++gi) {
                         const int ci = per_instance ? gi % c : gi;
                         const int n_begin = per_instance ? gi / c : 0;
                         const int n_end = per_instance ? n_begin + 1 : n;
                         const double count = static_cast<double>(n_end - n_begin) * plane;
                         double g_sum = 0.0, gx_sum = 0.0;
                         for (int ni = n_begin; ni < n_end; ++ni) {
                           const size_t base = static_cast<size_t>(ni * c + ci) * plane;
                           for (int p = 0; p < plane; ++p) {
                             g_sum += self.grad[base + p];
                             gx_sum += self.grad[base + p] * self.value[base + p];
                           }
                         }
                         const double is = inv_std[static_cast<size_t>(gi)];
                         const double g_mean = g_sum / count, gx_mean = gx_sum / count;
                         for (int ni = n_begin; ni < n_end; ++ni) {
                           const size_t base = static_cast<size_t>(ni * c + ci) * plane;
                           for (int p = 0; p < plane; ++p)
                             in.grad[base + p] +=
                                 is * (self.grad[base + p] - g_mean - self.value[base + p] * gx_mean);
                         }
                       }
                     });
}

Tensor fill_boxes(const Tensor& v, std::span<const CellRect> rects, int grid) {
  require_rank(v, 2, "fill_boxes");
  const int n = v.dim(0), d = v.dim(1);
  require(static_cast<int>(rects.size()) == n, ErrorCode::kLengthMismatch,
          "fill_boxes: one rect per row");
  require(grid >= 1, ErrorCode::kInvalidArgument, "fill_boxes: grid must be >= 1");
  std::vector<CellRect> rs(rects.begin(), rects.end());
  for (const auto& r : rs)
    require(r.row0 >= 0 && r.col0 >= 0 && r.row1 <= grid && r.col1 <= grid && r.row0 < r.row1 &&
                r.col0 < r.col1,
            ErrorCode::kInvalidBBox, "fill_boxes: rect outside grid");
  const int plane = grid * grid;
  std::vector<double> out(static_cast<size_t>(n) * d * plane, 0.0);
  const auto& vals = v.values();
  for (int i = 0; i < n; ++i) {
    const CellRect& r = rs[static_cast<size_t>(i)];
    for (int k = 0; k < d; ++k) {
      const double value = vals[static_cast<size_t>(i) * d + k];
      double* base = out.data() + (static_cast<long>(i) * d + k) * plane;
      for (int y = r.row0; y < r.row1; ++y) std::fill(base + y * grid + r.col0, base + y * grid + r.col1, value);
    }
  }
  return make_result({n, d, grid, grid}, std::move(out), {v},
                     [rs = std::move(rs), n, d, grid, plane](Node& self) {
                       Node& in = *self.inputs[0];
                       for (int i = 0; i < n; ++i) {
                         const CellRect& r = rs[static_cast<size_t>(i)];
                         for (int k = 0; k < d; ++k) {
                           const double* base = self.grad.data() + (static_cast<long>(i) * d + k) * plane;
                           double s = 0.0;
                           for (int y = r.row0; y < r.row1; ++y)
                             for (int xx = r.col0; xx < r.col1; ++xx) s += base[y * grid + xx];
                           in.grad[static_cast<size_t>(i) * d + k] += s;
                         }
                       }
                     });
}

Tensor crop_resize(const Tensor& images, std::span<const int> source, std::span<const Box> boxes,
                   int size) {
  require_rank(images, 4, "crop_resize");
  require(source.size() == boxes.size(), ErrorCode::kLengthMismatch, "crop_resize: sources vs boxes");
  const int b = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  const int n = static_cast<int>(boxes.size());
  // Per output pixel: 4 source offsets and weights (shared by channels).
  struct Tap {
    int idx[4];
    double wt[4];
  };
  const int out_plane = size * size;
  std::vector<Tap> taps(static_cast<size_t>(n) * out_plane);
  std::vector<int> src(source.begin(), source.end());
  for (int i = 0; i < n; ++i) {
    require(src[static_cast<size_t>(i)] >= 0 && src[static_cast<size_t>(i)] < b,
            ErrorCode::kUnknownIndex, "crop_resize: source image index");
    const Box& bx = boxes[static_cast<size_t>(i)];
    const double px0 = bx.x0 * w, py0 = bx.y0 * h;
    const double sx = (bx.x1 - bx.x0) * w / size, sy = (bx.y1 - bx.y0) * h / size;
    for (int oy = 0; oy < size; ++oy) {
      const double fy = std::clamp(py0 + (oy + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
      const int y0 = static_cast<int>(std::floor(fy));
      const int y1 = std::min(y0 + 1, h - 1);
      const double ay = fy - y0;
      for (int ox = 0; ox < size; ++ox) {
        const double fx = std::clamp(px0 + (ox + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
        const int x0 = static_cast<int>(std::floor(fx));
        const int x1 = std::min(x0 + 1, w - 1);
        const double ax = fx - x0;
        Tap& t = taps[static_cast<size_t>(i) * out_plane + oy * size + ox];
        t.idx[0] = y0 * w + x0;
        t.idx[1] = y0 * w + x1;
        t.idx[2] = y1 * w + x0;
        t.idx[3] = y1 * w + x1;
        t.wt[0] = (1 - ay) * (1 - ax);
        t.wt[1] = (1 - ay) * ax;
        t.wt[2] = ay * (1 - ax);
        t.wt[3] = ay * ax;
      }
    }
  }
  const int in_plane = h * w;
  std::vector<double> out(static_cast<size_t>(n) * c * out_plane);
  const auto& v = images.values();
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const double* plane = v.data() + (static_cast<long>(src[static_cast<size_t>(i)]) * c + ch) * in_plane;
      double* dst = out.data() + (static_cast<long>(i) * c + ch) * out_plane;
      for (int p = 0; p < out_plane; ++p) {
        const Tap& t = taps[static_cast<size_t>(i) * out_plane + p];
        dst[p] = t.wt[0] * plane[t.idx[0]] + t.wt[1] * plane[t.idx[1]] + t.wt[2] * plane[t.idx[2]] +
                 t.wt[3] * plane[t.idx[3]];
      }
    }
  return make_result({n, c, size, size}, std::move(out), {images},
                     [taps = std::move(taps), src = std::move(src), n, c, in_plane, out_plane](Node& self) {
                       Node& in = *self.inputs[0];
                       for (int i = 0; i < n; ++i)
                         for (int ch = 0; ch < c; ++ch) {
                           double* plane = in.grad.data() +
                                           (static_cast<long>(src[static_cast<size_t>(i)]) * c + ch) * in_plane;
                           const double* g = self.grad.data() + (static_cast<long>(i) * c + ch) * out_plane;
                           for (int p = 0; p < out_plane; ++p) {
                             const Tap& t = taps[static_cast<size_t>(i) * out_plane + p];
                             for (int k = 0; k < 4; ++k) plane[t.idx[k]] += t.wt[k] * g[p];
                           }
                         }
                     });
}

Tensor log_softmax(const Tensor& x) {
  require_rank(x, 2, "log_softmax");
  const int n = x.dim(0), k = x.dim(1);
  std::vector<double> out(x.values());
  for (int r = 0; r < n; ++r) {
    double* row = out.data() + static_cast<long>(r) * k;
    const double mx = *std::max_element(row, row + k);
    double s = 0.0;
    for (int j = 0; j < k; ++j) s += std::exp(row[j] - mx);
    const double lse = mx + std::log(s);
    for (int j = 0; j < k; ++j) row[j] -= lse;
  }
  return make_result(x.shape(), std::move(out), {x}, [n, k](Node& self) {
    Node& in = *self.inputs[0];
    for (int r = 0; r < n; ++r) {
      const double* g = self.grad.data() + static_cast<long>(r) * k;
      const double* y = self.value.data() + static_cast<long>(r) * k;
      double gs = 0.0;
      for (int j = 0; j < k; ++j) gs += g[j];
      for (int j = 0; j < k; ++j) in.grad[static_cast<size_t>(r) * k + j] += g[j] - std::exp(y[j]) * gs;
    }
  });
}

Tensor pick(const Tensor& x, std::span<const int> cols) {
  require_rank(x, 2, "pick");
  const int n = x.dim(0), k = x.dim(1);
  require(static_cast<int>(cols.size()) == n, ErrorCode::kLengthMismatch, "pick: one column per row");
  std::vector<int> cs(cols.begin(), cols.end());
  for (int c : cs) require(c >= 0 && c < k, ErrorCode::kLabelOutOfRange, "pick: column " + std::to_string(c));
  std::vector<double> out(static_cast<size_t>(n));
  for (int r = 0; r < n; ++r) out[static_cast<size_t>(r)] = x.values()[static_cast<size_t>(r) * k + cs[static_cast<size_t>(r)]];
  return make_result({n}, std::move(out), {x}, [cs = std::move(cs), k](Node& self) {
    Node& in = *self.inputs[0];
    for (size_t r = 0; r < cs.size(); ++r) in.grad[r * k + cs[r]] += self.grad[r];
  });
}

}  // namespace attrgan::nn

namespace attrgan::nn {

namespace {

// Output index range [lo, hi) whose tap `k` lands inside input range [in0, in1).
std::pair<int, int> tap_range(int in0, int in1, int k, int stride, int pad, int out_size) {
  // o*stride - pad + k in [in0, in1)  <=>  o in [ceil((in0+pad-k)/s), ceil((in1+pad-k)/s))
  auto ceil_div = [](int a, int s) { return a >= 0 ? (a + s - 1) / s : -((-a) / s); };
  const int lo = std::max(0, ceil_div(in0 + pad - k, stride));
  const int hi = std::min(out_size, ceil_div(in1 + pad - k, stride));
  return {lo, std::max(lo, hi)};
}

}  // namespace

Tensor box_conv2d(const Tensor& v, std::span<const CellRect> rects, int grid, const Tensor& w,
                  const Tensor& b, int stride, int pad) {
  require_rank(v, 2, "box_conv2d input");
  require_rank(w, 4, "box_conv2d weight");
  const int n = v.dim(0), d = v.dim(1), o = w.dim(0), k = w.dim(2), kk = k * k;
  require(w.dim(1) == d && w.dim(3) == k, ErrorCode::kShapeMismatch,
          "box_conv2d: input " + shape_string(v.shape()) + " vs weight " + shape_string(w.shape()));
  require(static_cast<int>(rects.size()) == n, ErrorCode::kLengthMismatch,
          "box_conv2d: one rect per row");
  if (b.defined()) require(b.size() == o, ErrorCode::kShapeMismatch, "box_conv2d bias");
  const int out = (grid + 2 * pad - k) / stride + 1;
  require(out > 0, ErrorCode::kShapeMismatch, "box_conv2d: output would be empty");
  std::vector<CellRect> rs(rects.begin(), rects.end());

  // wmat(dd, oo*kk + t) = w[oo, dd, t]
  RowMatrix wmat(d, o * kk);
  const auto& wv = w.values();
  for (int oo = 0; oo < o; ++oo)
    for (int dd = 0; dd < d; ++dd)
      for (int t = 0; t < kk; ++t) wmat(dd, oo * kk + t) = wv[(static_cast<size_t>(oo) * d + dd) * kk + t];
  RowMatrix u = ConstMapMat(v.values().data(), n, d) * wmat;  // [n, o*kk]

  const int plane = out * out;
  std::vector<double> y(static_cast<size_t>(n) * o * plane);
  for (int i = 0; i < n; ++i)
    for (int oo = 0; oo < o; ++oo)
      std::fill_n(y.begin() + (static_cast<long>(i) * o + oo) * plane, plane,
                  b.defined() ? b.values()[static_cast<size_t>(oo)] : 0.0);
  for (int i = 0; i < n; ++i) {
    const CellRect& r = rs[static_cast<size_t>(i)];
    for (int ki = 0; ki < k; ++ki) {
      const auto [y0, y1] = tap_range(r.row0, r.row1, ki, stride, pad, out);
      for (int kj = 0; kj < k; ++kj) {
        const auto [x0, x1] = tap_range(r.col0, r.col1, kj, stride, pad, out);
        if (y0 >= y1 || x0 >= x1) continue;
        for (int oo = 0; oo < o; ++oo) {
          const double val = u(i, oo * kk + ki * k + kj);
          double* base = y.data() + (static_cast<long>(i) * o + oo) * plane;
          for (int yy = y0; yy < y1; ++yy)
            for (int xx = x0; xx < x1; ++xx) base[yy * out + xx] += val;
        }
      }
    }
  }

  std::vector<Tensor> inputs{v, w};
  if (b.defined()) inputs.push_back(b);
  return make_result(
      {n, o, out, out}, std::move(y), inputs,
      [rs = std::move(rs), wmat = std::move(wmat), n, d, o, k, kk, stride, pad, out](Node& self) {
        const int plane = out * out;
        RowMatrix du = RowMatrix::Zero(n, o * kk);
        for (int i = 0; i < n; ++i) {
          const CellRect& r = rs[static_cast<size_t>(i)];
          for (int ki = 0; ki < k; ++ki) {
            const auto [y0, y1] = tap_range(r.row0, r.row1, ki, stride, pad, out);
            for (int kj = 0; kj < k; ++kj) {
              const auto [x0, x1] = tap_range(r.col0, r.col1, kj, stride, pad, out);
              if (y0 >= y1 || x0 >= x1) continue;
              for (int oo = 0; oo < o; ++oo) {
                const double* g = self.grad.data() + (static_cast<long>(i) * o + oo) * plane;
                double s = 0.0;
                for (int yy = y0; yy < y1; ++yy)
                  for (int xx = x0; xx < x1; ++xx) s += g[yy * out + xx];
                du(i, oo * kk + ki * k + kj) = s;
              }
            }
          }
        }
        Node& vn = *self.inputs[0];
        Node& wn = *self.inputs[1];
        if (vn.requires_grad) {
          MapMat dv(vn.grad.data(), n, d);
          dv.noalias() += du * wmat.transpose();
        }
        if (wn.requires_grad) {
          RowMatrix dw = ConstMapMat(vn.value.data(), n, d).transpose() * du;  // [d, o*kk]
          for (int oo = 0; oo < o; ++oo)
            for (int dd = 0; dd < d; ++dd)
              for (int t = 0; t < kk; ++t) wn.grad[(static_cast<size_t>(oo) * d + dd) * kk + t] += dw(dd, oo * kk + t);
        }
        if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
          Node& bn = *self.inputs[2];
          for (int i = 0; i < n; ++i)
            for (int oo = 0; oo < o; ++oo) {
              const double* g = self.grad.data() + (static_cast<long>(i) * o + oo) * plane;
              double s = 0.0;
              for (int p = 0; p < plane; ++p) s += g[p];
              bn.grad[static_cast<size_t>(oo)] += s;
            }
        }
      });
}

}  // namespace attrgan::nn

namespace attrgan::nn {

Tensor resized_conv2d(const Tensor& x, int h, int w, const Tensor& weight, const Tensor& b, int pad) {
  require_rank(x, 4, "resized_conv2d input");
  require_rank(weight, 4, "resized_conv2d weight");
  const int n = x.dim(0), c = x.dim(1), ih = x.dim(2), iw = x.dim(3);
  const int o = weight.dim(0), k = weight.dim(2), kk = k * k;
  require(weight.dim(1) == c && weight.dim(3) == k, ErrorCode::kShapeMismatch,
          "resized_conv2d: input " + shape_string(x.shape()) + " vs weight " +
              shape_string(weight.shape()));
  if (b.defined()) require(b.size() == o, ErrorCode::kShapeMismatch, "resized_conv2d bias");
  const int oh = h + 2 * pad - k + 1, ow = w + 2 * pad - k + 1;
  require(h > 0 && w > 0 && oh > 0 && ow > 0, ErrorCode::kShapeMismatch,
          "resized_conv2d: output would be empty");

  // Source cell of every padded position, -1 outside the resized image.
  // Index p in [0, oh + k - 1) stands for resized row p - pad.
  std::vector<int> src_y(static_cast<size_t>(oh + k - 1)), src_x(static_cast<size_t>(ow + k - 1));
  for (int p = 0; p < oh + k - 1; ++p) {
    const int r = p - pad;
    src_y[static_cast<size_t>(p)] = (r < 0 || r >= h) ? -1 : static_cast<int>(static_cast<long>(r) * ih / h);
  }
  for (int p = 0; p < ow + k - 1; ++p) {
    const int r = p - pad;
    src_x[static_cast<size_t>(p)] = (r < 0 || r >= w) ? -1 : static_cast<int>(static_cast<long>(r) * iw / w);
  }

  // wt((oo*kk + t), cc) = weight[oo, cc, t]
  RowMatrix wt(o * kk, c);
  const auto& wv = weight.values();
  for (int oo = 0; oo < o; ++oo)
    for (int cc = 0; cc < c; ++cc)
      for (int t = 0; t < kk; ++t) wt(oo * kk + t, cc) = wv[(static_cast<size_t>(oo) * c + cc) * kk + t];

  const int in_plane = ih * iw, out_plane = oh * ow;
  std::vector<double> out(static_cast<size_t>(n) * o * out_plane);
  RowMatrix u(o * kk, in_plane);
  for (int ni = 0; ni < n; ++ni) {
    u.noalias() = wt * ConstMapMat(x.values().data() + static_cast<long>(ni) * c * in_plane, c, in_plane);
    for (int oo = 0; oo < o; ++oo) {
      double* dst = out.data() + (static_cast<long>(ni) * o + oo) * out_plane;
      std::fill_n(dst, out_plane, b.defined() ? b.values()[static_cast<size_t>(oo)] : 0.0);
      for (int ki = 0; ki < k; ++ki)
        for (int kj = 0; kj < k; ++kj) {
          const double* ut = u.data() + static_cast<long>(oo * kk + ki * k + kj) * in_plane;
          for (int y = 0; y < oh; ++y) {
            const int sy = src_y[static_cast<size_t>(y + ki)];
            if (sy < 0) continue;
            const double* urow = ut + sy * iw;
            double* drow = dst + y * ow;
            for (int xx = 0; xx < ow; ++xx) {
              const int sx = src_x[static_cast<size_t>(xx + kj)];
              if (sx >= 0) drow[xx] += urow[sx];
            }
          }
        }
    }
  }

  std::vector<Tensor> inputs{x, weight};
  if (b.defined()) inputs.push_back(b);
  return make_result(
      {n, o, oh, ow}, std::move(out), inputs,
      [src_y = std::move(src_y), src_x = std::move(src_x), wt = std::move(wt), n, c, iw, o, k, kk,
       oh, ow, in_plane, out_plane](Node& self) {
        Node& xn = *self.inputs[0];
        Node& wn = *self.inputs[1];
        if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
          Node& bn = *self.inputs[2];
          for (int ni = 0; ni < n; ++ni)
            for (int oo = 0; oo < o; ++oo) {
              const double* g = self.grad.data() + (static_cast<long>(ni) * o + oo) * out_plane;
              double s = 0.0;
              for (int p = 0; p < out_plane; ++p) s += g[p];
              bn.grad[static_cast<size_t>(oo)] += s;
            }
        }
        if (!xn.requires_grad && !wn.requires_grad) return;
        RowMatrix du(o * kk, in_plane);
        RowMatrix dwt = RowMatrix::Zero(o * kk, c);
        for (int ni = 0; ni < n; ++ni) {
          du.setZero();
          for (int oo = 0; oo < o; ++oo) {
            const double* g = self.grad.data() + (static_cast<long>(ni) * o + oo) * out_plane;
            for (int ki = 0; ki < k; ++ki)
              for (int kj = 0; kj < k; ++kj) {
                double* dut = du.data() + static_cast<long>(oo * kk + ki * k + kj) * in_plane;
                for (int y = 0; y < oh; ++y) {
                  const int sy = src_y[static_cast<size_t>(y + ki)];
                  if (sy < 0) continue;
                  double* urow = dut + sy * iw;
                  const double* grow = g + y * ow;
                  for (int xx = 0; xx < ow; ++xx) {
                    const int sx = src_x[static_cast<size_t>(xx + kj)];
                    if (sx >= 0) urow[sx] += grow[xx];
                  }
                }
              }
          }
          ConstMapMat xm(xn.value.data() + static_cast<long>(ni) * c * in_plane, c, in_plane);
          if (wn.requires_grad) dwt.noalias() += du * xm.transpose();
          if (xn.requires_grad)
            MapMat(xn.grad.data() + static_cast<long>(ni) * c * in_plane, c, in_plane).noalias() +=
                wt.transpose() * du;
        }
        if (wn.requires_grad)
          for (int oo = 0; oo < o; ++oo)
            for (int cc = 0; cc < c; ++cc)
              for (int t = 0; t < kk; ++t)
                wn.grad[(static_cast<size_t>(oo) * c + cc) * kk + t] += dwt(oo * kk + t, cc);
      });
}

}  // namespace attrgan::nn
