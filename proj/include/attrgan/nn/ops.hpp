#pragma once

#include <span>
#include <vector>

#include "attrgan/nn/tensor.hpp"

namespace attrgan::nn {

// Elementwise (operands must have identical shapes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope = 0.2);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor abs(const Tensor& x);
// Gradient is zero outside [lo, hi].
Tensor clamp(const Tensor& x, double lo, double hi);
// log(sigmoid(x)) without overflow.
Tensor log_sigmoid(const Tensor& x);
// mask[i] != 0 ? a[i] : b[i]; the mask is a constant.
Tensor select(std::span<const char> mask, const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Concatenates along `axis` (0 or 1); all other dims must agree.
Tensor concat(const std::vector<Tensor>& parts, int axis);
// Slice [start, start+length) of dimension 1.
Tensor narrow(const Tensor& x, int start, int length);
// Rows of dim 0 picked by index; index -1 yields a zero row.
Tensor gather_rows(const Tensor& x, std::span<const int> rows);

// x [N,F], w [O,F], b [O] (b may be undefined).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
// x [N,C,H,W], w [O,C,k,k], b [O] (b may be undefined).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);

Tensor global_avg_pool(const Tensor& x);                    // [N,C,H,W] -> [N,C]
Tensor broadcast_spatial(const Tensor& v, int h, int w);    // [N,C] -> [N,C,h,w]
Tensor upsample_nearest(const Tensor& x, int factor);
Tensor resize_nearest(const Tensor& x, int h, int w);
// Equals conv2d(resize_nearest(x, h, w), w, b, 1, pad), evaluated per kernel
// tap at the input resolution.
Tensor resized_conv2d(const Tensor& x, int h, int w, const Tensor& weight, const Tensor& b, int pad);

enum class NormMode { kBatch, kInstance, kRunning };

struct NormStats {
  std::vector<double> mean;
  std::vector<double> var;
};

// Parameter-free normalization of [N,C,H,W]. kBatch reduces over (N,H,W) per
// channel, kInstance over (H,W) per sample and channel, kRunning uses the
// supplied running statistics. When `batch_stats` is non-null under kBatch the
// per-channel batch mean/variance are written to it.
Tensor normalize(const Tensor& x, NormMode mode, std::span<const double> running_mean,
                 std::span<const double> running_var, NormStats* batch_stats = nullptr,
                 double eps = 1e-5);

// Integer cell rectangle, half-open.
struct CellRect {
  int row0 = 0, col0 = 0, row1 = 0, col1 = 0;
  bool operator==(const CellRect&) const = default;
};

// v [n,D] -> [n,D,S,S] with row i of v written into rects[i], zero elsewhere.
Tensor fill_boxes(const Tensor& v, std::span<const CellRect> rects, int grid);

// Equals conv2d(fill_boxes(v, rects, grid), w, b, stride, pad) without
// materializing the [n,D,grid,grid] canvas: each kernel tap contributes a
// constant over an output rectangle.
Tensor box_conv2d(const Tensor& v, std::span<const CellRect> rects, int grid, const Tensor& w,
                  const Tensor& b, int stride, int pad);

// Normalized box (x0,y0,x1,y1) used by crop_resize.
struct Box {
  double x0 = 0, y0 = 0, x1 = 1, y1 = 1;
};

// Bilinear crop-and-resize (half-pixel centers, border clamp) of
// images [B,C,H,W]; crop i reads from images[source[i]] -> [n,C,size,size].
Tensor crop_resize(const Tensor& images, std::span<const int> source, std::span<const Box> boxes,
                   int size);

Tensor log_softmax(const Tensor& x);                       // rows of [N,K]
Tensor pick(const Tensor& x, std::span<const int> cols);  // [N,K] -> [N]

}  // namespace attrgan::nn
