#pragma once

#include <span>
#include <vector>

#include "attrgan/layout.hpp"
#include "attrgan/nn/tensor.hpp"

namespace attrgan {

// One training image with its layout. Pixels are CHW, RGB, in [-1, 1].
struct Example {
  int id = 0;
  Layout layout;
  std::vector<double> image;
};

// [b, 3, H, W] from the examples' pixels; all must share one canvas.
nn::Tensor stack_images(std::span<const Example* const> batch);
nn::Tensor stack_images(std::span<const Example> batch);

}  // namespace attrgan
