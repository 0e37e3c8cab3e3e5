#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "attrgan/nn/tensor.hpp"

namespace attrgan {

// 8-bit interleaved RGB.
struct Rgb8 {
  int width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3
  bool operator==(const Rgb8&) const = default;
};

// CHW values in [-1,1] -> 8-bit, v -> round((v + 1) / 2 * 255), clamped.
Rgb8 to_rgb8(std::span<const double> chw, int width, int height);
// Image `index` of a [b,3,H,W] tensor.
Rgb8 to_rgb8(const nn::Tensor& images, int index);
std::vector<double> from_rgb8(const Rgb8& image);

std::vector<std::uint8_t> encode_png(const Rgb8& image);
Rgb8 decode_png(const std::vector<std::uint8_t>& bytes);
void write_png(const std::filesystem::path& path, const Rgb8& image);
Rgb8 read_png(const std::filesystem::path& path);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace attrgan
