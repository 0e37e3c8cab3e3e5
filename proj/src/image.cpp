#include "attrgan/image.hpp"

#include <openssl/evp.h>
#include <png.h>

#include <algorithm>
#include <csetjmp>
#include <cmath>
#include <fstream>
#include <iterator>

#include "attrgan/errors.hpp"

namespace attrgan {

Rgb8 to_rgb8(std::span<const double> chw, int width, int height) {
  const size_t plane = static_cast<size_t>(width) * height;
  require(chw.size() == 3 * plane, ErrorCode::kShapeMismatch, "to_rgb8: pixel count mismatch");
  Rgb8 out{width, height, std::vector<std::uint8_t>(3 * plane)};
  for (size_t p = 0; p < plane; ++p)
    for (size_t c = 0; c < 3; ++c) {
      const double v = std::clamp((chw[c * plane + p] + 1.0) * 0.5 * 255.0, 0.0, 255.0);
      out.pixels[p * 3 + c] = static_cast<std::uint8_t>(std::lround(v));
    }
  return out;
}

Rgb8 to_rgb8(const nn::Tensor& images, int index) {
  require(images.rank() == 4 && images.dim(1) == 3 && index >= 0 && index < images.dim(0),
          ErrorCode::kShapeMismatch, "to_rgb8: expected [b,3,H,W]");
  const int h = images.dim(2), w = images.dim(3);
  const size_t n = static_cast<size_t>(3) * h * w;
  return to_rgb8(images.data().subspan(n * static_cast<size_t>(index), n), w, h);
}

std::vector<double> from_rgb8(const Rgb8& image) {
  const size_t plane = static_cast<size_t>(image.width) * image.height;
  std::vector<double> out(3 * plane);
  for (size_t p = 0; p < plane; ++p)
    for (size_t c = 0; c < 3; ++c) out[c * plane + p] = image.pixels[p * 3 + c] / 255.0 * 2.0 - 1.0;
  return out;
}

namespace {

void write_bytes(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + len);
}

void flush_nothing(png_structp) {}

struct Reader {
  const std::vector<std::uint8_t>* bytes;
  size_t pos;
};

void read_bytes(png_structp png, png_bytep data, png_size_t len) {
  auto* r = static_cast<Reader*>(png_get_io_ptr(png));
  if (r->pos + len > r->bytes->size()) png_error(png, "truncated PNG");
  std::copy_n(r->bytes->data() + r->pos, len, data);
  r->pos += len;
}

thread_local std::string png_message;

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
  png_message = msg;
  png_longjmp(png, 1);
}
void png_warn(png_structp, png_const_charp) {}

}  // namespace

std::vector<std::uint8_t> encode_png(const Rgb8& image) {
  require(image.width > 0 && image.height > 0 &&
              image.pixels.size() == static_cast<size_t>(image.width) * image.height * 3,
          ErrorCode::kShapeMismatch, "encode_png: bad image buffer");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::kIoError, "PNG encode: " + png_message);
  }
  {
    png_set_write_fn(png, &out, write_bytes, flush_nothing);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    for (int y = 0; y < image.height; ++y)
      png_write_row(png, image.pixels.data() + static_cast<size_t>(y) * image.width * 3);
    png_write_end(png, nullptr);
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

Rgb8 decode_png(const std::vector<std::uint8_t>& bytes) {
  require(bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0, ErrorCode::kIoError,
          "not a PNG stream");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  Reader reader{&bytes, 0};
  Rgb8 img;
  bool bad_layout = false;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::kIoError, "PNG decode: " + png_message);
  }
  {
    png_set_read_fn(png, &reader, read_bytes);
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_bit_depth(png, info) < 8) png_set_packing(png);
    png_read_update_info(png, info);
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    bad_layout = png_get_rowbytes(png, info) != static_cast<size_t>(img.width) * 3;
    if (!bad_layout) {
      img.pixels.resize(static_cast<size_t>(img.width) * img.height * 3);
      for (int y = 0; y < img.height; ++y)
        png_read_row(png, img.pixels.data() + static_cast<size_t>(y) * img.width * 3, nullptr);
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  require(!bad_layout, ErrorCode::kIoError, "unsupported PNG layout");
  return img;
}

void write_png(const std::filesystem::path& path, const Rgb8& image) {
  auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::kIoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorCode::kIoError, "write failed for " + path.string());
}

Rgb8 read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::kIoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  require(text.size() % 4 == 0, ErrorCode::kParseError, "base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out(text.size() / 4 * 3);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  require(n >= 0, ErrorCode::kParseError, "invalid base64");
  size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<size_t>(n) - pad);
  return out;
}

}  // namespace attrgan
