#include "skullkit/png.hpp"

#include <algorithm>
#include <cmath>

#include <png.h>

#include "skullkit/error.hpp"

namespace skullkit {

Grid<unsigned char> window_to_gray(const CtSlice& slice, const IntensityWindow& window) {
  const auto& px = slice.pixels();
  Grid<unsigned char> out(px.rows(), px.cols());
  const double span = window.hi - window.lo;
  for (Eigen::Index i = 0; i < px.size(); ++i) {
    const double c = std::clamp(static_cast<double>(px.data()[i]), window.lo, window.hi);
    out.data()[i] = static_cast<unsigned char>(std::lround(255.0 * (c - window.lo) / span));
  }
  return out;
}

namespace {

void append_bytes(png_structp png, png_bytep data, png_size_t len) {
  auto* buf = static_cast<std::string*>(png_get_io_ptr(png));
  buf->append(reinterpret_cast<const char*>(data), len);
}

void no_flush(png_structp) {}

}  // namespace

std::string encode_png(const CtSlice& slice, const IntensityWindow& window) {
  const Grid<unsigned char> gray = window_to_gray(slice, window);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png: cannot create write struct");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png: cannot create info struct");
  }
  std::string buf;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png: encoding failed");
  }
  png_set_write_fn(png, &buf, append_bytes, no_flush);
  png_set_IHDR(png, info, static_cast<png_uint_32>(gray.cols()), static_cast<png_uint_32>(gray.rows()), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (Eigen::Index r = 0; r < gray.rows(); ++r)
    png_write_row(png, const_cast<png_bytep>(gray.data() + r * gray.cols()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return buf;
}

}  // namespace skullkit
