#pragma once

#include <string>

#include "skullkit/slice.hpp"

namespace skullkit {

// Lossless 8-bit grayscale PNG of a slice after windowing:
// gray = round(255 * (clamp(hu, lo, hi) - lo) / (hi - lo)).
std::string encode_png(const CtSlice& slice, const IntensityWindow& window = {});

// Raw 8-bit values, row-major, exactly as encode_png writes them.
Grid<unsigned char> window_to_gray(const CtSlice& slice, const IntensityWindow& window = {});

}  // namespace skullkit
