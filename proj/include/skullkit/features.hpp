#pragma once

#include <cstdint>
#include <span>

#include <Eigen/Core>

#include "skullkit/slice.hpp"

namespace skullkit {

// Dependency-free stand-in for a learned embedding: every slice is windowed to
// [0, 1] and projected onto `dim` fixed Gaussian directions drawn from `seed`.
// Same seed and dim give the same projection, so features from separate runs
// are comparable.
Eigen::MatrixXd random_projection_features(std::span<const CtSlice> slices, int dim, std::uint64_t seed,
                                           const IntensityWindow& window = {});

// Unrolls each slice into one row of 16,384 HU values.
Eigen::MatrixXd unrolled_pixels(std::span<const CtSlice> slices);

}  // namespace skullkit
