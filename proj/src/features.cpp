#include "skullkit/features.hpp"

#include <algorithm>
#include <cmath>

#include "skullkit/error.hpp"
#include "skullkit/rng.hpp"

namespace skullkit {

Eigen::MatrixXd unrolled_pixels(std::span<const CtSlice> slices) {
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(slices.size()), kSlicePixels);
  for (std::size_t i = 0; i < slices.size(); ++i)
    rows.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXf>(slices[i].pixels().data(), kSlicePixels).cast<double>();
  return rows;
}

Eigen::MatrixXd random_projection_features(std::span<const CtSlice> slices, int dim, std::uint64_t seed,
                                           const IntensityWindow& window) {
  if (dim < 1) throw InvalidArgument("random projection: dim must be >= 1");
  Rng rng = make_rng(seed, 0xfea7);
  Eigen::MatrixXd proj(kSlicePixels, dim);
  for (Eigen::Index c = 0; c < dim; ++c)
    for (Eigen::Index r = 0; r < kSlicePixels; ++r) proj(r, c) = gaussian(rng);
  proj /= std::sqrt(static_cast<double>(dim));

  Eigen::MatrixXd x = unrolled_pixels(slices);
  const double lo = window.lo, hi = window.hi;
  x = x.unaryExpr([lo, hi](double p) { return (std::clamp(p, lo, hi) - lo) / (hi - lo); });
  return x * proj;
}

}  // namespace skullkit
