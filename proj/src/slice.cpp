#include "skullkit/slice.hpp"

#include <algorithm>
#include <cstdio>

#include "skullkit/error.hpp"

namespace skullkit {

namespace {

void require_frame(const auto& grid, const char* what) {
  if (grid.rows() != kSliceSide || grid.cols() != kSliceSide) {
    throw DimensionError(std::string(what) + ": expected 128x128, got " +
                         std::to_string(grid.rows()) + "x" + std::to_string(grid.cols()));
  }
}

}  // namespace

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::real: return "real";
    case Provenance::synthetic: return "synthetic";
    case Provenance::artificial_idealized: return "artificial_idealized";
    case Provenance::artificial_unrealistic: return "artificial_unrealistic";
  }
  return "real";
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "real") return Provenance::real;
  if (s == "synthetic") return Provenance::synthetic;
  if (s == "artificial_idealized") return Provenance::artificial_idealized;
  if (s == "artificial_unrealistic") return Provenance::artificial_unrealistic;
  throw InvalidArgument("unknown provenance '" + std::string(s) + "'");
}

CtSlice::CtSlice(PixelGrid pixels, std::string id, Provenance provenance)
    : pixels_(std::move(pixels)), id_(std::move(id)), provenance_(provenance) {
  require_frame(pixels_, "CtSlice");
  if (!pixels_.allFinite()) throw FormatError("CtSlice: non-finite pixel value");
}

CtSlice CtSlice::zeros(std::string id, Provenance provenance) {
  return CtSlice(PixelGrid::Zero(kSliceSide, kSliceSide), std::move(id), provenance);
}

CtSlice CtSlice::relabeled(std::string id, Provenance provenance) const {
  CtSlice out = *this;
  out.id_ = std::move(id);
  out.provenance_ = provenance;
  return out;
}

IntensityWindow::IntensityWindow(double lo_, double hi_) : lo(lo_), hi(hi_) {
  if (!(lo < hi)) throw InvalidArgument("intensity window requires lo < hi");
}

NormalizedSlice::NormalizedSlice(UnitGrid pixels, IntensityWindow window)
    : pixels_(std::move(pixels)), window_(window) {
  require_frame(pixels_, "NormalizedSlice");
  if (!pixels_.allFinite() || pixels_.minCoeff() < -1.0 || pixels_.maxCoeff() > 1.0)
    throw InvalidArgument("NormalizedSlice: pixels must lie in [-1, 1]");
}

BoneMask::BoneMask(MaskGrid bits) : bits_(std::move(bits)) { require_frame(bits_, "BoneMask"); }

void Volume::validate() const {
  if (slices.empty()) throw EmptyDatasetError("volume has no slices");
  if (!(slice_spacing_mm > 0) || !(in_plane_resolution_mm_per_px > 0))
    throw InvalidArgument("volume spacings must be positive");
  for (const auto& s : slices) {
    if (s.rows() != slices.front().rows() || s.cols() != slices.front().cols())
      throw DimensionError("volume slices must share dimensions");
  }
}

NormalizedSlice normalize(const CtSlice& slice, const IntensityWindow& window) {
  const double lo = window.lo, hi = window.hi;
  UnitGrid out = slice.pixels().cast<double>().unaryExpr([lo, hi](double p) {
    const double c = std::clamp(p, lo, hi);
    return std::clamp(2.0 * (c - lo) / (hi - lo) - 1.0, -1.0, 1.0);
  });
  return NormalizedSlice(std::move(out), window);
}

CtSlice denormalize(const NormalizedSlice& norm, std::string id, Provenance provenance) {
  const double lo = norm.window().lo, hi = norm.window().hi;
  PixelGrid out = norm.pixels()
                      .unaryExpr([lo, hi](double v) { return (v + 1.0) * 0.5 * (hi - lo) + lo; })
                      .cast<float>();
  return CtSlice(std::move(out), std::move(id), provenance);
}

BoneMask threshold_mask(const CtSlice& slice, double floor_hu) {
  return BoneMask(slice.pixels().unaryExpr(
      [floor_hu](float p) { return static_cast<double>(p) > floor_hu; }));
}

CtSlice apply_mask(const CtSlice& slice, const BoneMask& mask) {
  PixelGrid out = mask.bits().select(slice.pixels(), PixelGrid::Zero(kSliceSide, kSliceSide));
  return CtSlice(std::move(out), slice.id(), slice.provenance());
}

PixelGrid center_to_frame(const PixelGrid& grid) {
  PixelGrid out = PixelGrid::Zero(kSliceSide, kSliceSide);
  auto axis = [](Eigen::Index n, Eigen::Index& src, Eigen::Index& dst, Eigen::Index& len) {
    if (n >= kSliceSide) {
      src = (n - kSliceSide) / 2;
      dst = 0;
      len = kSliceSide;
    } else {
      src = 0;
      dst = (kSliceSide - n) / 2;
      len = n;
    }
  };
  Eigen::Index sr, dr, lr, sc, dc, lc;
  axis(grid.rows(), sr, dr, lr);
  axis(grid.cols(), sc, dc, lc);
  out.block(dr, dc, lr, lc) = grid.block(sr, sc, lr, lc);
  return out;
}

std::vector<CtSlice> select_slices(const Volume& volume, int step) {
  if (step < 1) throw InvalidArgument("select_slices: step must be >= 1");
  volume.validate();
  std::vector<CtSlice> out;
  const auto n = static_cast<int>(volume.slices.size());
  out.reserve(static_cast<std::size_t>((n - 1) / step + 1));
  for (int i = 0; i < n; i += step) {
    char suffix[16];
    std::snprintf(suffix, sizeof suffix, "_%04d", i);
    out.emplace_back(center_to_frame(volume.slices[static_cast<std::size_t>(i)]),
                     volume.id + suffix, Provenance::real);
  }
  return out;
}

}  // namespace skullkit
