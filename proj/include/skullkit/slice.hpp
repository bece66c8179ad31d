#pragma once

#include <Eigen/Core>
#include <string>
#include <string_view>
#include <vector>

namespace skullkit {

inline constexpr Eigen::Index kSliceSide = 128;
inline constexpr Eigen::Index kSlicePixels = kSliceSide * kSliceSide;

// Row 0 is the top of the segment; vertical rays walk down a column.
template <typename Scalar>
using Grid = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using PixelGrid = Grid<float>;
using UnitGrid = Grid<double>;
using MaskGrid = Grid<bool>;

enum class Provenance { real, synthetic, artificial_idealized, artificial_unrealistic };

std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

// One 128x128 skull segment in Hounsfield units. Immutable once built.
class CtSlice {
 public:
  explicit CtSlice(PixelGrid pixels, std::string id = {},
                   Provenance provenance = Provenance::real);

  static CtSlice zeros(std::string id = {}, Provenance provenance = Provenance::real);

  const PixelGrid& pixels() const noexcept { return pixels_; }
  const std::string& id() const noexcept { return id_; }
  Provenance provenance() const noexcept { return provenance_; }

  CtSlice relabeled(std::string id, Provenance provenance) const;

  friend bool operator==(const CtSlice& a, const CtSlice& b) {
    return a.id_ == b.id_ && a.provenance_ == b.provenance_ && a.pixels_ == b.pixels_;
  }

 private:
  PixelGrid pixels_;
  std::string id_;
  Provenance provenance_;
};

struct IntensityWindow {
  double lo = 0.0;
  double hi = 3000.0;

  IntensityWindow() = default;
  IntensityWindow(double lo, double hi);  // throws InvalidArgument unless lo < hi
};

class NormalizedSlice {
 public:
  NormalizedSlice(UnitGrid pixels, IntensityWindow window);

  const UnitGrid& pixels() const noexcept { return pixels_; }
  const IntensityWindow& window() const noexcept { return window_; }

 private:
  UnitGrid pixels_;
  IntensityWindow window_;
};

class BoneMask {
 public:
  explicit BoneMask(MaskGrid bits);

  const MaskGrid& bits() const noexcept { return bits_; }
  Eigen::Index count() const { return bits_.count(); }

 private:
  MaskGrid bits_;
};

// Stack of axial images; in-plane size is arbitrary, cropping happens in select_slices.
struct Volume {
  std::vector<PixelGrid> slices;
  double slice_spacing_mm = 0.625;
  double in_plane_resolution_mm_per_px = 0.45;
  std::string id = "volume";

  void validate() const;
};

NormalizedSlice normalize(const CtSlice& slice, const IntensityWindow& window = {});
CtSlice denormalize(const NormalizedSlice& norm, std::string id = {},
                    Provenance provenance = Provenance::real);

BoneMask threshold_mask(const CtSlice& slice, double floor_hu = 10.0);
CtSlice apply_mask(const CtSlice& slice, const BoneMask& mask);

// Every `step`-th slice starting at 0, centered crop / zero-pad to 128x128.
std::vector<CtSlice> select_slices(const Volume& volume, int step = 5);

// Sampling interval between selected slices in millimetres.
inline double selection_interval_mm(const Volume& v, int step) {
  return v.slice_spacing_mm * step;
}

// Centered crop or symmetric zero-pad of an arbitrary grid to 128x128.
PixelGrid center_to_frame(const PixelGrid& grid);

}  // namespace skullkit
