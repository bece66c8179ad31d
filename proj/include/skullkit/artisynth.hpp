#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "skullkit/radiometrics.hpp"
#include "skullkit/slice.hpp"

namespace skullkit {

// Procedural "artificial" skull segments: visibly fake geometry whose skull
// density ratio, mean thickness and mean intensity are set analytically.

enum class ShapeFamily { blocky, wavy, scatter };

// `unrealistic` cycles blocky, wavy, scatter over the output index.
enum class ArtificialFamily { idealized, blocky, wavy, scatter, unrealistic };

std::string_view to_string(ArtificialFamily f);
ArtificialFamily family_from_string(std::string_view s);

// Three-layer plate: cortical / trabecular / cortical.
struct IdealizedParams {
  int total_thickness_px = 20;
  double cortical_fraction = 0.25;  // per outer table, in (0, 0.5)
  double cortical_hu = 2000.0;
  double trabecular_hu = 1000.0;
  int vertical_offset_px = 54;  // top row of the plate where the bow is flattest
  double curvature_amplitude_px = 0.0;
  // Number of rays whose span is one pixel longer; gives mean thickness a
  // resolution of mm_per_px / ray_count instead of mm_per_px.
  int extra_thickness_rays = 0;

  void validate() const;
};

struct UnrealisticParams {
  ShapeFamily shape_family = ShapeFamily::blocky;
  int total_thickness_px = 20;
  double high_hu = 1800.0;
  double low_hu = 900.0;  // equal to high_hu for a uniform slab
  int vertical_offset_px = 54;
  double low_fraction = 0.4;  // scatter family only
  int extra_thickness_rays = 0;

  void validate() const;
};

enum class Tissue : std::uint8_t { background = 0, high = 1, low = 2 };

// Label image from which a slice is rendered with two intensities.
struct Layout {
  Grid<std::uint8_t> labels;

  long count(Tissue t) const;
};

Layout idealized_layout(const IdealizedParams& params, std::uint64_t seed,
                        const ResolutionSpec& spec = {});
Layout unrealistic_layout(const UnrealisticParams& params, std::uint64_t seed,
                          const ResolutionSpec& spec = {});

CtSlice render(const Layout& layout, float high_hu, float low_hu, std::string id = {},
               Provenance provenance = Provenance::artificial_idealized);

// Metric triple implied by a layout and its two intensities, without ray casting.
MetricSummary analytic_metrics(const Layout& layout, float high_hu, float low_hu,
                               const ResolutionSpec& spec = {});

CtSlice generate_idealized(const IdealizedParams& params, std::uint64_t seed,
                           const ResolutionSpec& spec = {}, std::string id = {});
CtSlice generate_unrealistic(const UnrealisticParams& params, std::uint64_t seed,
                             const ResolutionSpec& spec = {}, std::string id = {});

struct IntensityPair {
  double high_hu = 0;
  double low_hu = 0;
};

// Intensities giving the layout the requested SDR and mean intensity exactly.
IntensityPair solve_intensities(const Layout& layout, double target_sdr, double target_mi,
                                double floor_hu = kBackgroundFloorHu);

// Whole-pixel thickness plus the count of rays carrying one extra pixel.
struct ThicknessSplit {
  int base_px = 0;
  int extra_rays = 0;
};

ThicknessSplit split_thickness(double thickness_mm, const ResolutionSpec& spec = {});

struct TargetSpec {
  MetricDistribution target;
  double tolerance_ks = 0.1;
  int max_attempts = 8;

  void validate() const;
};

struct FitResult {
  std::vector<CtSlice> slices;
  MetricDistribution achieved;  // measured post hoc by summarize()
  MetricKs ks;
  int attempts = 0;
};

// Inverse-transform samples metric triples from the target (rows jointly,
// values jittered within their ECDF step), solves each slice analytically and
// repeats with fresh seed streams until every metric's KS distance is within
// tolerance. Throws FitFailedError with the best KS seen.
FitResult fit_to_targets(const TargetSpec& spec, ArtificialFamily family, int n,
                         std::uint64_t seed, const ResolutionSpec& res = {});

}  // namespace skullkit
