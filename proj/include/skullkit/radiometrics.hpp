#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "skullkit/error.hpp"
#include "skullkit/slice.hpp"

namespace skullkit {

inline constexpr double kBackgroundFloorHu = 10.0;

// Geometry of the vertical ray bundle. The defaults place 32 rays 4 px apart;
// at 0.45 mm/px that is the 1.8 mm ray pitch used for skull density ratio.
struct ResolutionSpec {
  double mm_per_px = 0.45;
  int ray_count = 32;
  int ray_spacing_px = 4;

  void validate() const;
  // Columns of the rays, centered over the 128-px frame (2, 6, ..., 126 by default).
  std::vector<int> ray_columns() const;
  double ray_pitch_mm() const { return mm_per_px * ray_spacing_px; }
};

struct RayProfile {
  int column_index = 0;
  Eigen::VectorXd values;                        // top to bottom
  std::optional<std::pair<int, int>> bone_span;  // first/last supra-floor row, inclusive

  int span_length() const { return bone_span ? bone_span->second - bone_span->first + 1 : 0; }
};

struct MetricSummary {
  double sdr = 0.0;
  double thickness_mm = 0.0;
  double intensity_hu = 0.0;
  int rays_used = 0;
};

std::vector<RayProfile> cast_rays(const CtSlice& slice, const ResolutionSpec& spec = {},
                                  double floor_hu = kBackgroundFloorHu);

// Skull density ratio: mean of min/max over the bone span of each ray with bone.
// Pores below 0 HU inside the span count as 0 so the ratio stays in [0, 1].
double sdr(const CtSlice& slice, const ResolutionSpec& spec = {},
           double floor_hu = kBackgroundFloorHu);

// Mean outer-to-inner span length in mm over rays with bone (pores included).
double mean_thickness(const CtSlice& slice, const ResolutionSpec& spec = {},
                      double floor_hu = kBackgroundFloorHu);

// Mean HU of all pixels strictly above the floor.
double mean_intensity(const CtSlice& slice, double floor_hu = kBackgroundFloorHu);

// All three metrics in one pass over the rays. Throws NoBoneError.
MetricSummary measure(const CtSlice& slice, const ResolutionSpec& spec = {},
                      double floor_hu = kBackgroundFloorHu);

struct SampleStats {
  double mean = 0, sd = 0, min = 0, q05 = 0, q25 = 0, median = 0, q75 = 0, q95 = 0, max = 0;
};

SampleStats sample_stats(std::span<const double> samples);

// Per-dataset metric samples; the three vectors stay aligned by slice.
struct MetricDistribution {
  std::vector<std::string> ids;
  std::vector<double> sdr;
  std::vector<double> thickness_mm;
  std::vector<double> intensity_hu;
  std::vector<int> rays_used;
  std::size_t skipped_no_bone = 0;

  std::size_t size() const { return sdr.size(); }
  void push_back(std::string id, const MetricSummary& m);
  void validate() const;
};

MetricDistribution summarize(std::span<const CtSlice> dataset, const ResolutionSpec& spec = {},
                             double floor_hu = kBackgroundFloorHu);

nlohmann::json to_json(const MetricDistribution& dist);
MetricDistribution distribution_from_json(const nlohmann::json& j);

// `id,sdr,thickness_mm,intensity_hu,rays_used` with a header row.
std::string metrics_csv(const MetricDistribution& dist);
MetricDistribution parse_metrics_csv(const std::string& text);

// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
template <typename Scalar>
Scalar ks_distance(std::span<const Scalar> a, std::span<const Scalar> b) {
  if (a.empty() || b.empty()) throw InvalidArgument("ks_distance: empty sample");
  std::vector<Scalar> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const auto n = static_cast<Scalar>(x.size()), m = static_cast<Scalar>(y.size());
  std::size_t i = 0, j = 0;
  Scalar best = 0;
  while (i < x.size() && j < y.size()) {
    const Scalar v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    best = std::max(best, std::abs(static_cast<Scalar>(i) / n - static_cast<Scalar>(j) / m));
  }
  return best;
}

inline double ks_distance(const std::vector<double>& a, const std::vector<double>& b) {
  return ks_distance<double>(std::span<const double>(a), std::span<const double>(b));
}

struct MetricKs {
  double sdr = 1, thickness = 1, intensity = 1;
  double worst() const { return std::max({sdr, thickness, intensity}); }
};

MetricKs ks_per_metric(const MetricDistribution& a, const MetricDistribution& b);

}  // namespace skullkit
