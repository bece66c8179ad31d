#include "skullkit/radiometrics.hpp"

#include <cstdio>
#include <numeric>
#include <sstream>

namespace skullkit {

void ResolutionSpec::validate() const {
  if (!(mm_per_px > 0)) throw InvalidArgument("ResolutionSpec: mm_per_px must be > 0");
  if (ray_count < 1 || ray_spacing_px < 1)
    throw InvalidArgument("ResolutionSpec: ray_count and ray_spacing_px must be >= 1");
  if (static_cast<long>(ray_count) * ray_spacing_px > kSliceSide)
    throw InvalidArgument("ResolutionSpec: ray_count * ray_spacing_px exceeds 128");
}

std::vector<int> ResolutionSpec::ray_columns() const {
  validate();
  const int first = (static_cast<int>(kSliceSide) - ray_count * ray_spacing_px) / 2 + ray_spacing_px / 2;
  std::vector<int> cols(static_cast<std::size_t>(ray_count));
  for (int k = 0; k < ray_count; ++k) cols[static_cast<std::size_t>(k)] = first + k * ray_spacing_px;
  return cols;
}

std::vector<RayProfile> cast_rays(const CtSlice& slice, const ResolutionSpec& spec, double floor_hu) {
  std::vector<RayProfile> rays;
  for (int c : spec.ray_columns()) {
    RayProfile r;
    r.column_index = c;
    r.values = slice.pixels().col(c).cast<double>();
    int first = -1, last = -1;
    for (Eigen::Index i = 0; i < r.values.size(); ++i) {
      if (r.values[i] > floor_hu) {
        if (first < 0) first = static_cast<int>(i);
        last = static_cast<int>(i);
      }
    }
    if (first >= 0) r.bone_span = std::make_pair(first, last);
    rays.push_back(std::move(r));
  }
  return rays;
}

namespace {

struct RayAggregate {
  double ratio_sum = 0;
  long span_sum = 0;
  int used = 0;
};

RayAggregate aggregate_rays(const CtSlice& slice, const ResolutionSpec& spec, double floor_hu) {
  RayAggregate agg;
  for (const auto& r : cast_rays(slice, spec, floor_hu)) {
    if (!r.bone_span) continue;
    const auto [first, last] = *r.bone_span;
    const auto seg = r.values.segment(first, last - first + 1);
    agg.ratio_sum += std::max(seg.minCoeff(), 0.0) / seg.maxCoeff();
    agg.span_sum += last - first + 1;
    ++agg.used;
  }
  if (agg.used == 0) throw NoBoneError("slice '" + slice.id() + "': no ray crosses bone");
  return agg;
}

}  // namespace

double sdr(const CtSlice& slice, const ResolutionSpec& spec, double floor_hu) {
  const auto agg = aggregate_rays(slice, spec, floor_hu);
  return agg.ratio_sum / agg.used;
}

double mean_thickness(const CtSlice& slice, const ResolutionSpec& spec, double floor_hu) {
  const auto agg = aggregate_rays(slice, spec, floor_hu);
  return spec.mm_per_px * static_cast<double>(agg.span_sum) / agg.used;
}

double mean_intensity(const CtSlice& slice, double floor_hu) {
  double sum = 0;
  long n = 0;
  const float* p = slice.pixels().data();
  for (Eigen::Index i = 0; i < slice.pixels().size(); ++i) {
    if (p[i] > floor_hu) {
      sum += p[i];
      ++n;
    }
  }
  if (n == 0) throw NoBoneError("slice '" + slice.id() + "': no pixel above floor");
  return sum / static_cast<double>(n);
}

MetricSummary measure(const CtSlice& slice, const ResolutionSpec& spec, double floor_hu) {
  const auto agg = aggregate_rays(slice, spec, floor_hu);
  MetricSummary m;
  m.sdr = agg.ratio_sum / agg.used;
  m.thickness_mm = spec.mm_per_px * static_cast<double>(agg.span_sum) / agg.used;
  m.intensity_hu = mean_intensity(slice, floor_hu);
  m.rays_used = agg.used;
  return m;
}

SampleStats sample_stats(std::span<const double> samples) {
  if (samples.empty()) throw EmptyDatasetError("sample_stats: no samples");
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  SampleStats st;
  st.mean = std::accumulate(s.begin(), s.end(), 0.0) / n;
  double ss = 0;
  for (double v : s) ss += (v - st.mean) * (v - st.mean);
  st.sd = s.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
  // Linear interpolation between order statistics (numpy's default).
  auto q = [&](double p) {
    const double h = p * (n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, s.size() - 1);
    return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
  };
  st.min = s.front();
  st.q05 = q(0.05);
  st.q25 = q(0.25);
  st.median = q(0.5);
  st.q75 = q(0.75);
  st.q95 = q(0.95);
  st.max = s.back();
  return st;
}

void MetricDistribution::push_back(std::string id, const MetricSummary& m) {
  ids.push_back(std::move(id));
  sdr.push_back(m.sdr);
  thickness_mm.push_back(m.thickness_mm);
  intensity_hu.push_back(m.intensity_hu);
  rays_used.push_back(m.rays_used);
}

void MetricDistribution::validate() const {
  const auto n = sdr.size();
  if (thickness_mm.size() != n || intensity_hu.size() != n || ids.size() != n ||
      rays_used.size() != n)
    throw FormatError("MetricDistribution: sample vectors differ in length");
}

MetricDistribution summarize(std::span<const CtSlice> dataset, const ResolutionSpec& spec,
                             double floor_hu) {
  if (dataset.empty()) throw EmptyDatasetError("summarize: empty dataset");
  std::vector<std::optional<MetricSummary>> per(dataset.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(dataset.size()); ++i) {
    try {
      per[static_cast<std::size_t>(i)] = measure(dataset[static_cast<std::size_t>(i)], spec, floor_hu);
    } catch (const NoBoneError&) {
    }
  }
  MetricDistribution dist;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (per[i]) {
      dist.push_back(dataset[i].id(), *per[i]);
    } else {
      ++dist.skipped_no_bone;
    }
  }
  if (dist.size() == 0) throw EmptyDatasetError("summarize: every slice lacks bone");
  return dist;
}

namespace {

nlohmann::json stats_json(const std::vector<double>& v) {
  const auto s = sample_stats(v);
  return {{"mean", s.mean}, {"sd", s.sd},         {"min", s.min},   {"q05", s.q05}, {"q25", s.q25},
          {"median", s.median}, {"q75", s.q75}, {"q95", s.q95}, {"max", s.max}};
}

}  // namespace

nlohmann::json to_json(const MetricDistribution& dist) {
  dist.validate();
  nlohmann::json j;
  j["n"] = dist.size();
  j["skipped_no_bone"] = dist.skipped_no_bone;
  j["ids"] = dist.ids;
  j["samples"] = {{"sdr", dist.sdr},
                  {"thickness_mm", dist.thickness_mm},
                  {"intensity_hu", dist.intensity_hu},
                  {"rays_used", dist.rays_used}};
  if (dist.size() > 0) {
    j["summary"] = {{"sdr", stats_json(dist.sdr)},
                    {"thickness_mm", stats_json(dist.thickness_mm)},
                    {"intensity_hu", stats_json(dist.intensity_hu)}};
  }
  return j;
}

MetricDistribution distribution_from_json(const nlohmann::json& j) {
  MetricDistribution d;
  try {
    const auto& s = j.at("samples");
    d.sdr = s.at("sdr").get<std::vector<double>>();
    d.thickness_mm = s.at("thickness_mm").get<std::vector<double>>();
    d.intensity_hu = s.at("intensity_hu").get<std::vector<double>>();
    d.rays_used = s.contains("rays_used") ? s["rays_used"].get<std::vector<int>>()
                                          : std::vector<int>(d.sdr.size(), 0);
    if (j.contains("ids")) {
      d.ids = j["ids"].get<std::vector<std::string>>();
    } else {
      for (std::size_t i = 0; i < d.sdr.size(); ++i) d.ids.push_back("s" + std::to_string(i));
    }
    d.skipped_no_bone = j.value("skipped_no_bone", std::size_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metric distribution JSON: ") + e.what());
  }
  d.validate();
  return d;
}

std::string metrics_csv(const MetricDistribution& dist) {
  dist.validate();
  std::string out = "id,sdr,thickness_mm,intensity_hu,rays_used\n";
  char buf[160];
  for (std::size_t i = 0; i < dist.size(); ++i) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,%d\n", dist.sdr[i], dist.thickness_mm[i],
                  dist.intensity_hu[i], dist.rays_used[i]);
    out += dist.ids[i];
    out += buf;
  }
  return out;
}

MetricDistribution parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("id,sdr,thickness_mm,intensity_hu", 0) != 0)
    throw FormatError("metrics CSV: missing header");
  MetricDistribution d;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() < 4) throw FormatError("metrics CSV: short row '" + line + "'");
    try {
      MetricSummary m{std::stod(f[1]), std::stod(f[2]), std::stod(f[3]),
                      f.size() > 4 ? std::stoi(f[4]) : 0};
      d.push_back(f[0], m);
    } catch (const std::logic_error&) {
      throw FormatError("metrics CSV: bad number in '" + line + "'");
    }
  }
  return d;
}

MetricKs ks_per_metric(const MetricDistribution& a, const MetricDistribution& b) {
  return {ks_distance(a.sdr, b.sdr), ks_distance(a.thickness_mm, b.thickness_mm),
          ks_distance(a.intensity_hu, b.intensity_hu)};
}

}  // namespace skullkit
