#include "skullkit/artisynth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include "skullkit/rng.hpp"

namespace skullkit {

std::string_view to_string(ArtificialFamily f) {
  switch (f) {
    case ArtificialFamily::idealized: return "idealized";
    case ArtificialFamily::blocky: return "blocky";
    case ArtificialFamily::wavy: return "wavy";
    case ArtificialFamily::scatter: return "scatter";
    case ArtificialFamily::unrealistic: return "unrealistic";
  }
  return "idealized";
}

ArtificialFamily family_from_string(std::string_view s) {
  if (s == "idealized") return ArtificialFamily::idealized;
  if (s == "blocky") return ArtificialFamily::blocky;
  if (s == "wavy") return ArtificialFamily::wavy;
  if (s == "scatter") return ArtificialFamily::scatter;
  if (s == "unrealistic") return ArtificialFamily::unrealistic;
  throw InvalidArgument("unknown artificial family '" + std::string(s) + "'");
}

void IdealizedParams::validate() const {
  if (total_thickness_px < 1) throw InvalidArgument("idealized: thickness must be >= 1 px");
  if (!(cortical_fraction > 0.0 && cortical_fraction < 0.5))
    throw InvalidArgument("idealized: cortical_fraction must lie in (0, 0.5)");
  if (!(trabecular_hu < cortical_hu)) throw InvalidArgument("idealized: trabecular_hu must be < cortical_hu");
  if (curvature_amplitude_px < 0) throw InvalidArgument("idealized: negative curvature amplitude");
  if (extra_thickness_rays < 0) throw InvalidArgument("idealized: negative extra_thickness_rays");
}

void UnrealisticParams::validate() const {
  if (total_thickness_px < 1) throw InvalidArgument("unrealistic: thickness must be >= 1 px");
  if (!(low_hu <= high_hu)) throw InvalidArgument("unrealistic: low_hu must be <= high_hu");
  if (!(low_fraction > 0.0 && low_fraction < 1.0))
    throw InvalidArgument("unrealistic: low_fraction must lie in (0, 1)");
  if (extra_thickness_rays < 0) throw InvalidArgument("unrealistic: negative extra_thickness_rays");
}

long Layout::count(Tissue t) const {
  return (labels.array() == static_cast<std::uint8_t>(t)).count();
}

namespace {

constexpr int kSide = static_cast<int>(kSliceSide);
constexpr std::uint8_t kBg = static_cast<std::uint8_t>(Tissue::background);
constexpr std::uint8_t kHigh = static_cast<std::uint8_t>(Tissue::high);
constexpr std::uint8_t kLow = static_cast<std::uint8_t>(Tissue::low);

// Span length per column: every column takes the thickness of its nearest ray,
// and `extra` rays (spread evenly) are one pixel longer.
std::vector<int> column_thickness(int base, int extra, const ResolutionSpec& spec) {
  const auto cols = spec.ray_columns();
  const int count = spec.ray_count;
  extra = std::min(extra, count);
  std::vector<int> ray_t(static_cast<std::size_t>(count), base);
  for (int k = 0; k < count; ++k) {
    if ((k + 1) * extra / count > k * extra / count) ray_t[static_cast<std::size_t>(k)] += 1;
  }
  std::vector<int> out(kSide);
  for (int c = 0; c < kSide; ++c) {
    const int k = std::clamp(static_cast<int>(std::floor(
                                 (c - cols.front() + spec.ray_spacing_px / 2.0) / spec.ray_spacing_px)),
                             0, count - 1);
    out[static_cast<std::size_t>(c)] = ray_t[static_cast<std::size_t>(k)];
  }
  return out;
}

void check_frame(const std::vector<int>& top, const std::vector<int>& thick) {
  for (int c = 0; c < kSide; ++c) {
    const auto i = static_cast<std::size_t>(c);
    if (top[i] < 0 || top[i] + thick[i] > kSide)
      throw InvalidArgument("geometry exceeds the 128x128 frame");
  }
}

Layout blank_layout() {
  Layout l;
  l.labels = Grid<std::uint8_t>::Constant(kSliceSide, kSliceSide, kBg);
  return l;
}

std::string default_id(const char* prefix, std::uint64_t seed) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%016llx", prefix, static_cast<unsigned long long>(seed));
  return buf;
}

}  // namespace

Layout idealized_layout(const IdealizedParams& params, std::uint64_t seed, const ResolutionSpec& spec) {
  params.validate();
  Rng rng = make_rng(seed, 0);
  const double phase = uniform(rng, -0.35, 0.35);
  const auto thick = column_thickness(params.total_thickness_px, params.extra_thickness_rays, spec);
  std::vector<int> top(kSide);
  for (int c = 0; c < kSide; ++c) {
    const double bow = 1.0 - std::sin(std::numbers::pi * (c + 0.5) / kSide + phase);
    top[static_cast<std::size_t>(c)] =
        params.vertical_offset_px + static_cast<int>(std::lround(params.curvature_amplitude_px * bow));
  }
  check_frame(top, thick);

  const int base = params.total_thickness_px;
  const int cortical = std::clamp(static_cast<int>(std::lround(params.cortical_fraction * base)), 1,
                                  std::max(1, base / 2));
  Layout l = blank_layout();
  for (int c = 0; c < kSide; ++c) {
    const auto i = static_cast<std::size_t>(c);
    for (int j = 0; j < thick[i]; ++j) {
      const bool outer = j < cortical || j >= thick[i] - cortical;
      l.labels(top[i] + j, c) = outer ? kHigh : kLow;
    }
  }
  return l;
}

Layout unrealistic_layout(const UnrealisticParams& params, std::uint64_t seed, const ResolutionSpec& spec) {
  params.validate();
  Rng rng = make_rng(seed, 1);
  const auto thick = column_thickness(params.total_thickness_px, params.extra_thickness_rays, spec);
  std::vector<int> top(kSide, params.vertical_offset_px);
  Layout l = blank_layout();
  auto fill = [&](int c, int j, std::uint8_t v) { l.labels(top[static_cast<std::size_t>(c)] + j, c) = v; };

  switch (params.shape_family) {
    case ShapeFamily::blocky: {
      // Staircase of 16-px blocks climbing 5 px per step, each with a
      // rectangular low-density core.
      int c0 = 0;
      std::vector<std::pair<int, int>> core(kSide);
      while (c0 < kSide) {
        const int w = std::min(16, kSide - c0);
        const int jump = 5 * ((c0 / 16) % 4) - 8;
        const int lim = std::max(1, (params.total_thickness_px - 1) / 2);
        const int a = uniform_int(rng, 1, lim);
        const int b = uniform_int(rng, 1, lim);
        for (int c = c0; c < c0 + w; ++c) {
          top[static_cast<std::size_t>(c)] = params.vertical_offset_px + jump;
          core[static_cast<std::size_t>(c)] = {a, b};
        }
        c0 += w;
      }
      check_frame(top, thick);
      for (int c = 0; c < kSide; ++c) {
        const int t = thick[static_cast<std::size_t>(c)];
        auto [a, b] = core[static_cast<std::size_t>(c)];
        if (a > t - 1 - b) a = b = (t - 1) / 2;  // keep at least one core row when t >= 3
        for (int j = 0; j < t; ++j) fill(c, j, (t >= 3 && j >= a && j <= t - 1 - b) ? kLow : kHigh);
      }
      break;
    }
    case ShapeFamily::wavy: {
      // Square-wave outline filled with 2-px horizontal stripes.
      const int half_period = 8;
      const int amplitude = 8;
      for (int c = 0; c < kSide; ++c)
        top[static_cast<std::size_t>(c)] = params.vertical_offset_px + ((c / half_period) % 2 ? amplitude : 0);
      check_frame(top, thick);
      for (int c = 0; c < kSide; ++c) {
        const int t = thick[static_cast<std::size_t>(c)];
        const int stripe = t >= 6 ? 2 : 1;
        for (int j = 0; j < t; ++j) fill(c, j, ((j / stripe) % 2 == 0 || j == t - 1) ? kHigh : kLow);
      }
      break;
    }
    case ShapeFamily::scatter: {
      // Flat slab of salt-and-pepper noise whose density alternates in 3-row
      // bands. The noise field is fixed, so slices differ only in how much of
      // it falls below the low fraction.
      check_frame(top, thick);
      const double q = params.low_fraction;
      const double dense = std::min(0.95, q * 1.6), sparse = std::max(0.05, q * 0.4);
      for (int c = 0; c < kSide; ++c) {
        const int t = thick[static_cast<std::size_t>(c)];
        bool any_low = false;
        for (int j = 0; j < t; ++j) {
          const bool edge = j == 0 || j == t - 1;
          const double p = (j / 3) % 2 ? dense : sparse;
          const double u = static_cast<double>(derive_seed(static_cast<std::uint64_t>(j * kSide + c), 991) >> 11) * 0x1.0p-53;
          const bool low = !edge && u < p;
          any_low = any_low || low;
          fill(c, j, low ? kLow : kHigh);
        }
        if (!any_low && t >= 3) fill(c, t / 2, kLow);
      }
      break;
    }
  }
  return l;
}

CtSlice render(const Layout& layout, float high_hu, float low_hu, std::string id, Provenance provenance) {
  PixelGrid px = layout.labels.unaryExpr([high_hu, low_hu](std::uint8_t v) {
    return v == kHigh ? high_hu : (v == kLow ? low_hu : 0.0f);
  });
  return CtSlice(std::move(px), std::move(id), provenance);
}

MetricSummary analytic_metrics(const Layout& layout, float high_hu, float low_hu, const ResolutionSpec& spec) {
  const double hi = high_hu, lo = low_hu;
  MetricSummary m;
  double ratio = 0;
  long span = 0;
  for (int c : spec.ray_columns()) {
    int first = -1, last = -1;
    bool has_low = false, has_high = false, has_gap = false;
    for (int r = 0; r < kSide; ++r) {
      const auto v = layout.labels(r, c);
      if (v == kBg) continue;
      if (first < 0) first = r;
      if (last >= 0 && r > last + 1) has_gap = true;
      last = r;
      has_low = has_low || v == kLow;
      has_high = has_high || v == kHigh;
    }
    if (first < 0) continue;
    const double mx = has_high ? hi : lo;
    const double mn = has_gap ? 0.0 : (has_low ? lo : hi);
    ratio += mn / mx;
    span += last - first + 1;
    ++m.rays_used;
  }
  if (m.rays_used == 0) throw NoBoneError("layout has no bone under any ray");
  m.sdr = ratio / m.rays_used;
  m.thickness_mm = spec.mm_per_px * static_cast<double>(span) / m.rays_used;
  const double nh = static_cast<double>(layout.count(Tissue::high));
  const double nl = static_cast<double>(layout.count(Tissue::low));
  m.intensity_hu = (nh * hi + nl * lo) / (nh + nl);
  return m;
}

CtSlice generate_idealized(const IdealizedParams& params, std::uint64_t seed, const ResolutionSpec& spec,
                           std::string id) {
  if (id.empty()) id = default_id("idealized", seed);
  return render(idealized_layout(params, seed, spec), static_cast<float>(params.cortical_hu),
                static_cast<float>(params.trabecular_hu), std::move(id), Provenance::artificial_idealized);
}

CtSlice generate_unrealistic(const UnrealisticParams& params, std::uint64_t seed, const ResolutionSpec& spec,
                             std::string id) {
  if (id.empty()) id = default_id("unrealistic", seed);
  return render(unrealistic_layout(params, seed, spec), static_cast<float>(params.high_hu),
                static_cast<float>(params.low_hu), std::move(id), Provenance::artificial_unrealistic);
}

IntensityPair solve_intensities(const Layout& layout, double target_sdr, double target_mi, double floor_hu) {
  if (!(target_sdr > 0.0 && target_sdr <= 1.0)) throw InvalidArgument("target SDR must lie in (0, 1]");
  const double nh = static_cast<double>(layout.count(Tissue::high));
  const double nl = static_cast<double>(layout.count(Tissue::low));
  if (nh + nl == 0) throw NoBoneError("layout has no bone pixels");
  if (nl == 0 && target_sdr < 1.0) throw InvalidArgument("layout has no low-density pixels for SDR < 1");
  IntensityPair p;
  p.high_hu = target_mi * (nh + nl) / (nh + target_sdr * nl);
  p.low_hu = target_sdr * p.high_hu;
  if (!(p.low_hu > floor_hu)) throw InvalidArgument("solved low-density intensity falls below the bone floor");
  return p;
}

ThicknessSplit split_thickness(double thickness_mm, const ResolutionSpec& spec) {
  const double px = thickness_mm / spec.mm_per_px;
  ThicknessSplit s;
  s.base_px = static_cast<int>(std::floor(px));
  s.extra_rays = static_cast<int>(std::lround((px - s.base_px) * spec.ray_count));
  if (s.extra_rays >= spec.ray_count) {
    s.base_px += 1;
    s.extra_rays = 0;
  }
  return s;
}

void TargetSpec::validate() const {
  target.validate();
  if (target.size() == 0) throw EmptyDatasetError("fit_to_targets: empty target distribution");
  if (!(tolerance_ks > 0.0 && tolerance_ks <= 1.0)) throw InvalidArgument("tolerance_ks must lie in (0, 1]");
  if (max_attempts < 1) throw InvalidArgument("max_attempts must be >= 1");
}

namespace {

// Sorted samples of one metric plus each target row's rank in that order.
struct MarginalEcdf {
  std::vector<double> sorted;
  std::vector<std::size_t> rank;

  explicit MarginalEcdf(const std::vector<double>& v) : sorted(v), rank(v.size()) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    for (std::size_t i = 0; i < order.size(); ++i) rank[order[i]] = i;
    std::sort(sorted.begin(), sorted.end());
  }

  // Quantile at u in [0, 1], linear between order statistics placed at (i + 0.5) / m.
  double quantile(double u) const {
    const double m = static_cast<double>(sorted.size());
    const double pos = std::clamp(u * m - 0.5, 0.0, m - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  }

  // Inverse-transform draw inside the ECDF step belonging to `row`.
  double draw_near(std::size_t row, double jitter) const {
    return quantile((static_cast<double>(rank[row]) + jitter) / static_cast<double>(sorted.size()));
  }
};

struct TargetTriple {
  double sdr, thickness_mm, intensity_hu;
};

ShapeFamily shape_for(ArtificialFamily f, int index) {
  switch (f) {
    case ArtificialFamily::blocky: return ShapeFamily::blocky;
    case ArtificialFamily::wavy: return ShapeFamily::wavy;
    case ArtificialFamily::scatter: return ShapeFamily::scatter;
    default: break;
  }
  static constexpr ShapeFamily kCycle[] = {ShapeFamily::blocky, ShapeFamily::wavy, ShapeFamily::scatter};
  return kCycle[index % 3];
}

const char* shape_name(ShapeFamily s) {
  switch (s) {
    case ShapeFamily::blocky: return "blocky";
    case ShapeFamily::wavy: return "wavy";
    case ShapeFamily::scatter: return "scatter";
  }
  return "blocky";
}

// One slice hitting `t` exactly (thickness to within mm_per_px / ray_count).
// Geometry is drawn at random; returns false when this draw cannot fit.
bool build_one(ArtificialFamily family, int index, const TargetTriple& t, Rng& rng,
               const ResolutionSpec& res, CtSlice& out) {
  const auto split = split_thickness(t.thickness_mm, res);
  const bool needs_low = t.sdr < 1.0;
  if (split.base_px < (needs_low ? 3 : 1) || split.base_px + 1 > kSide - 30) return false;
  const int span = split.base_px + (split.extra_rays > 0 ? 1 : 0);
  const std::uint64_t layout_seed = rng();
  Layout layout;
  char id[64];
  Provenance prov;
  try {
    if (family == ArtificialFamily::idealized) {
      IdealizedParams p;
      p.total_thickness_px = split.base_px;
      p.extra_thickness_rays = split.extra_rays;
      p.cortical_fraction = uniform(rng, 0.18, 0.34);
      // The simplest skull model: a nearly flat plate centered in the frame.
      p.curvature_amplitude_px = uniform(rng, 0.0, 2.0);
      const int center = 64 + uniform_int(rng, -2, 2);
      const int lowest = std::max(0, kSide - span - static_cast<int>(std::ceil(p.curvature_amplitude_px * 1.4)));
      p.vertical_offset_px =
          std::clamp(center - span / 2 - static_cast<int>(p.curvature_amplitude_px / 2), 0, lowest);
      layout = idealized_layout(p, layout_seed, res);
      std::snprintf(id, sizeof id, "idealized_%04d", index);
      prov = Provenance::artificial_idealized;
    } else {
      UnrealisticParams p;
      p.shape_family = shape_for(family, index);
      p.total_thickness_px = split.base_px;
      p.extra_thickness_rays = split.extra_rays;
      p.low_fraction = uniform(rng, 0.3, 0.6);
      p.vertical_offset_px = std::clamp(64 - span / 2 - 4, 11, std::max(11, kSide - span - 13));
      layout = unrealistic_layout(p, layout_seed, res);
      std::snprintf(id, sizeof id, "%s_%04d", shape_name(p.shape_family), index);
      prov = Provenance::artificial_unrealistic;
    }
    const auto hu = solve_intensities(layout, t.sdr, t.intensity_hu);
    out = render(layout, static_cast<float>(hu.high_hu), static_cast<float>(hu.low_hu), id, prov);
  } catch (const InvalidArgument&) {
    return false;
  } catch (const NoBoneError&) {
    return false;
  }
  return true;
}

}  // namespace

FitResult fit_to_targets(const TargetSpec& spec, ArtificialFamily family, int n, std::uint64_t seed,
                         const ResolutionSpec& res) {
  spec.validate();
  res.validate();
  if (n < 1) throw InvalidArgument("fit_to_targets: n must be >= 1");
  const auto& tgt = spec.target;
  const std::size_t m = tgt.size();
  const MarginalEcdf e_sdr(tgt.sdr), e_thk(tgt.thickness_mm), e_mi(tgt.intensity_hu);

  // Rows ordered by intensity so systematic sampling reproduces the (often
  // multimodal) intensity marginal with error <= 1/n while keeping rows joint.
  std::vector<std::size_t> by_mi(m);
  std::iota(by_mi.begin(), by_mi.end(), 0);
  std::stable_sort(by_mi.begin(), by_mi.end(),
                   [&](auto a, auto b) { return tgt.intensity_hu[a] < tgt.intensity_hu[b]; });

  FitResult best;
  double best_worst = 2.0;
  for (int attempt = 0; attempt < spec.max_attempts; ++attempt) {
    Rng arng = make_rng(seed, 1000003ULL * static_cast<std::uint64_t>(attempt));
    const double u0 = uniform01(arng);
    std::vector<std::size_t> rows(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(std::floor((i + u0) * static_cast<double>(m) / n));
      rows[static_cast<std::size_t>(i)] = by_mi[std::min(k, m - 1)];
    }
    std::shuffle(rows.begin(), rows.end(), arng);

    std::vector<CtSlice> slices(static_cast<std::size_t>(n), CtSlice::zeros());
    std::vector<char> ok(static_cast<std::size_t>(n), 0);
#pragma omp parallel for schedule(dynamic, 8)
    for (int i = 0; i < n; ++i) {
      Rng rng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(attempt) + 1),
                         static_cast<std::uint64_t>(i));
      std::size_t row = rows[static_cast<std::size_t>(i)];
      for (int tries = 0; tries < 64 && !ok[static_cast<std::size_t>(i)]; ++tries) {
        // After repeated geometric failures move on to a neighbouring target row.
        if (tries > 0 && tries % 8 == 0) row = by_mi[(e_mi.rank[row] + 1) % m];
        const double j_sdr = uniform01(rng), j_thk = uniform01(rng), j_mi = uniform01(rng);
        const TargetTriple t{e_sdr.draw_near(row, j_sdr), e_thk.draw_near(row, j_thk),
                             e_mi.draw_near(row, j_mi)};
        CtSlice s = CtSlice::zeros();
        if (build_one(family, i, t, rng, res, s)) {
          slices[static_cast<std::size_t>(i)] = std::move(s);
          ok[static_cast<std::size_t>(i)] = 1;
        }
      }
    }
    if (std::find(ok.begin(), ok.end(), 0) != ok.end()) continue;

    FitResult r;
    r.slices = std::move(slices);
    r.achieved = summarize(r.slices, res);
    r.ks = ks_per_metric(r.achieved, tgt);
    r.attempts = attempt + 1;
    if (r.ks.worst() < best_worst) {
      best_worst = r.ks.worst();
      best = std::move(r);
    }
    if (best_worst <= spec.tolerance_ks) return best;
  }
  char msg[160];
  std::snprintf(msg, sizeof msg, "fit_to_targets: best KS %.4f exceeds tolerance %.4f after %d attempts",
                best_worst, spec.tolerance_ks, spec.max_attempts);
  throw FitFailedError(msg, best_worst);
}

}  // namespace skullkit
