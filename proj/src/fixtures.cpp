#include "skullkit/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "skullkit/io.hpp"
#include "skullkit/radiometrics.hpp"
#include "skullkit/rng.hpp"

namespace skullkit {

namespace {

constexpr int kSide = static_cast<int>(kSliceSide);

// Smooth 1-D random field on [0, 128): a few low-frequency sinusoids.
struct SmoothField {
  double amp[3], freq[3], phase[3];

  explicit SmoothField(Rng& rng) {
    for (int i = 0; i < 3; ++i) {
      amp[i] = uniform(rng, 0.2, 1.0) / (i + 1);
      freq[i] = uniform(rng, 0.5, 1.5) * (i + 1);
      phase[i] = uniform(rng, 0.0, 2 * std::numbers::pi);
    }
  }

  double operator()(double x) const {
    double v = 0;
    for (int i = 0; i < 3; ++i) v += amp[i] * std::sin(2 * std::numbers::pi * freq[i] * x / kSide + phase[i]);
    return v;
  }
};

// Porous diploe texture: value in roughly [-1, 1] varying on a ~4 px scale.
struct PoreField {
  double kx[6], ky[6], ph[6];

  explicit PoreField(Rng& rng) {
    for (int i = 0; i < 6; ++i) {
      kx[i] = uniform(rng, 0.6, 1.8);
      ky[i] = uniform(rng, 0.6, 1.8);
      ph[i] = uniform(rng, 0.0, 2 * std::numbers::pi);
    }
  }

  double operator()(double r, double c) const {
    double v = 0;
    for (int i = 0; i < 6; ++i) v += std::sin(kx[i] * c + ky[i] * r + ph[i]) * ((i % 2) ? 1.0 : -1.0);
    return v / 3.0;
  }
};

}  // namespace

CtSlice generate_real_proxy(std::uint64_t seed, int index) {
  Rng rng = make_rng(seed, static_cast<std::uint64_t>(index) + 17);
  const bool parietal = uniform01(rng) < 0.5;
  // Anatomical mode: thickness (px), cortical and diploe intensities (HU).
  const double thick_px = parietal ? gaussian(rng, 14.5, 2.0) : gaussian(rng, 8.0, 1.2);
  const double cortical_hu = parietal ? gaussian(rng, 1650, 90) : gaussian(rng, 2050, 90);
  const double diploe_hu = parietal ? gaussian(rng, 850, 90) : gaussian(rng, 1350, 90);
  const double cortical_frac = uniform(rng, 0.2, 0.32);

  const double center = 64 + gaussian(rng, 0, 4);
  const double bow = uniform(rng, -10, 10);
  const double tilt = uniform(rng, -0.08, 0.08);
  SmoothField thick_field(rng), surface_field(rng);
  PoreField pores(rng);

  PixelGrid px = PixelGrid::Zero(kSide, kSide);
  for (int c = 0; c < kSide; ++c) {
    const double x = (c - 63.5) / 63.5;
    const double t = std::max(3.0, thick_px * (1.0 + 0.12 * thick_field(c)));
    const double top = center - t / 2 + bow * (x * x - 0.33) + tilt * (c - 63.5) + 1.5 * surface_field(c);
    const double bottom = top + t;
    const double cort = std::max(1.0, cortical_frac * t);
    for (int r = std::max(0, static_cast<int>(std::floor(top))); r < std::min(kSide, static_cast<int>(std::ceil(bottom))); ++r) {
      // Fraction of the pixel [r, r+1) inside [top, bottom): partial-volume edges.
      const double cover = std::min(bottom, r + 1.0) - std::max(top, static_cast<double>(r));
      if (cover <= 0) continue;
      const double depth = r + 0.5 - top;
      const bool outer = depth < cort || depth > t - cort;
      double v = outer ? cortical_hu + gaussian(rng, 0, 60)
                       : diploe_hu + 320 * pores(r, c) + gaussian(rng, 0, 70);
      v = std::max(v, 120.0) * std::min(1.0, cover);
      px(r, c) = static_cast<float>(v);
    }
  }
  char id[32];
  std::snprintf(id, sizeof id, "real_%04d", index);
  return CtSlice(std::move(px), id, Provenance::real);
}

std::vector<CtSlice> real_proxy_set(int n, std::uint64_t seed) {
  std::vector<CtSlice> out(static_cast<std::size_t>(n), CtSlice::zeros());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = generate_real_proxy(seed, i);
  return out;
}

CtSlice checkerboard_slice(float even_hu, float odd_hu) {
  PixelGrid px(kSliceSide, kSliceSide);
  for (int r = 0; r < kSide; ++r)
    for (int c = 0; c < kSide; ++c) px(r, c) = ((r + c) % 2 == 0) ? even_hu : odd_hu;
  return CtSlice(std::move(px), "checkerboard");
}

CtSlice bar_slice(int first_row, int last_row, float hu) {
  PixelGrid px = PixelGrid::Zero(kSliceSide, kSliceSide);
  px.middleRows(first_row, last_row - first_row + 1).setConstant(hu);
  return CtSlice(std::move(px), "bar");
}

CtSlice slanted_bar_slice(int first_row, int thickness, double slope, float hu) {
  PixelGrid px = PixelGrid::Zero(kSliceSide, kSliceSide);
  for (int c = 0; c < kSide; ++c) {
    const int top = first_row + static_cast<int>(std::lround(slope * c));
    for (int r = std::max(0, top); r < std::min(kSide, top + thickness); ++r) px(r, c) = hu;
  }
  return CtSlice(std::move(px), "slanted_bar");
}

CtSlice random_fixture_slice(std::uint64_t seed, int index) {
  Rng rng = make_rng(seed, static_cast<std::uint64_t>(index) + 90001);
  PixelGrid px = PixelGrid::Zero(kSliceSide, kSliceSide);
  const int top = uniform_int(rng, 20, 70);
  const int t = uniform_int(rng, 3, 40);
  const double slope = uniform(rng, -0.15, 0.15);
  for (int c = 0; c < kSide; ++c) {
    const int tc = top + static_cast<int>(std::lround(slope * (c - 64)));
    for (int r = std::max(0, tc); r < std::min(kSide, tc + t); ++r) {
      // Interior holes may dip to or below the floor, including negative HU.
      const double u = uniform01(rng);
      px(r, c) = static_cast<float>(u < 0.1 ? uniform(rng, -200, 10) : uniform(rng, 10.0, 2500));
    }
  }
  for (int k = 0; k < 10; ++k)
    px(uniform_int(rng, 0, kSide - 1), uniform_int(rng, 0, kSide - 1)) = static_cast<float>(uniform(rng, 5, 3000));
  // Occasionally exactly-on-floor values to exercise the strict threshold.
  px(uniform_int(rng, 0, kSide - 1), uniform_int(rng, 0, kSide - 1)) = 10.0f;
  char id[32];
  std::snprintf(id, sizeof id, "fixture_%04d", index);
  return CtSlice(std::move(px), id);
}

Volume synthetic_volume(int depth, int height, int width, std::uint64_t seed) {
  Volume v;
  v.id = "volume";
  for (int d = 0; d < depth; ++d) {
    const CtSlice s = generate_real_proxy(seed, d);
    PixelGrid g = PixelGrid::Constant(height, width, -40.0f);  // soft tissue outside the segment
    const int rh = std::min(height, kSide), rw = std::min(width, kSide);
    g.block((height - rh) / 2, (width - rw) / 2, rh, rw) =
        s.pixels().block((kSide - rh) / 2, (kSide - rw) / 2, rh, rw);
    v.slices.push_back(std::move(g));
  }
  return v;
}

Eigen::MatrixXd gaussian_features(int n, int k, std::uint64_t seed, double shift) {
  Rng rng = make_rng(seed, 4242);
  // Correlated columns: z * L with a fixed random lower-triangular mixing.
  Eigen::MatrixXd mix = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j <= i; ++j) mix(i, j) = gaussian(rng, 0, i == j ? 1.0 : 0.3);
  Eigen::MatrixXd z(n, k);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) z(i, j) = gaussian(rng);
  Eigen::MatrixXd out = z * mix.transpose();
  out.array() += shift;
  return out;
}

std::vector<std::filesystem::path> write_fixture_corpus(const std::filesystem::path& dir, std::uint64_t seed,
                                                        int n_real) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  fs::create_directories(dir);

  const auto reals = real_proxy_set(n_real, seed);
  write_dataset(reals, dir / "real");
  files.push_back(dir / "real" / "manifest.json");

  const auto target = summarize(reals);
  write_file(dir / "target_distribution.json", to_json(target).dump(2) + "\n");
  files.push_back(dir / "target_distribution.json");

  const auto board = checkerboard_slice();
  save_slice(board, dir / "checkerboard.npy", SliceFormat::npy_f32);
  save_slice(board, dir / "checkerboard.pgm", SliceFormat::pgm16);
  files.push_back(dir / "checkerboard.npy");
  files.push_back(dir / "checkerboard.pgm");

  save_volume(synthetic_volume(25, 140, 120, seed), dir / "volume.npy");
  files.push_back(dir / "volume.npy");

  write_matrix_npy(gaussian_features(500, 16, derive_seed(seed, 1)), dir / "features_real.npy");
  write_matrix_npy(gaussian_features(500, 16, derive_seed(seed, 2), 0.25), dir / "features_synth.npy");
  files.push_back(dir / "features_real.npy");
  files.push_back(dir / "features_synth.npy");

  // Candidate "generated" set for the memorization audit: fresh proxies plus
  // one exact copy and one noisy copy of training slices.
  const int n_synth = std::min(100, n_real);
  auto synth = real_proxy_set(n_synth, derive_seed(seed, 3));
  for (std::size_t i = 0; i < synth.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "synth_%04zu", i);
    synth[i] = synth[i].relabeled(id, Provenance::synthetic);
  }
  if (n_synth >= 2) {
    synth[0] = reals[7 % reals.size()].relabeled("synth_0000", Provenance::synthetic);
    Rng rng = make_rng(seed, 77);
    PixelGrid noisy = reals[11 % reals.size()].pixels();
    for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy.data()[i] += static_cast<float>(gaussian(rng, 0, 20));
    synth[1] = CtSlice(std::move(noisy), "synth_0001", Provenance::synthetic);
  }
  write_dataset(synth, dir / "synth");
  files.push_back(dir / "synth" / "manifest.json");
  return files;
}

}  // namespace skullkit
