#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "skullkit/slice.hpp"

namespace skullkit {

// Deterministic test data. The "real proxy" stands in for the clinical
// training set: curved two-table plates with porous diploe, partial-volume
// edges and pixel noise, drawn from two anatomical modes (thin dense temporal
// bone vs thick porous parietal bone) so that mean intensity is bimodal.
CtSlice generate_real_proxy(std::uint64_t seed, int index);
std::vector<CtSlice> real_proxy_set(int n, std::uint64_t seed);

// 0 / 1000 HU alternating pixels.
CtSlice checkerboard_slice(float even_hu = 0.0f, float odd_hu = 1000.0f);

// Full-width horizontal bar covering rows [first_row, last_row].
CtSlice bar_slice(int first_row, int last_row, float hu);

// Bar whose top edge drifts by `slope` rows per column.
CtSlice slanted_bar_slice(int first_row, int thickness, double slope, float hu);

// Random slice: a noisy plate with random holes and a few isolated specks.
CtSlice random_fixture_slice(std::uint64_t seed, int index);

// Skull-like stack with arbitrary in-plane size (exercises crop/pad).
Volume synthetic_volume(int depth, int height, int width, std::uint64_t seed);

// N x K Gaussian feature rows with per-column mean `shift`.
Eigen::MatrixXd gaussian_features(int n, int k, std::uint64_t seed, double shift = 0.0);

// Writes the full fixture corpus used by the CLI pipeline and returns the
// list of emitted files.
std::vector<std::filesystem::path> write_fixture_corpus(const std::filesystem::path& dir,
                                                        std::uint64_t seed, int n_real = 300);

}  // namespace skullkit
