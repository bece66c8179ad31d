#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "skullkit/slice.hpp"

namespace skullkit {

namespace fs = std::filesystem;

enum class SliceFormat { npy_f32, pgm16 };

// Picks the format from the file extension (.npy / .pgm).
SliceFormat format_from_path(const fs::path& path);

// --- NPY v1.0 ----------------------------------------------------------------

struct NpyArray {
  std::vector<std::size_t> shape;
  std::vector<double> data;  // C order
  std::string descr;         // dtype as stored on disk ('<f4' or '<f8')

  std::size_t size() const;
};

NpyArray read_npy(const fs::path& path);
NpyArray parse_npy(const std::string& bytes);

// Always writes little-endian f32, C order, NPY format version 1.0.
void write_npy_f32(const fs::path& path, const float* data, const std::vector<std::size_t>& shape);
std::string encode_npy_f32(const float* data, const std::vector<std::size_t>& shape);

// --- slices and volumes ------------------------------------------------------

CtSlice load_slice(const fs::path& path, SliceFormat format, std::string id = {},
                   Provenance provenance = Provenance::real);
CtSlice load_slice(const fs::path& path);

// pgm16 stores round(HU) + hu_offset; when no offset is given the smallest
// non-negative offset that keeps every value representable is chosen.
void save_slice(const CtSlice& slice, const fs::path& path, SliceFormat format,
                std::optional<int> hu_offset = std::nullopt);
void save_slice(const CtSlice& slice, const fs::path& path);

// 3-D (D, H, W) NPY stack.
Volume load_volume(const fs::path& path, double slice_spacing_mm = 0.625,
                   double mm_per_px = 0.45);
void save_volume(const Volume& volume, const fs::path& path);

// --- dataset manifests -------------------------------------------------------

struct ManifestRecord {
  std::string id;
  fs::path path;  // resolved against the manifest's directory when relative
  Provenance provenance = Provenance::real;
};

std::vector<ManifestRecord> load_manifest(const fs::path& path);

// Paths are written relative to the manifest's directory when possible.
void save_manifest(const std::vector<ManifestRecord>& records, const fs::path& path);

std::vector<CtSlice> load_dataset(const std::vector<ManifestRecord>& records);

// A manifest path, or a directory holding manifest.json, or a directory of
// .npy/.pgm files (sorted by name, provenance `fallback`).
std::vector<ManifestRecord> resolve_dataset(const fs::path& path,
                                            Provenance fallback = Provenance::real);

// Writes each slice as <dir>/<id>.npy and returns the matching manifest.
std::vector<ManifestRecord> write_dataset(const std::vector<CtSlice>& slices, const fs::path& dir,
                                          const std::string& manifest_name = "manifest.json");

// --- feature matrices --------------------------------------------------------

Eigen::MatrixXd read_matrix_npy(const fs::path& path);
void write_matrix_npy(const Eigen::MatrixXd& m, const fs::path& path);

std::string read_file(const fs::path& path);
void write_file(const fs::path& path, const std::string& bytes);

}  // namespace skullkit
