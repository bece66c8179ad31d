#include "skullkit/fid.hpp"

#include "skullkit/io.hpp"

namespace skullkit {

void FeatureMatrix::validate() const {
  if (features.rows() < 2) throw InvalidArgument("FeatureMatrix '" + source + "': need N >= 2 rows");
  if (!features.allFinite()) throw FormatError("FeatureMatrix '" + source + "': non-finite value");
}

FeatureMatrix load_features(const std::filesystem::path& path) {
  FeatureMatrix f{read_matrix_npy(path), path.string()};
  f.validate();
  return f;
}

void save_features(const FeatureMatrix& f, const std::filesystem::path& path) {
  write_matrix_npy(f.features, path);
}

std::string_view to_string(FidMode m) {
  return m == FidMode::standard ? "standard" : "elementwise";
}

FidMode fid_mode_from_string(std::string_view s) {
  if (s == "standard") return FidMode::standard;
  if (s == "elementwise") return FidMode::elementwise;
  throw InvalidArgument("unknown FID mode '" + std::string(s) + "'");
}

}  // namespace skullkit
