#pragma once

#include <stdexcept>
#include <string>

namespace skullkit {

// Every domain failure carries a stable machine-readable kind so the CLI can
// emit structured errors.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct IoError : Error {
  explicit IoError(const std::string& m) : Error("io", m) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& m) : Error("format", m) {}
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& m) : Error("dimension", m) {}
};

struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& m) : Error("invalid_argument", m) {}
};

struct NoBoneError : Error {
  explicit NoBoneError(const std::string& m) : Error("no_bone", m) {}
};

struct EmptyDatasetError : Error {
  explicit EmptyDatasetError(const std::string& m) : Error("empty_dataset", m) {}
};

struct FitFailedError : Error {
  FitFailedError(const std::string& m, double best_ks)
      : Error("fit_failed", m), best_ks(best_ks) {}
  double best_ks;
};

struct DegenerateAffinityError : Error {
  DegenerateAffinityError(const std::string& m, long row)
      : Error("degenerate_affinity", m), row(row) {}
  long row;
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& m) : Error("numerical", m) {}
};

// VTT protocol violations (unknown ids, revision attempts, incomplete sessions).
struct SessionError : Error {
  SessionError(std::string kind, const std::string& m) : Error(std::move(kind), m) {}
};

}  // namespace skullkit
