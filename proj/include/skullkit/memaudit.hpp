#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "skullkit/fid.hpp"
#include "skullkit/slice.hpp"

namespace skullkit {

// Memorization audit: nearest training slices for every generated slice.

enum class MatchMethod { mse, cosine };

std::string_view to_string(MatchMethod m);

struct Neighbor {
  std::string real_id;
  double score = 0;  // MSE (lower is closer) or cosine similarity (higher is closer)
  MatchMethod method = MatchMethod::mse;
};

struct MatchRecord {
  std::string synthetic_id;
  std::vector<Neighbor> neighbors;  // best first, ties broken by real id
  bool exact_duplicate = false;     // MSE exactly 0
  bool near_duplicate = false;      // best MSE below the audit threshold
};

// Mean over all pixels of the squared HU difference.
double pixel_mse(const CtSlice& a, const CtSlice& b);

std::vector<MatchRecord> nearest_by_mse(std::span<const CtSlice> synth, std::span<const CtSlice> reals, int k);

double cosine_similarity(const Eigen::Ref<const Eigen::RowVectorXd>& u,
                         const Eigen::Ref<const Eigen::RowVectorXd>& v);

// Throws InvalidArgument on zero-norm rows.
std::vector<MatchRecord> nearest_by_cosine(const FeatureMatrix& synth_feats,
                                           std::span<const std::string> synth_ids,
                                           const FeatureMatrix& real_feats,
                                           std::span<const std::string> real_ids, int k);

struct AuditReport {
  bool memorization_suspected = false;
  double mse_near_threshold = 0;
  std::vector<std::string> exact_duplicates;
  std::vector<std::string> near_duplicates;
  std::vector<MatchRecord> mse;
  std::vector<MatchRecord> cosine;

  std::string verdict() const { return memorization_suspected ? "memorization suspected" : "clean"; }
};

// Merges both searches (same synthetic ids in the same order, or cosine empty)
// and flags exact / near duplicates by MSE.
AuditReport audit_report(std::vector<MatchRecord> mse, std::vector<MatchRecord> cosine,
                         double mse_near_threshold);

nlohmann::json to_json(const AuditReport& report);

}  // namespace skullkit
