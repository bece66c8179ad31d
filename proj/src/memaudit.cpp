#include "skullkit/memaudit.hpp"

#include <algorithm>

namespace skullkit {

std::string_view to_string(MatchMethod m) { return m == MatchMethod::mse ? "mse" : "cosine"; }

double pixel_mse(const CtSlice& a, const CtSlice& b) {
  const Eigen::ArrayXd d = (a.pixels().cast<double>() - b.pixels().cast<double>()).reshaped().array();
  return d.square().sum() / static_cast<double>(d.size());
}

namespace {

template <typename Better>
std::vector<Neighbor> top_k(std::vector<Neighbor> all, int k, Better better) {
  const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k), all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(kk), all.end(),
                    [&](const Neighbor& x, const Neighbor& y) {
                      if (x.score != y.score) return better(x.score, y.score);
                      return x.real_id < y.real_id;
                    });
  all.resize(kk);
  return all;
}

}  // namespace

std::vector<MatchRecord> nearest_by_mse(std::span<const CtSlice> synth, std::span<const CtSlice> reals, int k) {
  if (synth.empty() || reals.empty()) throw EmptyDatasetError("nearest_by_mse: empty slice set");
  if (k < 1) throw InvalidArgument("nearest_by_mse: k must be >= 1");
  std::vector<MatchRecord> out(synth.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(synth.size()); ++i) {
    const auto& s = synth[static_cast<std::size_t>(i)];
    std::vector<Neighbor> all;
    all.reserve(reals.size());
    for (const auto& r : reals) all.push_back({r.id(), pixel_mse(s, r), MatchMethod::mse});
    auto& rec = out[static_cast<std::size_t>(i)];
    rec.synthetic_id = s.id();
    rec.neighbors = top_k(std::move(all), k, std::less<double>());
    rec.exact_duplicate = rec.neighbors.front().score == 0.0;
  }
  return out;
}

double cosine_similarity(const Eigen::Ref<const Eigen::RowVectorXd>& u,
                         const Eigen::Ref<const Eigen::RowVectorXd>& v) {
  const double nu = u.norm(), nv = v.norm();
  if (!(nu > 0) || !(nv > 0)) throw InvalidArgument("cosine similarity of a zero-norm vector");
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

std::vector<MatchRecord> nearest_by_cosine(const FeatureMatrix& synth_feats, std::span<const std::string> synth_ids,
                                           const FeatureMatrix& real_feats, std::span<const std::string> real_ids,
                                           int k) {
  const auto& s = synth_feats.features;
  const auto& r = real_feats.features;
  if (s.rows() == 0 || r.rows() == 0) throw EmptyDatasetError("nearest_by_cosine: empty feature set");
  if (s.cols() != r.cols()) throw DimensionError("nearest_by_cosine: feature dimensions differ");
  if (static_cast<Eigen::Index>(synth_ids.size()) != s.rows() ||
      static_cast<Eigen::Index>(real_ids.size()) != r.rows())
    throw InvalidArgument("nearest_by_cosine: one id per feature row required");
  if (k < 1) throw InvalidArgument("nearest_by_cosine: k must be >= 1");
  auto check_norms = [](const Eigen::MatrixXd& m, const char* which) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (!(m.row(i).norm() > 0))
        throw InvalidArgument(std::string("zero-norm ") + which + " feature row " + std::to_string(i));
  };
  check_norms(s, "synthetic");
  check_norms(r, "real");

  std::vector<MatchRecord> out(static_cast<std::size_t>(s.rows()));
#pragma omp parallel for schedule(dynamic, 4)
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    std::vector<Neighbor> all;
    all.reserve(static_cast<std::size_t>(r.rows()));
    for (Eigen::Index j = 0; j < r.rows(); ++j)
      all.push_back({real_ids[static_cast<std::size_t>(j)], cosine_similarity(s.row(i), r.row(j)), MatchMethod::cosine});
    auto& rec = out[static_cast<std::size_t>(i)];
    rec.synthetic_id = synth_ids[static_cast<std::size_t>(i)];
    rec.neighbors = top_k(std::move(all), k, std::greater<double>());
  }
  return out;
}

AuditReport audit_report(std::vector<MatchRecord> mse, std::vector<MatchRecord> cosine, double mse_near_threshold) {
  if (!cosine.empty()) {
    if (cosine.size() != mse.size()) throw InvalidArgument("audit_report: record sets differ in size");
    for (std::size_t i = 0; i < mse.size(); ++i)
      if (mse[i].synthetic_id != cosine[i].synthetic_id)
        throw InvalidArgument("audit_report: synthetic id mismatch at " + std::to_string(i) + " ('" +
                              mse[i].synthetic_id + "' vs '" + cosine[i].synthetic_id + "')");
  }
  if (!(mse_near_threshold >= 0)) throw InvalidArgument("audit_report: threshold must be >= 0");
  AuditReport rep;
  rep.mse_near_threshold = mse_near_threshold;
  for (auto& rec : mse) {
    if (rec.neighbors.empty()) continue;
    const double best = rec.neighbors.front().score;
    rec.exact_duplicate = best == 0.0;
    rec.near_duplicate = !rec.exact_duplicate && best < mse_near_threshold;
    if (rec.exact_duplicate) rep.exact_duplicates.push_back(rec.synthetic_id);
    if (rec.near_duplicate) rep.near_duplicates.push_back(rec.synthetic_id);
  }
  rep.memorization_suspected = !rep.exact_duplicates.empty() || !rep.near_duplicates.empty();
  rep.mse = std::move(mse);
  rep.cosine = std::move(cosine);
  return rep;
}

nlohmann::json to_json(const AuditReport& report) {
  auto records = [](const std::vector<MatchRecord>& rs) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rs) {
      nlohmann::json nb = nlohmann::json::array();
      for (const auto& n : r.neighbors)
        nb.push_back({{"real_id", n.real_id}, {"score", n.score}, {"method", std::string(to_string(n.method))}});
      arr.push_back({{"synthetic_id", r.synthetic_id},
                     {"neighbors", nb},
                     {"exact_duplicate", r.exact_duplicate},
                     {"near_duplicate", r.near_duplicate}});
    }
    return arr;
  };
  return {{"verdict", report.verdict()},
          {"mse_near_threshold", report.mse_near_threshold},
          {"exact_duplicates", report.exact_duplicates},
          {"near_duplicates", report.near_duplicates},
          {"mse", records(report.mse)},
          {"cosine", records(report.cosine)}};
}

}  // namespace skullkit
