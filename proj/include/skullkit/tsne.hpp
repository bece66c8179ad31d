#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace skullkit {

// Exact (O(N^2)) t-distributed stochastic neighbour embedding.

struct DataMatrix {
  Eigen::MatrixXd rows;  // N x D, one observation per row
  std::vector<std::string> labels;
  std::vector<std::string> ids;

  Eigen::Index size() const { return rows.rows(); }
  void validate() const;  // N >= 4, labels/ids sized N, finite values
};

// Z-scores every column (constant columns are left centered at 0).
DataMatrix standardized(DataMatrix data);

struct TsneConfig {
  double perplexity = 30.0;
  int iterations = 1000;
  double early_exaggeration = 12.0;
  int exaggeration_iterations = 250;
  double learning_rate = 200.0;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  int momentum_switch_iteration = 250;
  int output_dim = 2;
  double init_sd = 1e-4;
  int kl_every = 50;  // KL trace sampling period
  std::uint64_t seed = 0;

  void validate(Eigen::Index n) const;
};

// Squared Euclidean distances between rows, summed from differences so that
// identical rows are exactly 0 apart.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> squared_distances(
    const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index n = x.rows();
  const Mat xt = x.transpose();  // columns are observations: contiguous access
  Mat d = Mat::Zero(n, n);
#pragma omp parallel for schedule(dynamic, 4)
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = (xt.col(i) - xt.col(j)).squaredNorm();
  d.template triangularView<Eigen::StrictlyLower>() = d.transpose();
  return d;
}

struct Affinities {
  Eigen::MatrixXd conditional;    // row i holds P_{j|i}
  Eigen::MatrixXd joint;          // (P_{j|i} + P_{i|j}) / 2N
  Eigen::VectorXd beta;           // Gaussian precision 1 / (2 sigma_i^2) per row
  Eigen::VectorXd perplexity;     // achieved exp(H_i) per row
};

// Calibrates each row's bandwidth by bisection so exp(H) matches the target
// perplexity (|exp(H) - perplexity| <= 1e-5). Throws DegenerateAffinityError
// when a row cannot reach it (e.g. duplicate rows).
Affinities pairwise_affinities(const Eigen::MatrixXd& x, double perplexity);
Affinities affinities_from_distances(const Eigen::MatrixXd& sq_dist, double perplexity);

struct Embedding {
  Eigen::MatrixXd points;  // N x output_dim
  double initial_kl = 0;
  double final_kl = 0;
  std::vector<double> kl_trace;  // KL(P||Q) at iteration 0, kl_every, ..., final
  std::vector<std::string> labels;
  std::vector<std::string> ids;
};

Eigen::MatrixXd initial_points(Eigen::Index n, const TsneConfig& cfg);

double kl_divergence(const Eigen::MatrixXd& joint_p, const Eigen::MatrixXd& y);

Embedding run_tsne(const DataMatrix& data, const TsneConfig& cfg);
Embedding run_tsne(const DataMatrix& data, const TsneConfig& cfg, Eigen::MatrixXd init);
// Same optimizer starting from already-calibrated joint affinities.
Embedding run_tsne(const Eigen::MatrixXd& joint_p, const TsneConfig& cfg, Eigen::MatrixXd init);

// Fraction of points (optionally only those in `subset`) whose own label holds
// a strict plurality among their k nearest neighbours.
double knn_purity(const Eigen::MatrixXd& points, std::span<const std::string> labels, int k = 5,
                  std::optional<std::span<const Eigen::Index>> subset = std::nullopt);
double knn_purity(const Embedding& emb, int k = 5);

// Mean silhouette coefficient with Euclidean distance.
double silhouette(const Eigen::MatrixXd& points, std::span<const std::string> labels);
double silhouette(const Embedding& emb);

// `id,label,x,y,final_kl` with a header row.
std::string embedding_csv(const Embedding& emb);

}  // namespace skullkit
