#include "skullkit/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>

#include "skullkit/error.hpp"
#include "skullkit/rng.hpp"

namespace skullkit {

void DataMatrix::validate() const {
  if (rows.rows() < 4) throw InvalidArgument("t-SNE needs at least 4 observations");
  if (static_cast<Eigen::Index>(labels.size()) != rows.rows() ||
      static_cast<Eigen::Index>(ids.size()) != rows.rows())
    throw InvalidArgument("DataMatrix: labels/ids must have one entry per row");
  if (!rows.allFinite()) throw InvalidArgument("DataMatrix: non-finite value");
}

DataMatrix standardized(DataMatrix data) {
  const Eigen::RowVectorXd mean = data.rows.colwise().mean();
  data.rows.rowwise() -= mean;
  const double n = static_cast<double>(std::max<Eigen::Index>(1, data.rows.rows() - 1));
  for (Eigen::Index c = 0; c < data.rows.cols(); ++c) {
    const double sd = std::sqrt(data.rows.col(c).squaredNorm() / n);
    if (sd > 0) data.rows.col(c) /= sd;
  }
  return data;
}

void TsneConfig::validate(Eigen::Index n) const {
  if (!(perplexity > 0) || !(perplexity < static_cast<double>(n - 1) / 3.0))
    throw InvalidArgument("t-SNE: perplexity must satisfy 0 < perplexity < (N-1)/3");
  if (iterations < exaggeration_iterations || exaggeration_iterations < 0)
    throw InvalidArgument("t-SNE: iterations must be >= exaggeration duration");
  if (!(learning_rate > 0) || !(early_exaggeration >= 1) || output_dim < 1 || !(init_sd > 0))
    throw InvalidArgument("t-SNE: invalid optimizer settings");
}

namespace {

// Conditional row for precision beta, shifted by the smallest distance so that
// large raw distances do not underflow. Returns the entropy in nats.
double row_entropy(const Eigen::VectorXd& shifted, double beta, Eigen::VectorXd& p) {
  p = (-beta * shifted.array()).exp();
  const double z = p.sum();
  const double h = std::log(z) + beta * p.dot(shifted) / z;
  p /= z;
  return h;
}

}  // namespace

Affinities affinities_from_distances(const Eigen::MatrixXd& sq_dist, double perplexity) {
  const Eigen::Index n = sq_dist.rows();
  if (n < 2 || sq_dist.cols() != n) throw InvalidArgument("affinities: distance matrix must be square");
  const double target = std::log(perplexity);
  Affinities a;
  a.conditional = Eigen::MatrixXd::Zero(n, n);
  a.beta.resize(n);
  a.perplexity.resize(n);
  std::vector<std::string> failures(static_cast<std::size_t>(n));

#pragma omp parallel for schedule(dynamic, 8)
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd d(n - 1);
    d << sq_dist.row(i).head(i).transpose(), sq_dist.row(i).tail(n - i - 1).transpose();
    const double dmin = d.minCoeff();
    d.array() -= dmin;
    const double spread = d.mean();
    Eigen::VectorXd p;
    if (!(spread > 0)) {
      if (!(dmin > 0)) {
        failures[static_cast<std::size_t>(i)] = "every other row duplicates this one";
        continue;
      }
      // Equidistant neighbours: the conditional is uniform for every bandwidth.
      a.beta[i] = 0;
      a.perplexity[i] = static_cast<double>(n - 1);
      a.conditional.row(i).setConstant(1.0 / static_cast<double>(n - 1));
      a.conditional(i, i) = 0;
      continue;
    }
    // Bracket the precision, then bisect geometrically.
    double lo = 0, hi = std::numeric_limits<double>::infinity();
    double beta = 1.0 / spread;
    double h = row_entropy(d, beta, p);
    bool done = false;
    for (int it = 0; it < 400; ++it) {
      if (std::abs(std::exp(h) - perplexity) <= 1e-5) {
        done = true;
        break;
      }
      if (h > target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
      if (!(beta > 0) || beta > 1e300) break;
      h = row_entropy(d, beta, p);
    }
    if (!done) {
      failures[static_cast<std::size_t>(i)] = "bandwidth search failed to bracket the target perplexity";
      continue;
    }
    a.beta[i] = beta;
    a.perplexity[i] = std::exp(h);
    a.conditional.row(i).head(i) = p.head(i).transpose();
    a.conditional.row(i).tail(n - i - 1) = p.tail(n - i - 1).transpose();
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& f = failures[static_cast<std::size_t>(i)];
    if (!f.empty())
      throw DegenerateAffinityError("t-SNE affinity row " + std::to_string(i) + ": " + f +
                                        " (duplicate rows? jitter the input)",
                                    static_cast<long>(i));
  }
  a.joint = (a.conditional + a.conditional.transpose()) / (2.0 * static_cast<double>(n));
  return a;
}

Affinities pairwise_affinities(const Eigen::MatrixXd& x, double perplexity) {
  if (!(perplexity > 0)) throw InvalidArgument("perplexity must be positive");
  return affinities_from_distances(squared_distances(x), perplexity);
}

Eigen::MatrixXd initial_points(Eigen::Index n, const TsneConfig& cfg) {
  Rng rng = make_rng(cfg.seed, 0x75e);
  Eigen::MatrixXd y(n, cfg.output_dim);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < cfg.output_dim; ++k) y(i, k) = gaussian(rng, 0.0, cfg.init_sd);
  return y;
}

namespace {

// Student-t kernel 1 / (1 + |yi - yj|^2) with zero diagonal.
Eigen::MatrixXd student_kernel(const Eigen::MatrixXd& y) {
  const Eigen::Index n = y.rows();
  Eigen::MatrixXd num(n, n);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j)
      num(i, j) = i == j ? 0.0 : 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
  }
  return num;
}

// Row-ordered reduction so the result never depends on thread scheduling.
double ordered_sum(const Eigen::VectorXd& partial) {
  double s = 0;
  for (Eigen::Index i = 0; i < partial.size(); ++i) s += partial[i];
  return s;
}

double kl_from_kernel(const Eigen::MatrixXd& p, const Eigen::MatrixXd& num) {
  const Eigen::Index n = p.rows();
  Eigen::VectorXd rows_num = num.rowwise().sum();
  const double z = ordered_sum(rows_num);
  Eigen::VectorXd partial = Eigen::VectorXd::Zero(n);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double pij = p(i, j);
      if (pij > 0) s += pij * std::log(pij / std::max(num(i, j) / z, 1e-300));
    }
    partial[i] = s;
  }
  return ordered_sum(partial);
}

}  // namespace

double kl_divergence(const Eigen::MatrixXd& joint_p, const Eigen::MatrixXd& y) {
  return kl_from_kernel(joint_p, student_kernel(y));
}

Embedding run_tsne(const Eigen::MatrixXd& joint_p, const TsneConfig& cfg, Eigen::MatrixXd y) {
  const Eigen::Index n = joint_p.rows();
  cfg.validate(n);
  if (y.rows() != n || y.cols() != cfg.output_dim) throw InvalidArgument("t-SNE: bad initial embedding shape");

  Embedding emb;
  Eigen::MatrixXd update = Eigen::MatrixXd::Zero(n, cfg.output_dim);
  Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(n, cfg.output_dim);
  Eigen::MatrixXd grad(n, cfg.output_dim);

  emb.initial_kl = kl_divergence(joint_p, y);
  emb.kl_trace.push_back(emb.initial_kl);

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const double exaggeration = iter < cfg.exaggeration_iterations ? cfg.early_exaggeration : 1.0;
    const double momentum = iter < cfg.momentum_switch_iteration ? cfg.initial_momentum : cfg.final_momentum;
    const Eigen::MatrixXd num = student_kernel(y);
    const double z = ordered_sum(num.rowwise().sum());

    // dC/dy_i = 4 sum_j (p_ij - q_ij) (1 + |yi - yj|^2)^-1 (y_i - y_j)
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::RowVectorXd g = Eigen::RowVectorXd::Zero(cfg.output_dim);
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const double w = (exaggeration * joint_p(i, j) - num(i, j) / z) * num(i, j);
        g += w * (y.row(i) - y.row(j));
      }
      grad.row(i) = 4.0 * g;
    }
    if (!grad.allFinite()) {
      char msg[128];
      std::snprintf(msg, sizeof msg, "t-SNE: non-finite gradient at iteration %d (max |y| = %g)", iter,
                    y.cwiseAbs().maxCoeff());
      throw NumericalError(msg);
    }

    // Delta-bar-delta gains, as in the reference implementation.
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index k = 0; k < cfg.output_dim; ++k) {
        const bool same_sign = (grad(i, k) > 0) == (update(i, k) > 0);
        gains(i, k) = std::max(same_sign ? gains(i, k) * 0.8 : gains(i, k) + 0.2, 0.01);
      }
    }
    update = momentum * update - cfg.learning_rate * gains.cwiseProduct(grad);
    y += update;
    y.rowwise() -= y.colwise().mean();

    if (cfg.kl_every > 0 && (iter + 1) % cfg.kl_every == 0 && iter + 1 < cfg.iterations)
      emb.kl_trace.push_back(kl_divergence(joint_p, y));
  }
  emb.final_kl = kl_divergence(joint_p, y);
  emb.kl_trace.push_back(emb.final_kl);
  emb.points = std::move(y);
  return emb;
}

Embedding run_tsne(const DataMatrix& data, const TsneConfig& cfg, Eigen::MatrixXd init) {
  data.validate();
  cfg.validate(data.size());
  const Affinities aff = pairwise_affinities(data.rows, cfg.perplexity);
  Embedding emb = run_tsne(aff.joint, cfg, std::move(init));
  emb.labels = data.labels;
  emb.ids = data.ids;
  return emb;
}

Embedding run_tsne(const DataMatrix& data, const TsneConfig& cfg) {
  return run_tsne(data, cfg, initial_points(data.size(), cfg));
}

double knn_purity(const Eigen::MatrixXd& points, std::span<const std::string> labels, int k,
                  std::optional<std::span<const Eigen::Index>> subset) {
  const Eigen::Index n = points.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n) throw InvalidArgument("knn_purity: label count mismatch");
  if (k < 1 || n <= k) throw InvalidArgument("knn_purity: need N > k >= 1");
  std::vector<Eigen::Index> who;
  if (subset) {
    who.assign(subset->begin(), subset->end());
  } else {
    who.resize(static_cast<std::size_t>(n));
    std::iota(who.begin(), who.end(), Eigen::Index{0});
  }
  if (who.empty()) throw InvalidArgument("knn_purity: empty subset");
  std::vector<char> pure(who.size(), 0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t w = 0; w < static_cast<std::ptrdiff_t>(who.size()); ++w) {
    const Eigen::Index i = who[static_cast<std::size_t>(w)];
    std::vector<std::pair<double, Eigen::Index>> d;
    d.reserve(static_cast<std::size_t>(n - 1));
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) d.emplace_back((points.row(i) - points.row(j)).squaredNorm(), j);
    std::partial_sort(d.begin(), d.begin() + k, d.end());
    std::map<std::string_view, int> votes;
    for (int m = 0; m < k; ++m) ++votes[labels[static_cast<std::size_t>(d[static_cast<std::size_t>(m)].second)]];
    const std::string_view own = labels[static_cast<std::size_t>(i)];
    const int mine = votes[own];
    bool strict = true;
    for (const auto& [lab, cnt] : votes)
      if (lab != own && cnt >= mine) strict = false;
    pure[static_cast<std::size_t>(w)] = strict && mine > 0;
  }
  return static_cast<double>(std::count(pure.begin(), pure.end(), 1)) / static_cast<double>(who.size());
}

double knn_purity(const Embedding& emb, int k) { return knn_purity(emb.points, emb.labels, k); }

double silhouette(const Eigen::MatrixXd& points, std::span<const std::string> labels) {
  const Eigen::Index n = points.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n) throw InvalidArgument("silhouette: label count mismatch");
  std::map<std::string_view, int> sizes;
  for (const auto& l : labels) ++sizes[l];
  if (sizes.size() < 2) throw InvalidArgument("silhouette: need at least two labels");
  for (const auto& [lab, cnt] : sizes)
    if (cnt < 2) throw InvalidArgument("silhouette: label '" + std::string(lab) + "' is a singleton");

  Eigen::VectorXd s(n);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    std::map<std::string_view, double> sum;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) sum[labels[static_cast<std::size_t>(j)]] += (points.row(i) - points.row(j)).norm();
    const std::string_view own = labels[static_cast<std::size_t>(i)];
    const double a = sum[own] / (sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [lab, total] : sum)
      if (lab != own) b = std::min(b, total / sizes[lab]);
    const double denom = std::max(a, b);
    s[i] = denom > 0 ? (b - a) / denom : 0.0;
  }
  return ordered_sum(s) / static_cast<double>(n);
}

double silhouette(const Embedding& emb) { return silhouette(emb.points, emb.labels); }

std::string embedding_csv(const Embedding& emb) {
  std::string out = "id,label,x,y,final_kl\n";
  char buf[160];
  for (Eigen::Index i = 0; i < emb.points.rows(); ++i) {
    const double x = emb.points(i, 0), y = emb.points.cols() > 1 ? emb.points(i, 1) : 0.0;
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g\n", x, y, emb.final_kl);
    out += emb.ids.empty() ? std::to_string(i) : emb.ids[static_cast<std::size_t>(i)];
    out += ",";
    out += emb.labels.empty() ? "" : emb.labels[static_cast<std::size_t>(i)];
    out += buf;
  }
  return out;
}

}  // namespace skullkit
