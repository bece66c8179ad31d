#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "skullkit/error.hpp"
#include "skullkit/tsne.hpp"
#include "test_util.hpp"

using namespace skullkit;

namespace {

Eigen::MatrixXd gaussian_matrix(int n, int d, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sd);
  Eigen::MatrixXd m(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = g(rng);
  return m;
}

DataMatrix labelled(Eigen::MatrixXd rows, std::vector<std::string> labels) {
  DataMatrix d;
  d.rows = std::move(rows);
  d.labels = std::move(labels);
  for (Eigen::Index i = 0; i < d.rows.rows(); ++i) d.ids.push_back("p" + std::to_string(i));
  return d;
}

DataMatrix two_clusters(int n, int dim, std::uint64_t seed) {
  Eigen::MatrixXd x = gaussian_matrix(n, dim, seed, 0.5);
  std::vector<std::string> labels;
  for (int i = 0; i < n; ++i) {
    const bool b = i % 2;
    if (b) x.row(i).array() += 20.0;
    labels.push_back(b ? "b" : "a");
  }
  return labelled(std::move(x), std::move(labels));
}

}  // namespace

TEST_CASE("squared distances are exact zeros for duplicate rows") {
  Eigen::MatrixXd x = gaussian_matrix(6, 4, 1, 1000.0);
  x.row(3) = x.row(1);
  const auto d = squared_distances(x);
  CHECK(d(1, 3) == 0.0);
  CHECK(d(3, 1) == 0.0);
  CHECK(d.diagonal().isZero(0));
  CHECK(d(0, 2) == doctest::Approx((x.row(0) - x.row(2)).squaredNorm()));
  CHECK((d - d.transpose()).isZero(0));
}

TEST_CASE("every conditional row hits the target perplexity") {
  const Eigen::MatrixXd x = gaussian_matrix(50, 10, 2);
  for (double perp : {5.0, 10.0, 15.0}) {
    const auto aff = pairwise_affinities(x, perp);
    for (Eigen::Index i = 0; i < 50; ++i) {
      std::vector<double> row;
      for (Eigen::Index j = 0; j < 50; ++j) row.push_back(aff.conditional(i, j));
      CHECK(aff.conditional(i, i) == 0.0);
      CHECK(std::abs(oracle::perplexity_of(row) - perp) <= 1e-3);
      CHECK(std::abs(aff.perplexity(i) - perp) <= 1e-5);
    }
  }
}

TEST_CASE("joint affinities are symmetric, non-negative, zero-diagonal and sum to 1") {
  const auto aff = pairwise_affinities(gaussian_matrix(40, 5, 3), 8.0);
  const auto& p = aff.joint;
  CHECK((p - p.transpose()).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(p.minCoeff() >= 0.0);
  CHECK(p.diagonal().isZero(0));
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-9));
  for (Eigen::Index i = 0; i < 40; ++i)
    for (Eigen::Index j = 0; j < 40; ++j)
      CHECK(p(i, j) == doctest::Approx((aff.conditional(i, j) + aff.conditional(j, i)) / 80.0).epsilon(1e-12));
}

TEST_CASE("regular simplex gives uniform affinities") {
  const int n = 7;
  const Eigen::MatrixXd x = Eigen::MatrixXd::Identity(n, n) * 3.0;  // all pairwise distances equal
  const auto aff = pairwise_affinities(x, 2.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) CHECK(aff.joint(i, j) == doctest::Approx(1.0 / (n * (n - 1))).epsilon(1e-12));
}

TEST_CASE("two tight far pairs: within-pair affinity dominates") {
  Eigen::MatrixXd x(4, 2);
  x << 0, 0, 0.1, 0, 50, 50, 50.1, 50;
  // Perplexity 1.5 forces some mass onto the far pair; the near partner still dominates.
  const auto aff = pairwise_affinities(x, 1.5);
  CHECK(aff.conditional(0, 1) > 0.75);
  CHECK(aff.joint(0, 1) > 4 * aff.joint(0, 2));
  CHECK(aff.joint(2, 3) > 4 * aff.joint(1, 3));
  CHECK(aff.joint(0, 1) == doctest::Approx(aff.joint(2, 3)).epsilon(1e-9));
}

TEST_CASE("duplicate rows are reported as degenerate") {
  const Eigen::MatrixXd same = Eigen::MatrixXd::Constant(10, 3, 4.2);
  CHECK_THROWS_AS(pairwise_affinities(same, 2.0), DegenerateAffinityError);
  DataMatrix d = labelled(same, std::vector<std::string>(10, "a"));
  TsneConfig cfg;
  cfg.perplexity = 2;
  cfg.iterations = 300;
  CHECK_THROWS_AS(run_tsne(d, cfg), DegenerateAffinityError);
}

TEST_CASE("config validation") {
  TsneConfig cfg;
  CHECK_THROWS_AS(cfg.validate(60), InvalidArgument);  // 30 >= 59/3
  CHECK_NOTHROW(cfg.validate(100));
  cfg.iterations = 100;
  CHECK_THROWS_AS(cfg.validate(100), InvalidArgument);
  DataMatrix tiny = labelled(gaussian_matrix(3, 2, 1), {"a", "b", "c"});
  CHECK_THROWS_AS(tiny.validate(), InvalidArgument);
}

TEST_CASE("separated clusters embed with 5-NN purity 1 and decreasing KL") {
  const auto data = two_clusters(100, 10, 4);
  TsneConfig cfg;
  cfg.seed = 9;
  const auto emb = run_tsne(data, cfg);
  CHECK(emb.points.rows() == 100);
  CHECK(emb.points.allFinite());
  CHECK(knn_purity(emb, 5) == 1.0);
  CHECK(emb.final_kl >= 0.0);
  CHECK(emb.final_kl < emb.initial_kl);
  CHECK(silhouette(emb) > 0.8);
  CHECK(emb.labels == data.labels);
}

TEST_CASE("run_tsne is deterministic and permutation-equivariant") {
  const auto data = two_clusters(40, 5, 5);
  TsneConfig cfg;
  cfg.perplexity = 10;
  cfg.iterations = 400;
  cfg.seed = 3;
  const auto a = run_tsne(data, cfg);
  const auto b = run_tsne(data, cfg);
  CHECK(a.points == b.points);
  CHECK(a.kl_trace == b.kl_trace);

  // Co-permute rows and their initial points. Summation order changes with the
  // permutation and the optimizer amplifies round-off over long runs, so the
  // comparison uses a short run with a small step.
  cfg.learning_rate = 5;
  cfg.iterations = 60;
  cfg.exaggeration_iterations = 30;
  cfg.kl_every = 10;
  std::vector<int> perm(40);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(1);
  std::shuffle(perm.begin(), perm.end(), rng);
  const Eigen::MatrixXd init = initial_points(40, cfg);
  DataMatrix shuffled = data;
  Eigen::MatrixXd init_p(40, 2);
  for (int i = 0; i < 40; ++i) {
    shuffled.rows.row(i) = data.rows.row(perm[i]);
    shuffled.labels[i] = data.labels[perm[i]];
    init_p.row(i) = init.row(perm[i]);
  }
  const auto base = run_tsne(data, cfg, init);
  const auto moved = run_tsne(shuffled, cfg, init_p);
  REQUIRE(base.kl_trace.size() == moved.kl_trace.size());
  for (std::size_t t = 0; t < base.kl_trace.size(); ++t)
    CHECK(moved.kl_trace[t] == doctest::Approx(base.kl_trace[t]).epsilon(1e-8));
  for (int i = 0; i < 40; ++i) {
    CHECK(moved.points(i, 0) == doctest::Approx(base.points(perm[i], 0)).epsilon(1e-6));
    CHECK(moved.points(i, 1) == doctest::Approx(base.points(perm[i], 1)).epsilon(1e-6));
  }
}

TEST_CASE("initial points are Gaussian with sd 1e-4") {
  TsneConfig cfg;
  cfg.seed = 2;
  const auto y = initial_points(2000, cfg);
  const double mean = y.mean();
  const double sd = std::sqrt((y.array() - mean).square().sum() / (y.size() - 1));
  CHECK(std::abs(mean) < 1e-5);
  CHECK(sd == doctest::Approx(1e-4).epsilon(0.05));
}

TEST_CASE("knn_purity edge cases") {
  Eigen::MatrixXd line(10, 2);
  std::vector<std::string> alt, one(10, "x");
  for (int i = 0; i < 10; ++i) {
    line(i, 0) = i;
    line(i, 1) = 0;
    alt.push_back(i % 2 ? "a" : "b");
  }
  CHECK(knn_purity(line, one, 5) == 1.0);
  CHECK(knn_purity(line, alt, 2) == 0.0);
  CHECK_THROWS_AS(knn_purity(line, alt, 10), InvalidArgument);

  double total = 0;
  for (int s = 0; s < 20; ++s) {
    const auto pts = gaussian_matrix(200, 2, 100 + s);
    std::vector<std::string> lab;
    for (int i = 0; i < 200; ++i) lab.push_back(i % 2 ? "a" : "b");
    total += knn_purity(pts, lab, 5);
  }
  CHECK(std::abs(total / 20 - 0.5) <= 0.1);
}

TEST_CASE("silhouette: limits and a hand-worked configuration") {
  Eigen::MatrixXd far(6, 2);
  far << 0, 0, 0.01, 0, 0, 0.01, 100, 100, 100.01, 100, 100, 100.01;
  const std::vector<std::string> lab{"a", "a", "a", "b", "b", "b"};
  CHECK(silhouette(far, lab) == doctest::Approx(1.0).epsilon(1e-3));

  Eigen::MatrixXd same(6, 2);
  same << 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0, 1;
  CHECK(silhouette(same, lab) <= 0.0);

  // Points on a line: a = {0, 1, 2}, b = {5, 6, 10}.
  Eigen::MatrixXd x(6, 1);
  x << 0, 1, 2, 5, 6, 10;
  const Eigen::MatrixXd pts = (Eigen::MatrixXd(6, 2) << x, Eigen::VectorXd::Zero(6)).finished();
  // s(0): a = (1+2)/2 = 1.5, b = (5+6+10)/3 = 7,     s = 1 - 1.5/7
  // s(1): a = (1+1)/2 = 1,   b = (4+5+9)/3 = 6,      s = 1 - 1/6
  // s(2): a = (2+1)/2 = 1.5, b = (3+4+8)/3 = 5,      s = 1 - 1.5/5
  // s(5): a = (1+5)/2 = 3,   b = (5+4+3)/3 = 4,      s = 1 - 3/4
  // s(6): a = (1+4)/2 = 2.5, b = (6+5+4)/3 = 5,      s = 1 - 2.5/5
  // s(10): a = (5+4)/2 = 4.5, b = (10+9+8)/3 = 9,    s = 1 - 4.5/9
  const double expected =
      ((1 - 1.5 / 7) + (1 - 1.0 / 6) + (1 - 1.5 / 5) + (1 - 3.0 / 4) + (1 - 2.5 / 5) + (1 - 4.5 / 9)) / 6;
  CHECK(silhouette(pts, lab) == doctest::Approx(expected).epsilon(1e-12));
  CHECK_THROWS_AS(silhouette(pts, std::vector<std::string>{"a", "a", "a", "a", "a", "b"}), InvalidArgument);
}

TEST_CASE("embedding CSV has the documented columns") {
  Embedding e;
  e.points = Eigen::MatrixXd::Zero(2, 2);
  e.points(1, 0) = 1.5;
  e.labels = {"real", "synthetic"};
  e.ids = {"r0", "s0"};
  e.final_kl = 0.25;
  const auto csv = embedding_csv(e);
  CHECK(csv.rfind("id,label,x,y,final_kl\n", 0) == 0);
  CHECK(csv.find("s0,synthetic,1.5,0,0.25") != std::string::npos);
}
