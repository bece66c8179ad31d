#include <doctest.h>

#include <random>

#include "skullkit/error.hpp"
#include "skullkit/features.hpp"
#include "skullkit/fixtures.hpp"
#include "skullkit/memaudit.hpp"
#include "skullkit/rng.hpp"
#include "test_util.hpp"

using namespace skullkit;

namespace {

std::vector<CtSlice> random_set(int n, std::uint64_t seed, const std::string& prefix) {
  std::mt19937_64 rng(seed);
  std::vector<CtSlice> out;
  for (int i = 0; i < n; ++i) out.emplace_back(testutil::random_grid(rng, 0, 2000), prefix + std::to_string(i));
  return out;
}

std::vector<std::string> ids_of(const std::vector<CtSlice>& v) {
  std::vector<std::string> out;
  for (const auto& s : v) out.push_back(s.id());
  return out;
}

}  // namespace

TEST_CASE("planted duplicate and constant offset") {
  auto reals = real_proxy_set(10, 1);
  std::vector<CtSlice> synth{reals[4].relabeled("copy", Provenance::synthetic),
                             CtSlice(reals[6].pixels().array() + 10.0f, "offset", Provenance::synthetic)};
  const auto recs = nearest_by_mse(synth, reals, 3);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].synthetic_id == "copy");
  CHECK(recs[0].neighbors[0].real_id == reals[4].id());
  CHECK(recs[0].neighbors[0].score == 0.0);
  CHECK(recs[0].exact_duplicate);
  CHECK(recs[1].neighbors[0].real_id == reals[6].id());
  // Pixels are float, so +10 HU is exact only to float rounding.
  CHECK(recs[1].neighbors[0].score == doctest::Approx(100.0).epsilon(1e-6));
  CHECK_FALSE(recs[1].exact_duplicate);
  for (const auto& r : recs) {
    CHECK(r.neighbors.size() == 3);
    for (std::size_t i = 1; i < r.neighbors.size(); ++i) CHECK(r.neighbors[i - 1].score <= r.neighbors[i].score);
    for (const auto& n : r.neighbors) CHECK(n.method == MatchMethod::mse);
  }
}

TEST_CASE("MSE ranking matches an exhaustive oracle") {
  const auto synth = random_set(20, 2, "s");
  const auto reals = random_set(20, 3, "r");
  const auto recs = nearest_by_mse(synth, reals, 5);
  const auto rnames = ids_of(reals);
  for (std::size_t i = 0; i < synth.size(); ++i) {
    std::vector<double> scores;
    for (const auto& r : reals) scores.push_back(oracle::mse(testutil::image_of(synth[i]), testutil::image_of(r)));
    const auto best = oracle::best_k(scores, rnames, 5, true);
    for (int j = 0; j < 5; ++j) {
      CHECK(recs[i].neighbors[static_cast<std::size_t>(j)].real_id == rnames[static_cast<std::size_t>(best[j])]);
      CHECK(recs[i].neighbors[static_cast<std::size_t>(j)].score ==
            doctest::Approx(scores[static_cast<std::size_t>(best[j])]).epsilon(1e-12));
    }
  }
}

TEST_CASE("MSE properties: symmetry, non-negativity, identity") {
  const auto a = random_set(5, 4, "a");
  for (const auto& x : a)
    for (const auto& y : a) {
      CHECK(pixel_mse(x, y) == pixel_mse(y, x));
      CHECK(pixel_mse(x, y) >= 0.0);
      CHECK((pixel_mse(x, y) == 0.0) == (x.pixels() == y.pixels()));
    }
}

TEST_CASE("ties are broken by real id") {
  const CtSlice base = CtSlice::zeros("s");
  std::vector<CtSlice> reals{CtSlice(PixelGrid::Constant(128, 128, 5.0f), "zeta"),
                             CtSlice(PixelGrid::Constant(128, 128, -5.0f), "alpha"),
                             CtSlice(PixelGrid::Constant(128, 128, 5.0f), "mid")};
  const auto recs = nearest_by_mse(std::vector<CtSlice>{base}, reals, 3);
  CHECK(recs[0].neighbors[0].real_id == "alpha");
  CHECK(recs[0].neighbors[1].real_id == "mid");
  CHECK(recs[0].neighbors[2].real_id == "zeta");
}

TEST_CASE("cosine similarity: identity, orthogonality, scaling, oracle ranking") {
  Eigen::MatrixXd s(2, 3), r(3, 3);
  s << 1, 0, 0, 0, 2, 2;
  r << 3, 0, 0, 0, 1, 0, 0, 5, 5;
  const std::vector<std::string> sid{"s0", "s1"}, rid{"r0", "r1", "r2"};
  const auto recs = nearest_by_cosine(FeatureMatrix{s, "s"}, sid, FeatureMatrix{r, "r"}, rid, 3);
  CHECK(recs[0].neighbors[0].real_id == "r0");
  CHECK(recs[0].neighbors[0].score == doctest::Approx(1.0));
  CHECK(recs[1].neighbors[0].real_id == "r2");
  CHECK(recs[1].neighbors[0].score == doctest::Approx(1.0));
  CHECK(recs[0].neighbors[2].score == doctest::Approx(0.0));
  CHECK(recs[0].neighbors[0].method == MatchMethod::cosine);

  const Eigen::MatrixXd a = gaussian_features(30, 8, 1), b = gaussian_features(30, 8, 2);
  std::vector<std::string> an, bn;
  for (int i = 0; i < 30; ++i) {
    an.push_back("a" + std::to_string(i));
    bn.push_back("b" + std::to_string(100 + i));
  }
  const auto got = nearest_by_cosine(FeatureMatrix{a, "a"}, an, FeatureMatrix{b, "b"}, bn, 30);
  for (int i = 0; i < 30; ++i) {
    std::vector<double> scores;
    for (int j = 0; j < 30; ++j) {
      std::vector<double> x, y;
      for (int k = 0; k < 8; ++k) {
        x.push_back(a(i, k));
        y.push_back(b(j, k));
      }
      scores.push_back(oracle::cosine(x, y));
    }
    const auto best = oracle::best_k(scores, bn, 30, false);
    for (int j = 0; j < 30; ++j) {
      CHECK(got[static_cast<std::size_t>(i)].neighbors[static_cast<std::size_t>(j)].real_id ==
            bn[static_cast<std::size_t>(best[j])]);
      const double sc = got[static_cast<std::size_t>(i)].neighbors[static_cast<std::size_t>(j)].score;
      CHECK(sc >= -1.0);
      CHECK(sc <= 1.0);
    }
  }
  const Eigen::RowVectorXd v = a.row(0), w = b.row(0);
  CHECK(cosine_similarity(v * 7.0, w) == doctest::Approx(cosine_similarity(v, w)).epsilon(1e-12));
  CHECK(cosine_similarity(v, w * 0.01) == doctest::Approx(cosine_similarity(v, w)).epsilon(1e-12));
}

TEST_CASE("cosine rejects zero-norm rows and mismatched shapes") {
  Eigen::MatrixXd s = Eigen::MatrixXd::Ones(2, 3), r = Eigen::MatrixXd::Ones(2, 3);
  r.row(1).setZero();
  const std::vector<std::string> ids{"x", "y"};
  CHECK_THROWS_AS(nearest_by_cosine(FeatureMatrix{s, ""}, ids, FeatureMatrix{r, ""}, ids, 1), InvalidArgument);
  CHECK_THROWS_AS(nearest_by_cosine(FeatureMatrix{s, ""}, ids, FeatureMatrix{Eigen::MatrixXd::Ones(2, 4), ""}, ids, 1),
                  DimensionError);
}

TEST_CASE("self-audit gives MSE 0 and cosine 1 self matches") {
  const auto set = real_proxy_set(12, 9);
  const auto ids = ids_of(set);
  const auto feats = random_projection_features(set, 32, 5);
  const auto mse = nearest_by_mse(set, set, 1);
  const auto cos = nearest_by_cosine(FeatureMatrix{feats, ""}, ids, FeatureMatrix{feats, ""}, ids, 1);
  for (std::size_t i = 0; i < set.size(); ++i) {
    CHECK(mse[i].neighbors[0].real_id == ids[i]);
    CHECK(mse[i].neighbors[0].score == 0.0);
    CHECK(cos[i].neighbors[0].real_id == ids[i]);
    CHECK(cos[i].neighbors[0].score == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("audit report verdicts") {
  const auto reals = real_proxy_set(20, 3);
  const auto fresh = real_proxy_set(10, 4);
  std::vector<CtSlice> clean;
  for (std::size_t i = 0; i < fresh.size(); ++i)
    clean.push_back(fresh[i].relabeled("g" + std::to_string(i), Provenance::synthetic));
  auto rep = audit_report(nearest_by_mse(clean, reals, 2), {}, 50.0);
  CHECK(rep.verdict() == "clean");
  CHECK_FALSE(rep.memorization_suspected);

  auto planted = clean;
  planted[3] = reals[8].relabeled("g3", Provenance::synthetic);
  rep = audit_report(nearest_by_mse(planted, reals, 2), {}, 50.0);
  CHECK(rep.verdict() == "memorization suspected");
  REQUIRE(rep.exact_duplicates.size() == 1);
  CHECK(rep.exact_duplicates[0] == "g3");

  Rng rng = make_rng(1, 2);
  PixelGrid noisy = reals[5].pixels();
  for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy.data()[i] += static_cast<float>(gaussian(rng, 0, 20));
  auto near = clean;
  near[0] = CtSlice(noisy, "g0", Provenance::synthetic);
  rep = audit_report(nearest_by_mse(near, reals, 2), {}, 600.0);
  CHECK(rep.near_duplicates == std::vector<std::string>{"g0"});
  CHECK(rep.exact_duplicates.empty());
  CHECK(rep.mse[0].neighbors[0].score == doctest::Approx(400.0).epsilon(0.15));
  const auto j = to_json(rep);
  CHECK(j["verdict"] == "memorization suspected");
  CHECK(j["mse"][0]["near_duplicate"] == true);
  CHECK(j["mse"][0]["neighbors"][0]["method"] == "mse");
}

TEST_CASE("audit report rejects mismatched record sets") {
  const auto reals = real_proxy_set(5, 1);
  const auto a = nearest_by_mse(reals, reals, 1);
  auto b = a;
  b[2].synthetic_id = "other";
  CHECK_THROWS_AS(audit_report(a, b, 10.0), InvalidArgument);
  b.pop_back();
  CHECK_THROWS_AS(audit_report(a, b, 10.0), InvalidArgument);
  CHECK_THROWS_AS(nearest_by_mse(std::vector<CtSlice>{}, reals, 1), EmptyDatasetError);
}

TEST_CASE("random-projection features are deterministic and scale-aware") {
  const auto set = real_proxy_set(6, 2);
  const auto f1 = random_projection_features(set, 16, 3);
  const auto f2 = random_projection_features(set, 16, 3);
  CHECK(f1 == f2);
  CHECK(f1.rows() == 6);
  CHECK(f1.cols() == 16);
  CHECK(random_projection_features(set, 16, 4) != f1);
  CHECK(unrolled_pixels(set).cols() == 16384);
}
