// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracle/oracle.hpp"
#include "skullkit/artisynth.hpp"
#include "skullkit/features.hpp"
#include "skullkit/fid.hpp"
#include "skullkit/fixtures.hpp"
#include "skullkit/io.hpp"
#include "skullkit/memaudit.hpp"
#include "skullkit/radiometrics.hpp"
#include "skullkit/rng.hpp"
#include "skullkit/tsne.hpp"
#include "skullkit/vtt.hpp"

using namespace skullkit;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool ok = true;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (!o.ok) ++failures;
  std::printf("%s %s: %s [%.2fs]\n", o.ok ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

oracle::Image image_of(const CtSlice& s) {
  return oracle::to_image(s.pixels().data(), static_cast<int>(s.pixels().rows()),
                          static_cast<int>(s.pixels().cols()));
}

double rel_err(double a, double b) {
  if (a == b) return 0.0;
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

// Shared state for the separability and calibration criteria.
struct Populations {
  std::vector<CtSlice> real, idealized, unrealistic;
};

Populations make_populations(std::uint64_t seed) {
  Populations p;
  p.real = real_proxy_set(300, seed);
  TargetSpec spec;
  spec.target = summarize(p.real);
  p.idealized = fit_to_targets(spec, ArtificialFamily::idealized, 150, seed + 1).slices;
  p.unrealistic = fit_to_targets(spec, ArtificialFamily::unrealistic, 150, seed + 2).slices;
  return p;
}

std::vector<CtSlice> all_of(const Populations& p) {
  std::vector<CtSlice> v = p.real;
  v.insert(v.end(), p.idealized.begin(), p.idealized.end());
  v.insert(v.end(), p.unrealistic.begin(), p.unrealistic.end());
  return v;
}

DataMatrix metric_matrix(const std::vector<CtSlice>& slices) {
  const auto d = summarize(slices);
  DataMatrix m;
  m.rows.resize(static_cast<Eigen::Index>(d.size()), 3);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    m.rows(r, 0) = d.sdr[i];
    m.rows(r, 1) = d.thickness_mm[i];
    m.rows(r, 2) = d.intensity_hu[i];
  }
  m.ids = d.ids;
  for (const auto& s : slices) m.labels.push_back(s.provenance() == Provenance::real ? "real" : "artificial");
  return standardized(std::move(m));
}

DataMatrix pixel_matrix(const std::vector<CtSlice>& slices) {
  DataMatrix m;
  m.rows = unrolled_pixels(slices);
  for (const auto& s : slices) {
    m.ids.push_back(s.id());
    m.labels.push_back(s.provenance() == Provenance::real ? "real" : "artificial");
  }
  return m;
}

TsneConfig tsne_config(std::uint64_t seed) {
  TsneConfig c;
  c.seed = seed;
  return c;
}

std::vector<Eigen::Index> indices_where(const std::vector<CtSlice>& v, auto pred) {
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (pred(v[i])) out.push_back(static_cast<Eigen::Index>(i));
  return out;
}

Quiz sheet_quiz(std::uint64_t seed) {
  std::vector<ManifestRecord> reals, synths;
  for (int i = 0; i < 40; ++i) {
    reals.push_back({"r" + std::to_string(i), "/r/" + std::to_string(i) + ".npy", Provenance::real});
    synths.push_back({"s" + std::to_string(i), "/s/" + std::to_string(i) + ".npy", Provenance::synthetic});
  }
  QuizSpec spec;
  spec.seed = seed;
  return build_quiz(reals, synths, spec);
}

std::string npy_bytes(const Eigen::MatrixXd& m) {
  const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f = m.cast<float>();
  return encode_npy_f32(f.data(), {static_cast<std::size_t>(f.rows()), static_cast<std::size_t>(f.cols())});
}

}  // namespace

int main() {
  report("metric oracle equivalence", [] {
    const auto t0 = Clock::now();
    double worst = 0;
    int ray_mismatch = 0;
    for (int i = 0; i < 200; ++i) {
      const auto s = random_fixture_slice(2024, i);
      const auto m = measure(s);
      const auto o = oracle::radiometrics(image_of(s));
      worst = std::max({worst, rel_err(m.sdr, o.sdr), rel_err(m.thickness_mm, o.thickness_mm),
                        rel_err(m.intensity_hu, o.intensity_hu)});
      ray_mismatch += m.rays_used != o.rays;
    }
    const double t = seconds_since(t0);
    return Outcome{worst <= 1e-9 && ray_mismatch == 0 && t < 5.0,
                   fmt("200 slices, max rel err %.3g (tol 1e-9), ray mismatches %d, runtime %.2fs (< 5s)", worst,
                       ray_mismatch, t)};
  });

  report("metric-fooling fit", [] {
    const auto t0 = Clock::now();
    TargetSpec spec;
    spec.target = summarize(real_proxy_set(300, 7));
    std::string detail;
    bool ok = true;
    for (auto fam : {ArtificialFamily::idealized, ArtificialFamily::unrealistic}) {
      const auto fit = fit_to_targets(spec, fam, 500, 42);
      const auto again = ks_per_metric(summarize(fit.slices), spec.target);
      ok = ok && fit.slices.size() == 500 && again.worst() <= 0.1;
      detail += fmt("%s KS sdr %.4f thick %.4f mi %.4f; ", std::string(to_string(fam)).c_str(), again.sdr,
                    again.thickness, again.intensity);
    }
    const double t = seconds_since(t0);
    ok = ok && t < 120.0;
    return Outcome{ok, detail + fmt("tol 0.1, 500 slices each, runtime %.2fs (< 120s)", t)};
  });

  const auto t_sep = Clock::now();
  const Populations pops = make_populations(7);
  const auto everything = all_of(pops);
  const double t_pop = seconds_since(t_sep);
  Embedding metric_emb, pixel_emb;

  report("separability: metric triples inseparable", [&] {
    const auto t0 = Clock::now();
    metric_emb = run_tsne(metric_matrix(everything), tsne_config(1));
    const double purity = knn_purity(metric_emb, 5);
    return Outcome{purity <= 0.65, fmt("N=%zu, 5-NN purity real vs artificial %.4f (<= 0.65), runtime %.2fs",
                                       everything.size(), purity, seconds_since(t0))};
  });

  report("separability: pixels separate artificial slices", [&] {
    const auto t0 = Clock::now();
    pixel_emb = run_tsne(pixel_matrix(everything), tsne_config(1));
    const auto art = indices_where(everything, [](const CtSlice& s) { return s.provenance() != Provenance::real; });
    const double purity =
        knn_purity(pixel_emb.points, pixel_emb.labels, 5, std::span<const Eigen::Index>(art));
    const double real_purity = knn_purity(
        pixel_emb.points, pixel_emb.labels, 5,
        std::span<const Eigen::Index>(indices_where(everything, [](const CtSlice& s) {
          return s.provenance() == Provenance::real;
        })));
    return Outcome{purity >= 0.95, fmt("artificial-cluster 5-NN purity %.4f (>= 0.95), real %.4f, runtime %.2fs",
                                       purity, real_purity, seconds_since(t0))};
  });

  report("separability: idealized vs unrealistic", [&] {
    const auto art = indices_where(everything, [](const CtSlice& s) { return s.provenance() != Provenance::real; });
    Eigen::MatrixXd pts(static_cast<Eigen::Index>(art.size()), pixel_emb.points.cols());
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < art.size(); ++i) {
      pts.row(static_cast<Eigen::Index>(i)) = pixel_emb.points.row(art[i]);
      labels.push_back(std::string(to_string(everything[static_cast<std::size_t>(art[i])].provenance())));
    }
    const double purity = knn_purity(pts, labels, 5);
    const double total = seconds_since(t_sep);
    return Outcome{purity >= 0.95 && total < 600.0,
                   fmt("5-NN family purity %.4f (>= 0.95); populations %.2fs, whole separability run %.2fs (< 600s)",
                       purity, t_pop, total)};
  });

  report("t-SNE calibration", [&] {
    double worst_row = 0;
    std::string kl;
    bool kl_ok = true;
    const std::vector<std::pair<std::string, DataMatrix>> sets = {
        {"metrics", metric_matrix(everything)},
        {"pixels", pixel_matrix(everything)},
        {"gaussian", DataMatrix{gaussian_features(200, 10, 3), std::vector<std::string>(200, "g"),
                                std::vector<std::string>(200, "i")}}};
    for (const auto& [name, data] : sets) {
      for (double perp : {5.0, 30.0}) {
        const auto aff = pairwise_affinities(data.rows, perp);
        for (Eigen::Index i = 0; i < aff.conditional.rows(); ++i) {
          std::vector<double> row(static_cast<std::size_t>(aff.conditional.cols()));
          for (Eigen::Index j = 0; j < aff.conditional.cols(); ++j) row[static_cast<std::size_t>(j)] = aff.conditional(i, j);
          worst_row = std::max(worst_row, std::abs(oracle::perplexity_of(row) - perp));
        }
      }
    }
    auto check_kl = [&](const std::string& name, const Embedding& e) {
      kl_ok = kl_ok && e.final_kl < e.initial_kl;
      kl += fmt("%s %.3f -> %.3f; ", name.c_str(), e.initial_kl, e.final_kl);
    };
    check_kl("metrics", metric_emb);
    check_kl("pixels", pixel_emb);
    check_kl("gaussian", run_tsne(std::get<1>(sets[2]), tsne_config(2)));
    return Outcome{worst_row <= 1e-3 && kl_ok,
                   fmt("max |perplexity - target| %.3g (<= 1e-3); KL ", worst_row) + kl};
  });

  report("FID properties", [] {
    const auto t0 = Clock::now();
    const Eigen::MatrixXd a = gaussian_features(500, 16, 11), b = gaussian_features(500, 16, 12, 0.3);
    const auto sa = feature_stats(a), sb = feature_stats(b);
    const double self = fid(sa, sa).fid;
    Eigen::RowVectorXd d(16);
    for (int k = 0; k < 16; ++k) d(k) = 0.1 * (k + 1) - 0.7;
    const Eigen::MatrixXd shifted = a.rowwise() + d;
    const double shift = fid(sa, feature_stats(shifted)).fid;
    const double shift_err = std::abs(shift - d.squaredNorm());
    const double asym = std::abs(fid(sa, sb).fid - fid(sb, sa).fid);
    Eigen::RowVectorXd c = Eigen::RowVectorXd::Constant(16, 250.0);
    const double trans =
        std::abs(fid(feature_stats(Eigen::MatrixXd(a.rowwise() + c)), feature_stats(Eigen::MatrixXd(b.rowwise() + c))).fid -
                 fid(sa, sb).fid);
    const double t = seconds_since(t0);
    const bool ok = std::abs(self) <= 1e-6 && shift_err <= 1e-8 && asym <= 1e-6 && trans <= 1e-6 && t < 5.0;
    return Outcome{ok, fmt("fid(A,A) %.3g (1e-6); mean shift err %.3g (1e-8); asymmetry %.3g (1e-6); "
                           "translation %.3g (1e-6); K=16 N=500; runtime %.2fs (< 5s)",
                           self, shift_err, asym, trans, t)};
  });

  report("memorization audit", [] {
    const auto t0 = Clock::now();
    const auto reals = real_proxy_set(100, 31);
    std::vector<CtSlice> synth;
    const auto fresh = real_proxy_set(100, 32);
    for (std::size_t i = 0; i < fresh.size(); ++i)
      synth.push_back(fresh[i].relabeled("gen" + std::to_string(i), Provenance::synthetic));
    const double threshold = 2 * 20.0 * 20.0;
    const auto clean = audit_report(nearest_by_mse(synth, reals, 3), {}, threshold);

    synth[17] = reals[42].relabeled("gen17", Provenance::synthetic);
    Rng rng = make_rng(5, 0);
    PixelGrid noisy = reals[63].pixels();
    for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy.data()[i] += static_cast<float>(gaussian(rng, 0.0, 20.0));
    synth[58] = CtSlice(noisy, "gen58", Provenance::synthetic);
    const auto planted = audit_report(nearest_by_mse(synth, reals, 3), {}, threshold);
    const auto& exact = planted.mse[17].neighbors[0];
    const auto& near = planted.mse[58].neighbors[0];
    const bool exact_ok = exact.real_id == reals[42].id() && exact.score == 0.0;
    const bool near_ok = near.real_id == reals[63].id() && std::abs(near.score - 400.0) <= 0.15 * 400.0;
    const double t = seconds_since(t0);
    const bool ok = clean.verdict() == "clean" && exact_ok && near_ok &&
                    planted.verdict() == "memorization suspected" && t < 30.0;
    return Outcome{ok, fmt("clean verdict '%s'; exact duplicate rank 1 MSE %.3g; noisy duplicate rank 1 MSE %.2f "
                           "(400 +/- 15%%); 100x100; runtime %.2fs (< 30s)",
                           clean.verdict().c_str(), exact.score, near.score, t)};
  });

  report("VTT scoring", [] {
    std::mt19937_64 rng(99);
    int mismatches = 0, granularity = 0, replay = 0, accepted_out_of_order = 0;
    for (int sheet = 0; sheet < 20; ++sheet) {
      const Quiz q = sheet_quiz(static_cast<std::uint64_t>(sheet));
      QuizSession s;
      s.session_id = "s" + std::to_string(sheet);
      s.grader_id = "grader";
      s.quiz_id = q.quiz_id;
      s.total = q.size();
      std::string log = start_event_line(s, q);
      std::vector<int> truth, ans;
      std::vector<char> groups;
      for (int i = 0; i < q.size(); ++i) {
        for (int bad : {i - 1, i + 1, i + 1 + static_cast<int>(rng() % 40)}) {
          if (bad < 0) continue;
          try {
            s.check_answer(bad, 100);
            ++accepted_out_of_order;
          } catch (const SessionError&) {
          }
        }
        const int a = static_cast<int>(rng() & 1);
        Response r{i, a ? Label::synthetic : Label::real, 200 + static_cast<std::int64_t>(rng() % 9000), 0};
        s.apply_answer(r);
        log += answer_event_line(r);
        const auto& it = q.items[static_cast<std::size_t>(i)];
        truth.push_back(it.truth == Label::synthetic);
        ans.push_back(a);
        groups.push_back(it.duplicate_group.value_or(' '));
      }
      const auto r = score_session(q, s);
      const auto o = oracle::vtt_counts(truth, ans, groups);
      const double tpr = static_cast<double>(o.tp) / (o.tp + o.fn), fpr = static_cast<double>(o.fp) / (o.fp + o.tn);
      const double acc = 100.0 * (o.tp + o.tn) / static_cast<double>(o.tp + o.tn + o.fp + o.fn);
      const double sw = 100.0 * o.switched / o.groups;
      mismatches += r.tp != o.tp || r.fp != o.fp || r.tn != o.tn || r.fn != o.fn ||
                    r.switched_groups != o.switched || std::abs(r.tpr - tpr) > 1e-12 ||
                    std::abs(r.fpr - fpr) > 1e-12 || std::abs(r.accuracy_percent - acc) > 1e-12 ||
                    std::abs(r.switch_rate_percent - sw) > 1e-12;
      const double k = r.switch_rate_percent * 6.0 / 100.0;
      granularity += r.duplicate_groups != 6 || std::abs(k - std::round(k)) > 1e-12;
      const auto back = replay_log(log);
      replay += !(score_session(back.quiz, back.session) == r);
    }
    return Outcome{mismatches == 0 && granularity == 0 && replay == 0 && accepted_out_of_order == 0,
                   fmt("20 sheets: oracle mismatches %d, non-k/6 switch rates %d, replay differences %d, "
                       "out-of-order accepted %d",
                       mismatches, granularity, replay, accepted_out_of_order)};
  });

  report("determinism", [&] {
    std::vector<std::string> differing;
    auto same = [&](const std::string& name, const std::string& a, const std::string& b) {
      if (a != b) differing.push_back(name);
    };
    auto slices_bytes = [](const std::vector<CtSlice>& v) {
      std::string out;
      for (const auto& s : v) out += s.id() + encode_npy_f32(s.pixels().data(), {128, 128});
      return out;
    };
    same("real proxies", slices_bytes(real_proxy_set(50, 7)), slices_bytes(std::vector<CtSlice>(pops.real.begin(), pops.real.begin() + 50)));
    const Populations again = make_populations(7);
    same("idealized fit", slices_bytes(again.idealized), slices_bytes(pops.idealized));
    same("unrealistic fit", slices_bytes(again.unrealistic), slices_bytes(pops.unrealistic));
    same("metrics csv", metrics_csv(summarize(again.idealized)), metrics_csv(summarize(pops.idealized)));
    same("metric t-SNE", embedding_csv(run_tsne(metric_matrix(all_of(again)), tsne_config(1))),
         embedding_csv(metric_emb));
    same("features", npy_bytes(random_projection_features(again.real, 32, 4)),
         npy_bytes(random_projection_features(pops.real, 32, 4)));
    same("quiz", to_json(sheet_quiz(3)).dump(), to_json(sheet_quiz(3)).dump());
    std::string joined;
    for (const auto& d : differing) joined += d + " ";
    return Outcome{differing.empty(), differing.empty() ? "7 artifacts byte-identical across reruns"
                                                        : "differing: " + joined};
  });

  return failures;
}
