// skullkit: one binary for the whole pipeline
// (fixtures -> ingest -> metrics -> artisynth -> tsne / fid / memaudit -> vtt).

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "skullkit/artisynth.hpp"
#include "skullkit/features.hpp"
#include "skullkit/fid.hpp"
#include "skullkit/fixtures.hpp"
#include "skullkit/io.hpp"
#include "skullkit/memaudit.hpp"
#include "skullkit/parallel.hpp"
#include "skullkit/radiometrics.hpp"
#include "skullkit/tsne.hpp"
#include "skullkit/vtt.hpp"
#include "skullkit/vtt_service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace skullkit;

namespace {

constexpr const char* kVersion = "1.0.0";

enum class LogLevel { quiet, info, debug };

struct Globals {
  int threads = 0;
  std::string log_level = "info";
  std::vector<std::string> argv;
} g;

LogLevel log_level() {
  if (g.log_level == "quiet") return LogLevel::quiet;
  if (g.log_level == "debug") return LogLevel::debug;
  return LogLevel::info;
}

template <typename... Args>
void info(const char* fmt, Args... args) {
  if (log_level() == LogLevel::quiet) return;
  std::fprintf(stderr, "[skullkit] ");
  if constexpr (sizeof...(Args) == 0)
    std::fputs(fmt, stderr);
  else
    std::fprintf(stderr, fmt, args...);
  std::fputc('\n', stderr);
}

// Relative output paths live under $SKULLKIT_OUT_DIR when it is set.
fs::path out_path(const std::string& p) {
  fs::path path(p);
  if (path.is_relative())
    if (const char* base = std::getenv("SKULLKIT_OUT_DIR"); base && *base) path = fs::path(base) / path;
  return path;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Provenance sidecar next to every artifact. Timestamps live only here, so
// the artifacts themselves are byte-identical across reruns.
void write_sidecar(const fs::path& artifact, const std::string& subcommand, const json& config,
                   std::optional<std::uint64_t> seed, const json& extra = json::object()) {
  json meta = {{"tool", "skullkit"},
               {"version", kVersion},
               {"subcommand", subcommand},
               {"artifact", artifact.filename().string()},
               {"config", config},
               {"seed", seed ? json(*seed) : json(nullptr)},
               {"argv", g.argv},
               {"created_utc", utc_now()}};
  for (const auto& [k, v] : extra.items()) meta[k] = v;
  write_file(artifact.string() + ".meta.json", meta.dump(2) + "\n");
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::vector<CtSlice> load_slices(const std::string& in, Provenance fallback = Provenance::real) {
  auto slices = load_dataset(resolve_dataset(in, fallback));
  if (slices.empty()) throw EmptyDatasetError("no slices found in '" + in + "'");
  return slices;
}

// --- subcommands -------------------------------------------------------------

struct FixturesOpts {
  std::string out = "fixtures";
  std::uint64_t seed = 7;
  int n_real = 300;
};

void run_fixtures(const FixturesOpts& o) {
  const fs::path dir = out_path(o.out);
  const auto files = write_fixture_corpus(dir, o.seed, o.n_real);
  const json config = {{"out", o.out}, {"n_real", o.n_real}};
  for (const auto& f : files) write_sidecar(f, "fixtures", config, o.seed);
  info("wrote %zu fixture artifacts under %s", files.size(), dir.c_str());
}

struct IngestOpts {
  std::string volume;
  std::string out;
  int step = 5;
  double floor_hu = kBackgroundFloorHu;
  double spacing_mm = 0.625;
  double mm_per_px = 0.45;
  bool mask = true;
};

void run_ingest(const IngestOpts& o) {
  const Volume vol = load_volume(o.volume, o.spacing_mm, o.mm_per_px);
  auto slices = select_slices(vol, o.step);
  if (o.mask)
    for (auto& s : slices) s = apply_mask(s, threshold_mask(s, o.floor_hu));
  const fs::path dir = out_path(o.out);
  write_dataset(slices, dir);
  write_sidecar(dir / "manifest.json", "ingest",
                {{"volume", o.volume},
                 {"step", o.step},
                 {"floor_hu", o.floor_hu},
                 {"mask", o.mask},
                 {"slice_spacing_mm", o.spacing_mm},
                 {"selection_interval_mm", selection_interval_mm(vol, o.step)}},
                std::nullopt);
  info("selected %zu of %zu slices (every %.3f mm)", slices.size(), vol.slices.size(),
       selection_interval_mm(vol, o.step));
}

struct MetricsOpts {
  std::string in;
  std::string out;
  std::string dist;
  double floor_hu = kBackgroundFloorHu;
};

void run_metrics(const MetricsOpts& o) {
  const auto slices = load_slices(o.in);
  const auto d = summarize(slices, {}, o.floor_hu);
  const json config = {{"in", o.in}, {"floor_hu", o.floor_hu}};
  auto emit = [&](const std::string& target) {
    const fs::path p = out_path(target);
    ensure_parent(p);
    if (p.extension() == ".json")
      write_file(p, to_json(d).dump(2) + "\n");
    else
      write_file(p, metrics_csv(d));
    write_sidecar(p, "metrics", config, std::nullopt);
  };
  if (o.out.empty() && o.dist.empty()) {
    std::cout << metrics_csv(d);
  } else {
    if (!o.out.empty()) emit(o.out);
    if (!o.dist.empty()) emit(o.dist);
  }
  info("measured %zu slices (%zu without bone skipped)", d.size(), d.skipped_no_bone);
}

struct ArtisynthOpts {
  std::string family = "idealized";
  std::string target;
  int n = 500;
  std::uint64_t seed = 0;
  std::string out;
  double tolerance = 0.1;
  int max_attempts = 8;
};

void run_artisynth(const ArtisynthOpts& o) {
  TargetSpec spec;
  const std::string text = read_file(o.target);
  spec.target = fs::path(o.target).extension() == ".csv" ? parse_metrics_csv(text)
                                                          : distribution_from_json(json::parse(text));
  spec.tolerance_ks = o.tolerance;
  spec.max_attempts = o.max_attempts;
  const auto family = family_from_string(o.family);
  const auto fit = fit_to_targets(spec, family, o.n, o.seed);
  const fs::path dir = out_path(o.out);
  write_dataset(fit.slices, dir);
  const json report = {{"family", std::string(to_string(family))},
                       {"n", o.n},
                       {"attempts", fit.attempts},
                       {"ks", {{"sdr", fit.ks.sdr}, {"thickness_mm", fit.ks.thickness}, {"intensity_hu", fit.ks.intensity}}},
                       {"achieved", to_json(fit.achieved)}};
  write_file(dir / "fit_report.json", report.dump(2) + "\n");
  const json config = {{"family", o.family},
                       {"target", o.target},
                       {"n", o.n},
                       {"tolerance_ks", o.tolerance},
                       {"max_attempts", o.max_attempts}};
  write_sidecar(dir / "manifest.json", "artisynth", config, o.seed);
  write_sidecar(dir / "fit_report.json", "artisynth", config, o.seed);
  info("generated %d %s slices, KS sdr=%.4f thickness=%.4f intensity=%.4f after %d attempt(s)", o.n,
       o.family.c_str(), fit.ks.sdr, fit.ks.thickness, fit.ks.intensity, fit.attempts);
}

struct TsneOpts {
  std::vector<std::string> in;
  std::string out;
  TsneConfig cfg;
  bool standardize = true;
};

void run_tsne_cmd(const TsneOpts& o) {
  DataMatrix data;
  std::vector<Eigen::MatrixXd> blocks;
  bool any_csv = false, any_pixels = false;
  for (const auto& in : o.in) {
    if (fs::path(in).extension() == ".csv") {
      any_csv = true;
      const auto d = parse_metrics_csv(read_file(in));
      Eigen::MatrixXd m(static_cast<Eigen::Index>(d.size()), 3);
      for (std::size_t i = 0; i < d.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        m(r, 0) = d.sdr[i];
        m(r, 1) = d.thickness_mm[i];
        m(r, 2) = d.intensity_hu[i];
        data.ids.push_back(d.ids[i]);
        data.labels.push_back(fs::path(in).stem().string());
      }
      blocks.push_back(std::move(m));
    } else {
      any_pixels = true;
      const auto slices = load_slices(in);
      blocks.push_back(unrolled_pixels(slices));
      for (const auto& s : slices) {
        data.ids.push_back(s.id());
        data.labels.push_back(std::string(to_string(s.provenance())));
      }
    }
  }
  if (any_csv && any_pixels) throw InvalidArgument("tsne: mix of metric CSVs and slice datasets");
  Eigen::Index rows = 0;
  for (const auto& b : blocks) rows += b.rows();
  data.rows.resize(rows, blocks.front().cols());
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    data.rows.middleRows(at, b.rows()) = b;
    at += b.rows();
  }
  if (any_csv && o.standardize) data = standardized(std::move(data));
  const auto emb = run_tsne(data, o.cfg);
  const fs::path p = out_path(o.out);
  ensure_parent(p);
  write_file(p, embedding_csv(emb));
  write_sidecar(p, "tsne",
                {{"in", o.in},
                 {"input_kind", any_csv ? "metrics" : "pixels"},
                 {"standardize", any_csv && o.standardize},
                 {"perplexity", o.cfg.perplexity},
                 {"iterations", o.cfg.iterations},
                 {"learning_rate", o.cfg.learning_rate},
                 {"early_exaggeration", o.cfg.early_exaggeration}},
                o.cfg.seed,
                {{"initial_kl", emb.initial_kl}, {"final_kl", emb.final_kl}, {"knn5_purity", knn_purity(emb, 5)}});
  info("embedded %lld points, KL %.4f -> %.4f, 5-NN purity %.3f", static_cast<long long>(data.size()),
       emb.initial_kl, emb.final_kl, knn_purity(emb, 5));
}

struct FidOpts {
  std::string real;
  std::string synthetic;
  std::string mode = "standard";
  std::string out;
};

void run_fid(const FidOpts& o) {
  const auto mode = fid_mode_from_string(o.mode);
  const auto r = fid(feature_stats(load_features(o.real)), feature_stats(load_features(o.synthetic)), mode);
  const json j = {{"fid", r.fid}, {"mean_term", r.mean_term}, {"trace_term", r.trace_term}, {"mode", std::string(to_string(mode))}};
  if (o.out.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    const fs::path p = out_path(o.out);
    ensure_parent(p);
    write_file(p, j.dump(2) + "\n");
    write_sidecar(p, "fid", {{"real", o.real}, {"synthetic", o.synthetic}, {"mode", o.mode}}, std::nullopt);
  }
}

struct MemauditOpts {
  std::string synth;
  std::string real;
  std::string features_synth;
  std::string features_real;
  int k = 3;
  std::optional<double> mse_threshold;
  std::string out;
};

void run_memaudit(const MemauditOpts& o) {
  const auto synth = load_slices(o.synth, Provenance::synthetic);
  const auto reals = load_slices(o.real);
  auto by_mse = nearest_by_mse(synth, reals, o.k);
  std::vector<MatchRecord> by_cos;
  if (!o.features_synth.empty() || !o.features_real.empty()) {
    if (o.features_synth.empty() || o.features_real.empty())
      throw InvalidArgument("memaudit: pass both --features-synth and --features-real");
    std::vector<std::string> sid, rid;
    for (const auto& s : synth) sid.push_back(s.id());
    for (const auto& s : reals) rid.push_back(s.id());
    by_cos = nearest_by_cosine(load_features(o.features_synth), sid, load_features(o.features_real), rid, o.k);
  }
  // Without a threshold only exact duplicates can be flagged.
  const auto rep = audit_report(std::move(by_mse), std::move(by_cos), o.mse_threshold.value_or(0.0));
  json j = to_json(rep);
  if (!o.mse_threshold) j["mse_near_threshold"] = nullptr;
  const fs::path p = out_path(o.out);
  ensure_parent(p);
  write_file(p, j.dump(2) + "\n");
  write_sidecar(p, "memaudit",
                {{"synth", o.synth},
                 {"real", o.real},
                 {"features_synth", o.features_synth},
                 {"features_real", o.features_real},
                 {"k", o.k},
                 {"mse_near_threshold", o.mse_threshold ? json(*o.mse_threshold) : json(nullptr)}},
                std::nullopt);
  info("%s (%zu exact, %zu near duplicates)", rep.verdict().c_str(), rep.exact_duplicates.size(),
       rep.near_duplicates.size());
}

struct FeaturizeOpts {
  std::string in;
  std::string out;
  int dim = 64;
  std::uint64_t seed = 0;
  double lo = 0, hi = 3000;
};

void run_featurize(const FeaturizeOpts& o) {
  const auto slices = load_slices(o.in);
  const fs::path p = out_path(o.out);
  ensure_parent(p);
  write_matrix_npy(random_projection_features(slices, o.dim, o.seed, IntensityWindow(o.lo, o.hi)), p);
  write_sidecar(p, "featurize", {{"in", o.in}, {"dim", o.dim}, {"window", {o.lo, o.hi}}}, o.seed);
}

struct VttServeOpts {
  std::string host = "127.0.0.1";
  std::optional<int> port;
  std::string data_dir = "vtt_data";
  std::string reals;
  std::string synths;
  std::uint64_t seed = 0;
};

void run_vtt_serve(const VttServeOpts& o) {
  int port = 8080;
  if (o.port) {
    port = *o.port;
  } else if (const char* env = std::getenv("SKULLKIT_PORT"); env && *env) {
    port = std::stoi(env);
  }
  VttStore store(out_path(o.data_dir));
  if (!o.reals.empty() || !o.synths.empty()) {
    if (o.reals.empty() || o.synths.empty()) throw InvalidArgument("vtt serve: pass both --reals and --synths");
    QuizSpec spec;
    spec.seed = o.seed;
    const auto q = store.add_quiz(build_quiz(resolve_dataset(o.reals, Provenance::real),
                                             resolve_dataset(o.synths, Provenance::synthetic), spec));
    std::cout << json{{"quiz_id", q->quiz_id}, {"items", q->size()}}.dump() << std::endl;
  }
  VttService service(store);
  info("serving visual Turing test on http://%s:%d", o.host.c_str(), port);
  service.serve(o.host, port);
}

struct VttReportOpts {
  std::vector<std::string> logs;
  std::string out;
};

void run_vtt_report(const VttReportOpts& o) {
  std::vector<GraderReport> rows;
  for (const auto& log : o.logs) {
    const auto rep = replay_log_file(log);
    rows.push_back({rep.session.grader_id, score_session(rep.quiz, rep.session)});
  }
  const std::string csv = report_csv(rows);
  if (o.out.empty()) {
    std::cout << csv;
  } else {
    const fs::path p = out_path(o.out);
    ensure_parent(p);
    write_file(p, csv);
    write_sidecar(p, "vtt report", {{"session_logs", o.logs}}, std::nullopt);
  }
}

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  g.argv.assign(argv, argv + argc);
  CLI::App app{"skullkit: skull CT slice metrics, artificial segments, t-SNE, FID, memorization audit and VTT"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.add_option("--threads", g.threads, "Worker threads (0 = all logical cores)")->check(CLI::NonNegativeNumber);
  app.add_option("--log-level", g.log_level, "quiet | info | debug")
      ->check(CLI::IsMember({"quiet", "info", "debug"}));

  std::function<void()> action;

  FixturesOpts fx;
  auto* c_fx = app.add_subcommand("fixtures", "Emit the deterministic fixture corpus");
  c_fx->add_option("--out", fx.out, "Output directory")->capture_default_str();
  c_fx->add_option("--seed", fx.seed, "Seed")->capture_default_str();
  c_fx->add_option("--n-real", fx.n_real, "Number of real-proxy slices")->check(CLI::PositiveNumber)->capture_default_str();
  c_fx->callback([&] { action = [&] { run_fixtures(fx); }; });

  IngestOpts ig;
  auto* c_ig = app.add_subcommand("ingest", "Select, center and mask slices from a (D,H,W) NPY volume");
  c_ig->add_option("--volume", ig.volume, "Volume NPY")->required();
  c_ig->add_option("--out", ig.out, "Output dataset directory")->required();
  c_ig->add_option("--step", ig.step, "Keep every step-th slice")->check(CLI::PositiveNumber)->capture_default_str();
  c_ig->add_option("--floor", ig.floor_hu, "Bone threshold in HU")->capture_default_str();
  c_ig->add_option("--slice-spacing", ig.spacing_mm, "Slice spacing in mm")->capture_default_str();
  c_ig->add_option("--resolution", ig.mm_per_px, "In-plane mm per pixel")->capture_default_str();
  c_ig->add_flag("!--no-mask", ig.mask, "Keep sub-threshold pixels");
  c_ig->callback([&] { action = [&] { run_ingest(ig); }; });

  MetricsOpts mt;
  auto* c_mt = app.add_subcommand("metrics", "Per-slice SDR, mean thickness and mean intensity");
  c_mt->add_option("--in", mt.in, "Manifest, dataset directory or directory of slices")->required();
  c_mt->add_option("--out", mt.out, "CSV (or .json distribution); stdout if omitted");
  c_mt->add_option("--dist", mt.dist, "Also write the distribution JSON here");
  c_mt->add_option("--floor", mt.floor_hu, "Bone threshold in HU")->capture_default_str();
  c_mt->callback([&] { action = [&] { run_metrics(mt); }; });

  ArtisynthOpts ar;
  auto* c_ar = app.add_subcommand("artisynth", "Generate artificial segments fitted to a metric distribution");
  c_ar->add_option("--family", ar.family, "idealized | blocky | wavy | scatter | unrealistic")
      ->check(CLI::IsMember({"idealized", "blocky", "wavy", "scatter", "unrealistic"}))
      ->capture_default_str();
  c_ar->add_option("--target", ar.target, "Target distribution (.json or metrics .csv)")->required();
  c_ar->add_option("--n", ar.n, "Number of slices")->check(CLI::PositiveNumber)->capture_default_str();
  c_ar->add_option("--seed", ar.seed, "Seed")->capture_default_str();
  c_ar->add_option("--out", ar.out, "Output dataset directory")->required();
  c_ar->add_option("--tolerance", ar.tolerance, "KS tolerance per metric")->capture_default_str();
  c_ar->add_option("--max-attempts", ar.max_attempts, "Resampling attempts")->check(CLI::PositiveNumber)->capture_default_str();
  c_ar->callback([&] { action = [&] { run_artisynth(ar); }; });

  TsneOpts ts;
  auto* c_ts = app.add_subcommand("tsne", "Exact t-SNE of slice pixels or metric triples");
  c_ts->add_option("--in", ts.in, "Slice datasets (label = provenance) or metrics CSVs (label = file stem)")
      ->required();
  c_ts->add_option("--out", ts.out, "Embedding CSV")->required();
  c_ts->add_option("--perplexity", ts.cfg.perplexity)->capture_default_str();
  c_ts->add_option("--iterations", ts.cfg.iterations)->check(CLI::PositiveNumber)->capture_default_str();
  c_ts->add_option("--learning-rate", ts.cfg.learning_rate)->capture_default_str();
  c_ts->add_option("--early-exaggeration", ts.cfg.early_exaggeration)->capture_default_str();
  c_ts->add_option("--seed", ts.cfg.seed)->capture_default_str();
  c_ts->add_flag("!--no-standardize", ts.standardize, "Use raw metric units instead of z-scores");
  c_ts->callback([&] { action = [&] { run_tsne_cmd(ts); }; });

  FidOpts fo;
  auto* c_fid = app.add_subcommand("fid", "Frechet distance between two feature matrices");
  c_fid->add_option("--real", fo.real, "Real features NPY (N x K)")->required();
  c_fid->add_option("--synthetic", fo.synthetic, "Synthetic features NPY (M x K)")->required();
  c_fid->add_option("--mode", fo.mode, "standard | elementwise")
      ->check(CLI::IsMember({"standard", "elementwise"}))
      ->capture_default_str();
  c_fid->add_option("--out", fo.out, "JSON output; stdout if omitted");
  c_fid->callback([&] { action = [&] { run_fid(fo); }; });

  MemauditOpts ma;
  auto* c_ma = app.add_subcommand("memaudit", "Nearest real slices for every synthetic slice");
  c_ma->add_option("--synth", ma.synth, "Synthetic dataset")->required();
  c_ma->add_option("--real", ma.real, "Real dataset")->required();
  c_ma->add_option("--features-synth", ma.features_synth, "Synthetic features NPY (row order = dataset order)");
  c_ma->add_option("--features-real", ma.features_real, "Real features NPY (row order = dataset order)");
  c_ma->add_option("--k", ma.k, "Neighbours per slice")->check(CLI::PositiveNumber)->capture_default_str();
  c_ma->add_option("--mse-threshold", ma.mse_threshold, "Near-duplicate MSE threshold (HU^2); no default");
  c_ma->add_option("--out", ma.out, "Report JSON")->required();
  c_ma->callback([&] { action = [&] { run_memaudit(ma); }; });

  FeaturizeOpts fe;
  auto* c_fe = app.add_subcommand("featurize", "Random-projection features for fid / memaudit");
  c_fe->add_option("--in", fe.in, "Slice dataset")->required();
  c_fe->add_option("--out", fe.out, "Features NPY")->required();
  c_fe->add_option("--dim", fe.dim)->check(CLI::PositiveNumber)->capture_default_str();
  c_fe->add_option("--seed", fe.seed)->capture_default_str();
  c_fe->add_option("--window-lo", fe.lo)->capture_default_str();
  c_fe->add_option("--window-hi", fe.hi)->capture_default_str();
  c_fe->callback([&] { action = [&] { run_featurize(fe); }; });

  auto* c_vtt = app.add_subcommand("vtt", "Visual Turing test service and reports");
  c_vtt->require_subcommand(1);
  VttServeOpts vs;
  auto* c_vs = c_vtt->add_subcommand("serve", "Run the HTTP quiz service");
  c_vs->add_option("--host", vs.host)->capture_default_str();
  c_vs->add_option("--port", vs.port, "Port (default $SKULLKIT_PORT or 8080)")->check(CLI::Range(1, 65535));
  c_vs->add_option("--data-dir", vs.data_dir, "Quiz and session log directory")->capture_default_str();
  c_vs->add_option("--reals", vs.reals, "Preload a quiz: real dataset");
  c_vs->add_option("--synths", vs.synths, "Preload a quiz: synthetic dataset");
  c_vs->add_option("--seed", vs.seed, "Quiz seed")->capture_default_str();
  c_vs->callback([&] { action = [&] { run_vtt_serve(vs); }; });
  VttReportOpts vr;
  auto* c_vr = c_vtt->add_subcommand("report", "Score session logs into a CSV");
  c_vr->add_option("--session-log", vr.logs, "Session log(s)")->required()->check(CLI::ExistingFile);
  c_vr->add_option("--out", vr.out, "CSV output; stdout if omitted");
  c_vr->callback([&] { action = [&] { run_vtt_report(vr); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    set_thread_count(g.threads);
    if (action) action();
    return 0;
  } catch (const Error& e) {
    print_error(e.kind(), e.what());
  } catch (const json::exception& e) {
    print_error("format", e.what());
  } catch (const fs::filesystem_error& e) {
    print_error("io", e.what());
  } catch (const std::exception& e) {
    print_error("internal", e.what());
  }
  return 1;
}
