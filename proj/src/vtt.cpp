#include "skullkit/vtt.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>

#include <fcntl.h>
#include <unistd.h>

#include "skullkit/rng.hpp"

namespace skullkit {

using nlohmann::json;

std::string_view to_string(Label l) { return l == Label::real ? "real" : "synthetic"; }

Label label_from_string(std::string_view s) {
  if (s == "real") return Label::real;
  if (s == "synthetic") return Label::synthetic;
  throw SessionError("invalid_answer", "label must be 'real' or 'synthetic', got '" + std::string(s) + "'");
}

void QuizSpec::validate() const {
  if (n_real < 1 || n_synthetic < 1) throw InvalidArgument("QuizSpec: category sizes must be >= 1");
  if (duplicate_pairs_per_category < 0 || duplicate_pairs_per_category > 3)
    throw InvalidArgument("QuizSpec: duplicate pairs per category must be in [0, 3]");
  if (2 * duplicate_pairs_per_category > n_real || 2 * duplicate_pairs_per_category > n_synthetic)
    throw InvalidArgument("QuizSpec: too many duplicate pairs for the category size");
}

int Quiz::count(Label l) const {
  return static_cast<int>(std::count_if(items.begin(), items.end(), [&](const QuizItem& it) { return it.truth == l; }));
}

json to_json(const Quiz& q) {
  json items = json::array();
  for (const auto& it : q.items) {
    json j = {{"item_id", it.item_id}, {"image_ref", it.image_ref}, {"truth", std::string(to_string(it.truth))}};
    j["duplicate_group"] = it.duplicate_group ? json(std::string(1, *it.duplicate_group)) : json(nullptr);
    items.push_back(std::move(j));
  }
  return {{"quiz_id", q.quiz_id},
          {"spec",
           {{"n_real", q.spec.n_real},
            {"n_synthetic", q.spec.n_synthetic},
            {"duplicate_pairs_per_category", q.spec.duplicate_pairs_per_category},
            {"seed", q.spec.seed}}},
          {"items", items}};
}

Quiz quiz_from_json(const json& j) {
  try {
    Quiz q;
    q.quiz_id = j.at("quiz_id").get<std::string>();
    const auto& s = j.at("spec");
    q.spec.n_real = s.at("n_real").get<int>();
    q.spec.n_synthetic = s.at("n_synthetic").get<int>();
    q.spec.duplicate_pairs_per_category = s.at("duplicate_pairs_per_category").get<int>();
    q.spec.seed = s.at("seed").get<std::uint64_t>();
    for (const auto& it : j.at("items")) {
      QuizItem item;
      item.item_id = it.at("item_id").get<std::string>();
      item.image_ref = it.at("image_ref").get<std::string>();
      item.truth = label_from_string(it.at("truth").get<std::string>());
      if (it.contains("duplicate_group") && !it["duplicate_group"].is_null()) {
        const auto g = it["duplicate_group"].get<std::string>();
        if (g.size() != 1) throw FormatError("quiz: bad duplicate group '" + g + "'");
        item.duplicate_group = g[0];
      }
      q.items.push_back(std::move(item));
    }
    if (q.size() != q.spec.total()) throw FormatError("quiz: item count does not match spec");
    return q;
  } catch (const json::exception& e) {
    throw FormatError(std::string("quiz: ") + e.what());
  }
}

namespace {

std::uint64_t fnv1a(std::uint64_t h, std::string_view s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

Quiz build_quiz(const std::vector<ManifestRecord>& reals, const std::vector<ManifestRecord>& synths,
                const QuizSpec& spec) {
  spec.validate();
  const auto need_r = static_cast<std::size_t>(spec.distinct_real());
  const auto need_s = static_cast<std::size_t>(spec.distinct_synthetic());
  if (reals.size() < need_r)
    throw EmptyDatasetError("build_quiz: need " + std::to_string(need_r) + " distinct real items, have " +
                            std::to_string(reals.size()));
  if (synths.size() < need_s)
    throw EmptyDatasetError("build_quiz: need " + std::to_string(need_s) + " distinct synthetic items, have " +
                            std::to_string(synths.size()));

  Quiz q;
  q.spec = spec;
  auto add_category = [&](const std::vector<ManifestRecord>& pool, std::size_t need, Label truth,
                          const char* groups, std::uint64_t stream) {
    Rng rng = make_rng(spec.seed, stream);
    const auto picked = sample_indices(pool.size(), need, rng);
    for (std::size_t i = 0; i < picked.size(); ++i) {
      const auto& rec = pool[picked[i]];
      QuizItem item{rec.id, rec.path.string(), truth, std::nullopt};
      if (i < static_cast<std::size_t>(spec.duplicate_pairs_per_category)) {
        item.duplicate_group = groups[i];
        q.items.push_back(item);
      }
      q.items.push_back(std::move(item));
    }
  };
  add_category(reals, need_r, Label::real, "uvw", 1);
  add_category(synths, need_s, Label::synthetic, "xyz", 2);

  Rng order = make_rng(spec.seed, 3);
  for (std::size_t i = q.items.size() - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(q.items[i], q.items[pick(order)]);
  }

  std::uint64_t h = fnv1a(0xcbf29ce484222325ULL, std::to_string(spec.seed));
  for (const auto& it : q.items) h = fnv1a(fnv1a(h, it.item_id), it.image_ref);
  char id[32];
  std::snprintf(id, sizeof id, "quiz-%016llx", static_cast<unsigned long long>(h));
  q.quiz_id = id;
  return q;
}

void QuizSession::check_answer(int item_index, std::int64_t elapsed_ms) const {
  if (item_index < cursor)
    throw SessionError("revision_attempt", "item " + std::to_string(item_index) + " was already answered");
  if (finished()) throw SessionError("session_finished", "session " + session_id + " is complete");
  if (item_index > cursor)
    throw SessionError("out_of_order",
                       "expected item " + std::to_string(cursor) + ", got " + std::to_string(item_index));
  if (elapsed_ms <= 0) throw SessionError("invalid_answer", "elapsed_ms must be > 0");
}

void QuizSession::apply_answer(const Response& r) {
  check_answer(r.item_index, r.elapsed_ms);
  responses.push_back(r);
  ++cursor;
}

VttReport score_session(const Quiz& quiz, const QuizSession& session) {
  if (session.total != quiz.size() || !session.finished() ||
      session.responses.size() != quiz.items.size())
    throw SessionError("incomplete_session", "session " + session.session_id + " has " +
                                                 std::to_string(session.responses.size()) + " of " +
                                                 std::to_string(quiz.size()) + " answers");
  VttReport r;
  std::map<char, std::vector<Label>> groups;
  std::int64_t ms_syn = 0, ms_real = 0;
  for (const auto& resp : session.responses) {
    const auto& item = quiz.items.at(static_cast<std::size_t>(resp.item_index));
    const bool said_syn = resp.label == Label::synthetic;
    if (item.truth == Label::synthetic) {
      (said_syn ? r.tp : r.fn)++;
      ms_syn += resp.elapsed_ms;
    } else {
      (said_syn ? r.fp : r.tn)++;
      ms_real += resp.elapsed_ms;
    }
    if (item.duplicate_group) groups[*item.duplicate_group].push_back(resp.label);
  }
  const int n_syn = r.tp + r.fn, n_real = r.tn + r.fp;
  r.tpr = n_syn ? static_cast<double>(r.tp) / n_syn : 0.0;
  r.fpr = n_real ? static_cast<double>(r.fp) / n_real : 0.0;
  r.accuracy_percent = 100.0 * (r.tp + r.tn) / (n_syn + n_real);
  r.duplicate_groups = static_cast<int>(groups.size());
  for (const auto& [g, labels] : groups)
    if (std::adjacent_find(labels.begin(), labels.end(), std::not_equal_to<>()) != labels.end()) ++r.switched_groups;
  r.switch_rate_percent = r.duplicate_groups ? 100.0 * r.switched_groups / r.duplicate_groups : 0.0;
  r.mean_time_synthetic_s = n_syn ? ms_syn / 1000.0 / n_syn : 0.0;
  r.mean_time_real_s = n_real ? ms_real / 1000.0 / n_real : 0.0;
  r.total_time_min = static_cast<double>(ms_syn + ms_real) / 60000.0;
  return r;
}

json to_json(const VttReport& r) {
  return {{"tp", r.tp},
          {"fp", r.fp},
          {"tn", r.tn},
          {"fn", r.fn},
          {"tpr", r.tpr},
          {"fpr", r.fpr},
          {"accuracy_percent", r.accuracy_percent},
          {"duplicate_groups", r.duplicate_groups},
          {"switched_groups", r.switched_groups},
          {"switch_rate_percent", r.switch_rate_percent},
          {"mean_time_synthetic_s", r.mean_time_synthetic_s},
          {"mean_time_real_s", r.mean_time_real_s},
          {"total_time_min", r.total_time_min}};
}

std::string report_csv(const std::vector<GraderReport>& rows) {
  std::string out =
      "grader,total_test_time_min,avg_time_synthetic_s,avg_time_real_s,overall_accuracy_percent,"
      "true_positive_rate,false_positive_rate,switch_rate_percent\n";
  auto line = [&](const std::string& name, double t, double ts, double tr, double acc, double tpr, double fpr,
                  double sw) {
    char buf[256];
    std::snprintf(buf, sizeof buf, ",%.2f,%.2f,%.2f,%.2f,%.2f,%.2f,%.2f\n", t, ts, tr, acc, tpr, fpr, sw);
    out += name + buf;
  };
  for (const auto& g : rows) {
    const auto& r = g.report;
    line(g.grader, r.total_time_min, r.mean_time_synthetic_s, r.mean_time_real_s, r.accuracy_percent, r.tpr, r.fpr,
         r.switch_rate_percent);
  }
  if (rows.size() > 1) {
    double acc[7] = {};
    for (const auto& g : rows) {
      const auto& r = g.report;
      const double v[7] = {r.total_time_min, r.mean_time_synthetic_s, r.mean_time_real_s, r.accuracy_percent,
                           r.tpr,            r.fpr,                   r.switch_rate_percent};
      for (int i = 0; i < 7; ++i) acc[i] += v[i];
    }
    for (double& a : acc) a /= static_cast<double>(rows.size());
    line("average", acc[0], acc[1], acc[2], acc[3], acc[4], acc[5], acc[6]);
  }
  return out;
}

// --- event log ---------------------------------------------------------------

std::string start_event_line(const QuizSession& s, const Quiz& quiz) {
  return json{{"event", "start"}, {"session_id", s.session_id}, {"grader_id", s.grader_id}, {"quiz", to_json(quiz)}}
             .dump() +
         "\n";
}

std::string answer_event_line(const Response& r) {
  return json{{"event", "answer"},
              {"index", r.item_index},
              {"label", std::string(to_string(r.label))},
              {"elapsed_ms", r.elapsed_ms},
              {"received_ms", r.received_ms}}
             .dump() +
         "\n";
}

ReplayedSession replay_log(std::string_view text) {
  ReplayedSession out;
  std::size_t pos = 0;
  int line_no = 0;
  bool started = false;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      out.torn_tail = true;  // the final append never completed
      break;
    }
    const std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    json ev;
    try {
      ev = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError("session log line " + std::to_string(line_no) + ": " + e.what());
    }
    const auto kind = ev.value("event", std::string());
    if (!started) {
      if (kind != "start") throw FormatError("session log must begin with a start event");
      out.quiz = quiz_from_json(ev.at("quiz"));
      out.session.session_id = ev.at("session_id").get<std::string>();
      out.session.grader_id = ev.at("grader_id").get<std::string>();
      out.session.quiz_id = out.quiz.quiz_id;
      out.session.total = out.quiz.size();
      started = true;
    } else if (kind == "answer") {
      try {
        Response r;
        r.item_index = ev.at("index").get<int>();
        r.label = label_from_string(ev.at("label").get<std::string>());
        r.elapsed_ms = ev.at("elapsed_ms").get<std::int64_t>();
        r.received_ms = ev.value("received_ms", std::int64_t{0});
        out.session.apply_answer(r);
      } catch (const json::exception& e) {
        throw FormatError("session log line " + std::to_string(line_no) + ": " + e.what());
      }
    } else {
      throw FormatError("session log line " + std::to_string(line_no) + ": unknown event '" + kind + "'");
    }
  }
  if (!started) throw FormatError("session log has no complete start event");
  return out;
}

ReplayedSession replay_log_file(const std::filesystem::path& path) { return replay_log(read_file(path)); }

// --- store -------------------------------------------------------------------

namespace {

// One write(2) per record on an O_APPEND descriptor, then fsync.
void append_durable(const std::filesystem::path& path, const std::string& line, bool create_new) {
  const int flags = O_WRONLY | O_APPEND | O_CLOEXEC | (create_new ? (O_CREAT | O_EXCL) : 0);
  const int fd = ::open(path.c_str(), flags, 0644);
  if (fd < 0) throw IoError("cannot open session log " + path.string());
  std::size_t done = 0;
  while (done < line.size()) {
    const auto n = ::write(fd, line.data() + done, line.size() - done);
    if (n < 0) {
      ::close(fd);
      throw IoError("write failed on " + path.string());
    }
    done += static_cast<std::size_t>(n);
  }
  const bool synced = ::fsync(fd) == 0;
  ::close(fd);
  if (!synced) throw IoError("fsync failed on " + path.string());
}

}  // namespace

VttStore::VttStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  namespace fs = std::filesystem;
  fs::create_directories(dir_ / "quizzes");
  fs::create_directories(dir_ / "sessions");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir_ / "quizzes"))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    auto q = std::make_shared<const Quiz>(quiz_from_json(json::parse(read_file(f))));
    quizzes_[q->quiz_id] = q;
  }
  files.clear();
  for (const auto& e : fs::directory_iterator(dir_ / "sessions"))
    if (e.path().extension() == ".jsonl") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const std::string text = read_file(f);
    auto rep = replay_log(text);
    if (rep.torn_tail) fs::resize_file(f, text.rfind('\n') + 1);  // drop the torn record before appending
    auto& q = quizzes_[rep.quiz.quiz_id];
    if (!q) q = std::make_shared<const Quiz>(rep.quiz);
    auto e = std::make_shared<Entry>();
    e->state = std::move(rep.session);
    e->quiz = q;
    const auto& sid = e->state.session_id;
    if (sid.size() > 1 && sid[0] == 's') {
      try {
        next_session_ = std::max<std::uint64_t>(next_session_, std::stoull(sid.substr(1)) + 1);
      } catch (const std::exception&) {
      }
    }
    sessions_[sid] = std::move(e);
  }
}

std::shared_ptr<const Quiz> VttStore::add_quiz(Quiz quiz) {
  std::unique_lock lock(mu_);
  if (auto it = quizzes_.find(quiz.quiz_id); it != quizzes_.end()) return it->second;
  write_file(dir_ / "quizzes" / (quiz.quiz_id + ".json"), to_json(quiz).dump(2) + "\n");
  auto q = std::make_shared<const Quiz>(std::move(quiz));
  quizzes_[q->quiz_id] = q;
  return q;
}

std::shared_ptr<const Quiz> VttStore::quiz(const std::string& quiz_id) const {
  std::shared_lock lock(mu_);
  auto it = quizzes_.find(quiz_id);
  if (it == quizzes_.end()) throw SessionError("unknown_quiz", "no quiz '" + quiz_id + "'");
  return it->second;
}

QuizSession VttStore::start_session(const std::string& quiz_id, const std::string& grader_id) {
  auto q = quiz(quiz_id);
  std::unique_lock lock(mu_);
  char sid[32];
  std::snprintf(sid, sizeof sid, "s%06llu", static_cast<unsigned long long>(next_session_++));
  auto e = std::make_shared<Entry>();
  e->state.session_id = sid;
  e->state.grader_id = grader_id;
  e->state.quiz_id = quiz_id;
  e->state.total = q->size();
  e->quiz = q;
  append_durable(log_path(sid), start_event_line(e->state, *q), true);
  sessions_[sid] = e;
  return e->state;
}

std::shared_ptr<VttStore::Entry> VttStore::entry(const std::string& session_id) const {
  std::shared_lock lock(mu_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw SessionError("unknown_session", "no session '" + session_id + "'");
  return it->second;
}

QuizSession VttStore::session(const std::string& session_id) const {
  auto e = entry(session_id);
  std::lock_guard lock(e->mu);
  return e->state;
}

std::optional<NextItem> VttStore::next_item(const std::string& session_id) const {
  auto e = entry(session_id);
  std::lock_guard lock(e->mu);
  if (e->state.finished()) return std::nullopt;
  const auto& item = e->quiz->items[static_cast<std::size_t>(e->state.cursor)];
  return NextItem{e->state.cursor, item.image_ref, e->state.cursor, e->state.total};
}

std::string VttStore::image_ref(const std::string& session_id, int index) const {
  auto e = entry(session_id);
  std::lock_guard lock(e->mu);
  if (e->state.finished() || index != e->state.cursor)
    throw SessionError("not_current", "item " + std::to_string(index) + " is not the current item");
  return e->quiz->items[static_cast<std::size_t>(index)].image_ref;
}

QuizSession VttStore::submit_answer(const std::string& session_id, int item_index, Label label,
                                    std::int64_t elapsed_ms) {
  auto e = entry(session_id);
  std::lock_guard lock(e->mu);
  e->state.check_answer(item_index, elapsed_ms);
  const Response r{item_index, label, elapsed_ms, now_ms()};
  append_durable(log_path(session_id), answer_event_line(r), false);
  e->state.apply_answer(r);
  return e->state;
}

VttReport VttStore::report(const std::string& session_id) const {
  auto e = entry(session_id);
  std::lock_guard lock(e->mu);
  return score_session(*e->quiz, e->state);
}

std::filesystem::path VttStore::log_path(const std::string& session_id) const {
  return dir_ / "sessions" / (session_id + ".jsonl");
}

std::vector<std::string> VttStore::session_ids() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> ids;
  for (const auto& [k, v] : sessions_) ids.push_back(k);
  return ids;
}

}  // namespace skullkit
