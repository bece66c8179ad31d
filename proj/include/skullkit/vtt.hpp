#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "skullkit/error.hpp"
#include "skullkit/io.hpp"

namespace skullkit {

// Visual Turing test: quiz assembly, no-revision sessions persisted as
// append-only JSON-lines event logs, and scoring. Positive class = synthetic.

enum class Label { real, synthetic };

std::string_view to_string(Label l);
Label label_from_string(std::string_view s);

struct QuizSpec {
  int n_real = 25;
  int n_synthetic = 25;
  int duplicate_pairs_per_category = 3;
  std::uint64_t seed = 0;

  void validate() const;
  int distinct_real() const { return n_real - duplicate_pairs_per_category; }
  int distinct_synthetic() const { return n_synthetic - duplicate_pairs_per_category; }
  int total() const { return n_real + n_synthetic; }
};

struct QuizItem {
  std::string item_id;
  std::string image_ref;  // slice file path; both members of a duplicate pair share it
  Label truth = Label::real;
  std::optional<char> duplicate_group;  // u, v, w (real) / x, y, z (synthetic)
};

struct Quiz {
  std::string quiz_id;
  QuizSpec spec;
  std::vector<QuizItem> items;

  int size() const { return static_cast<int>(items.size()); }
  int count(Label l) const;
};

nlohmann::json to_json(const Quiz& q);
Quiz quiz_from_json(const nlohmann::json& j);

// Picks distinct items per category by seeded sampling, duplicates the first
// `duplicate_pairs_per_category` of each, and shuffles all entries.
Quiz build_quiz(const std::vector<ManifestRecord>& reals, const std::vector<ManifestRecord>& synths,
                const QuizSpec& spec);

struct Response {
  int item_index = 0;
  Label label = Label::real;
  std::int64_t elapsed_ms = 0;   // client-measured display-to-click
  std::int64_t received_ms = 0;  // server receipt time (audit only, never scored)
};

struct QuizSession {
  std::string session_id;
  std::string grader_id;
  std::string quiz_id;
  int cursor = 0;
  int total = 0;
  std::vector<Response> responses;

  bool finished() const { return cursor >= total; }

  // Validates the no-revision protocol without mutating; throws SessionError
  // with kind revision_attempt (index < cursor), out_of_order (index > cursor),
  // session_finished, or invalid_answer.
  void check_answer(int item_index, std::int64_t elapsed_ms) const;
  void apply_answer(const Response& r);
};

struct VttReport {
  int tp = 0, fp = 0, tn = 0, fn = 0;
  double tpr = 0, fpr = 0, accuracy_percent = 0;
  int duplicate_groups = 0;
  int switched_groups = 0;
  double switch_rate_percent = 0;
  double mean_time_synthetic_s = 0;
  double mean_time_real_s = 0;
  double total_time_min = 0;

  friend bool operator==(const VttReport&, const VttReport&) = default;
};

// Throws SessionError("incomplete_session") unless every item is answered.
VttReport score_session(const Quiz& quiz, const QuizSession& session);

nlohmann::json to_json(const VttReport& r);

struct GraderReport {
  std::string grader;
  VttReport report;
};

// Per-grader summary CSV: one row per grader plus an "average" row when there is
// more than one grader.
std::string report_csv(const std::vector<GraderReport>& rows);

// --- event log ---------------------------------------------------------------

// First line: {"event":"start", session_id, grader_id, quiz}, then one
// {"event":"answer", ...} per accepted response.
std::string start_event_line(const QuizSession& s, const Quiz& quiz);
std::string answer_event_line(const Response& r);

struct ReplayedSession {
  Quiz quiz;
  QuizSession session;
  bool torn_tail = false;  // an incomplete final line was ignored
};

// Rebuilds state from a log; a torn (unterminated, unparsable) final line is
// dropped, corruption anywhere else throws FormatError, protocol violations
// inside the log throw SessionError.
ReplayedSession replay_log(std::string_view text);
ReplayedSession replay_log_file(const std::filesystem::path& path);

// --- service state -----------------------------------------------------------

struct NextItem {
  int index = 0;
  std::string image_ref;
  int answered = 0;
  int total = 0;
};

// Quizzes and sessions behind a directory. Construction replays every session
// log found in `dir/sessions`. Operations on one session are serialized; other
// sessions proceed concurrently.
class VttStore {
 public:
  explicit VttStore(std::filesystem::path dir);

  std::shared_ptr<const Quiz> add_quiz(Quiz quiz);
  std::shared_ptr<const Quiz> quiz(const std::string& quiz_id) const;

  // Persisted (fsync) before returning.
  QuizSession start_session(const std::string& quiz_id, const std::string& grader_id);
  QuizSession session(const std::string& session_id) const;

  std::optional<NextItem> next_item(const std::string& session_id) const;
  // Image for `index`, only while it is the session's current item.
  std::string image_ref(const std::string& session_id, int index) const;

  QuizSession submit_answer(const std::string& session_id, int item_index, Label label,
                            std::int64_t elapsed_ms);
  VttReport report(const std::string& session_id) const;

  std::filesystem::path log_path(const std::string& session_id) const;
  std::vector<std::string> session_ids() const;

 private:
  struct Entry {
    mutable std::mutex mu;
    QuizSession state;
    std::shared_ptr<const Quiz> quiz;
  };

  std::shared_ptr<Entry> entry(const std::string& session_id) const;

  std::filesystem::path dir_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<const Quiz>> quizzes_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::uint64_t next_session_ = 1;
};

}  // namespace skullkit
