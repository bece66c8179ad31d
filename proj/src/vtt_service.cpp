#include "skullkit/vtt_service.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "skullkit/io.hpp"
#include "skullkit/png.hpp"

namespace skullkit {

using nlohmann::json;

int http_status_for(const std::string& kind) {
  if (kind == "unknown_quiz" || kind == "unknown_session") return 404;
  if (kind == "revision_attempt" || kind == "out_of_order" || kind == "session_finished" ||
      kind == "incomplete_session" || kind == "not_current")
    return 409;
  if (kind == "io") return 500;
  return 400;
}

struct VttService::Impl {
  VttStore& store;
  IntensityWindow window;
  httplib::Server server;
  std::thread thread;
  std::mutex png_mu;
  std::map<std::string, std::shared_ptr<const std::string>> png_cache;

  Impl(VttStore& s, IntensityWindow w) : store(s), window(w) { routes(); }

  std::shared_ptr<const std::string> png_for(const std::string& ref) {
    {
      std::lock_guard lock(png_mu);
      if (auto it = png_cache.find(ref); it != png_cache.end()) return it->second;
    }
    auto bytes = std::make_shared<const std::string>(encode_png(load_slice(ref), window));
    std::lock_guard lock(png_mu);
    return png_cache.emplace(ref, bytes).first->second;
  }

  static void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, const std::string& kind, const std::string& msg) {
    send_json(res, http_status_for(kind), {{"error", kind}, {"message", msg}});
  }

  template <typename F>
  static auto guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const Error& e) {
        send_error(res, e.kind(), e.what());
      } catch (const json::exception& e) {
        send_error(res, "invalid_request", e.what());
      } catch (const std::exception& e) {
        send_json(res, 500, {{"error", "internal"}, {"message", e.what()}});
      }
    };
  }

  static json body_of(const httplib::Request& req) {
    json j = json::parse(req.body);
    if (!j.is_object()) throw InvalidArgument("request body must be a JSON object");
    return j;
  }

  void routes() {
    server.set_post_routing_handler([](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_header("Cache-Control", "no-store");
    });
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });

    server.Post("/quiz", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json b = body_of(req);
      QuizSpec spec;
      spec.seed = b.value("seed", std::uint64_t{0});
      spec.n_real = b.value("n_real", spec.n_real);
      spec.n_synthetic = b.value("n_synthetic", spec.n_synthetic);
      spec.duplicate_pairs_per_category = b.value("duplicate_pairs_per_category", spec.duplicate_pairs_per_category);
      const auto reals = resolve_dataset(b.at("reals").get<std::string>(), Provenance::real);
      const auto synths = resolve_dataset(b.at("synths").get<std::string>(), Provenance::synthetic);
      auto q = store.add_quiz(build_quiz(reals, synths, spec));
      send_json(res, 201, {{"quiz_id", q->quiz_id}, {"items", q->size()}});
    }));

    server.Post("/session", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json b = body_of(req);
      const auto s = store.start_session(b.at("quiz_id").get<std::string>(), b.at("grader_id").get<std::string>());
      send_json(res, 201,
                {{"session_id", s.session_id}, {"quiz_id", s.quiz_id}, {"cursor", s.cursor}, {"total", s.total}});
    }));

    server.Get(R"(/session/([^/]+)/next)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string sid = req.matches[1];
      const auto next = store.next_item(sid);
      if (!next) {
        const auto s = store.session(sid);
        send_json(res, 200, {{"done", true}, {"progress", {{"answered", s.cursor}, {"total", s.total}}}});
        return;
      }
      send_json(res, 200,
                {{"done", false},
                 {"index", next->index},
                 {"image_url", "/session/" + sid + "/image/" + std::to_string(next->index) + ".png"},
                 {"progress", {{"answered", next->answered}, {"total", next->total}}}});
    }));

    server.Get(R"(/session/([^/]+)/image/(\d+)\.png)",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const std::string sid = req.matches[1];
                 const int index = std::stoi(req.matches[2]);
                 const auto png = png_for(store.image_ref(sid, index));
                 res.status = 200;
                 res.set_content(*png, "image/png");
               }));

    server.Post(R"(/session/([^/]+)/answer)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string sid = req.matches[1];
      json b;
      try {
        b = body_of(req);
      } catch (const std::exception& e) {
        throw SessionError("invalid_answer", e.what());
      }
      if (!b.contains("index") || !b["index"].is_number_integer() || !b.contains("label") ||
          !b["label"].is_string() || !b.contains("elapsed_ms") || !b["elapsed_ms"].is_number())
        throw SessionError("invalid_answer", "body must be {index: int, label: string, elapsed_ms: number}");
      const auto label = label_from_string(b["label"].get<std::string>());
      const auto elapsed = static_cast<std::int64_t>(std::llround(b["elapsed_ms"].get<double>()));
      const auto s = store.submit_answer(sid, b["index"].get<int>(), label, elapsed);
      send_json(res, 200, {{"accepted", true}, {"cursor", s.cursor}, {"done", s.finished()}});
    }));

    server.Get(R"(/session/([^/]+)/report)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string sid = req.matches[1];
      const auto s = store.session(sid);
      json j = to_json(store.report(sid));
      j["session_id"] = s.session_id;
      j["grader_id"] = s.grader_id;
      send_json(res, 200, j);
    }));
  }
};

VttService::VttService(VttStore& store, IntensityWindow window) : impl_(std::make_unique<Impl>(store, window)) {}

VttService::~VttService() { stop(); }

int VttService::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound <= 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void VttService::serve(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
}

void VttService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace skullkit
