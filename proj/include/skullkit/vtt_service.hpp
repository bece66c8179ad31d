#pragma once

#include <memory>
#include <string>

#include "skullkit/slice.hpp"
#include "skullkit/vtt.hpp"

namespace skullkit {

// HTTP JSON API over a VttStore:
//   POST /quiz                      {reals, synths, seed[, n_real, n_synthetic, duplicate_pairs_per_category]}
//   POST /session                   {quiz_id, grader_id}
//   GET  /session/{id}/next         {index, image_url, progress} or {done: true, progress}
//   GET  /session/{id}/image/{i}.png  only for the current item
//   POST /session/{id}/answer       {index, label, elapsed_ms}
//   GET  /session/{id}/report
// Truth labels, item ids and duplicate tags never appear in responses.
class VttService {
 public:
  explicit VttService(VttStore& store, IntensityWindow window = {});
  ~VttService();
  VttService(const VttService&) = delete;
  VttService& operator=(const VttService&) = delete;

  // Binds (port 0 picks a free port) and serves on a background thread;
  // returns the bound port.
  int start(const std::string& host, int port);
  // Binds and serves on the calling thread until stop().
  void serve(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// HTTP status for a domain error kind.
int http_status_for(const std::string& kind);

}  // namespace skullkit
