// SPDX-License-Identifier: Apache-2.0
//
// HTTP render service.
//
//   POST /render  JSON {"pose": [16 numbers]} or {"orbit": {"azimuth",
//                 "elevation", "radius"}}, plus "width", "height", optional
//                 "scale" (1, 2, 4, 8) and "fov_y" (degrees). Replies with a
//                 PNG of (width/scale) x (height/scale).
//   GET  /meta    JSON scene metadata.
//
// Renders of one session (X-Session header, else the peer address) run one
// at a time. A request waiting for its turn is answered 503 as soon as a
// newer request from the same session arrives, so at most one render runs
// and one waits per session.
#pragma once
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "gnelf/model.hpp"

namespace gnelf {

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 7860;
  int threads = 1;
  std::uint64_t max_pixels = 4'000'000;
};

struct HttpReply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Transport-independent request handling.
class RenderService {
 public:
  RenderService(Model model, std::string checkpoint_hash, ServeOptions options = {});

  HttpReply render(const std::string& body, const std::string& session);
  HttpReply meta() const;
  const Model& model() const { return model_; }

 private:
  struct Session {
    std::mutex mutex;
    std::condition_variable cv;
    bool busy = false;
    std::uint64_t latest = 0;
  };
  std::shared_ptr<Session> session(const std::string& id);

  Model model_;
  std::string hash_;
  ServeOptions options_;
  std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

class HttpServer {
 public:
  explicit HttpServer(RenderService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds `host`:`port`; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Blocks.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace gnelf
