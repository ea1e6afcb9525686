#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <thread>

#include "agm/api.hpp"

namespace httplib {
class Server;
}

namespace agm {

/// Binds an ApiService to HTTP. Adds the streamed form of /api/events:
/// server-sent events ("id", "event", "data" per record), resumable with
/// ?since=<seq> or a Last-Event-ID header, with keepalive comments while idle.
class HttpServer {
 public:
  explicit HttpServer(ApiService& api, std::string ui_dir = {}, int threads = 32);
  ~HttpServer();

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Port 0 picks a free port. Returns the bound port; throws StorageError-free
  /// std::runtime_error when the address cannot be bound.
  int bind(const std::string& host, int port);

  /// Serves until stop(). Blocks.
  void listen();
  /// listen() on a background thread.
  void start();
  void stop();

  int port() const { return port_; }

 private:
  ApiService& api_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::shared_ptr<std::atomic<bool>> stopping_;
  int port_ = 0;
};

}  // namespace agm
