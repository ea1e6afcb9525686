#include "agm/http_server.hpp"

#include <chrono>
#include <stdexcept>

#include <httplib.h>

#include "agm/wire.hpp"

namespace agm {

namespace {

ApiRequest to_api_request(const httplib::Request& req) {
  ApiRequest out{req.method, req.path, {}, req.body};
  for (const auto& [k, v] : req.params) out.params.emplace(k, v);  // first value wins
  return out;
}

void write_response(const ApiResponse& from, httplib::Response& to) {
  to.status = from.status;
  to.set_content(from.body, from.content_type);
}

std::string sse_record(const AuditEvent& e) {
  return "id: " + std::to_string(e.seq) + "\nevent: " + std::string(to_string(e.kind)) + "\ndata: " + json(e).dump() +
         "\n\n";
}

}  // namespace

HttpServer::HttpServer(ApiService& api, std::string ui_dir, int threads)
    : api_(api), server_(std::make_unique<httplib::Server>()), stopping_(std::make_shared<std::atomic<bool>>(false)) {
  server_->new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<size_t>(threads)); };
  server_->set_keep_alive_max_count(1000);
  server_->set_tcp_nodelay(true);

  auto plain = [this](const httplib::Request& req, httplib::Response& res) {
    write_response(api_.handle(to_api_request(req)), res);
  };

  server_->Get("/api/events", [this, plain](const httplib::Request& req, httplib::Response& res) {
    const bool stream = !(req.has_param("stream") && req.get_param_value("stream") == "false");
    if (!stream) return plain(req, res);

    std::uint64_t since = 0;
    try {
      if (req.has_header("Last-Event-ID")) {
        since = std::stoull(req.get_header_value("Last-Event-ID")) + 1;
      } else if (req.has_param("since")) {
        const long long v = std::stoll(req.get_param_value("since"));
        if (v < 0) throw std::invalid_argument("negative");
        since = static_cast<std::uint64_t>(v);
      }
    } catch (const std::exception&) {
      res.status = 400;
      res.set_content(R"({"error":"since must be a non-negative integer"})", "application/json");
      return;
    }

    res.set_header("Cache-Control", "no-cache");
    auto next = std::make_shared<std::uint64_t>(since);
    auto stopping = stopping_;
    DocumentStore* store = &api_.fleet().world().store();
    res.set_chunked_content_provider("text/event-stream", [next, stopping, store](size_t, httplib::DataSink& sink) {
      if (stopping->load()) return false;
      store->wait_for_audit(*next, std::chrono::milliseconds(500));
      auto events = store->read_audit(*next);
      if (events.empty()) {
        const std::string keepalive = ": keepalive\n\n";
        return sink.write(keepalive.data(), keepalive.size());
      }
      for (const auto& e : events) {
        const auto rec = sse_record(e);
        if (!sink.write(rec.data(), rec.size())) return false;
        *next = e.seq + 1;
      }
      return true;
    });
  });

  for (const char* pattern : {R"(/workerGetNextJob)", R"(/api/.*)"}) server_->Get(pattern, plain);
  for (const char* pattern : {R"(/workerJobProgress)", R"(/workerJobComplete)", R"(/api/.*)"}) {
    server_->Post(pattern, plain);
  }
  server_->Put(R"(/api/.*)", plain);
  server_->Delete(R"(/api/.*)", plain);

  if (!ui_dir.empty()) server_->set_mount_point("/ui", ui_dir);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
  } else if (server_->bind_to_port(host, port)) {
    port_ = port;
  } else {
    port_ = -1;
  }
  if (port_ <= 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  return port_;
}

void HttpServer::listen() { server_->listen_after_bind(); }

void HttpServer::start() {
  thread_ = std::thread([this] { listen(); });
  server_->wait_until_ready();
}

void HttpServer::stop() {
  stopping_->store(true);
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace agm
