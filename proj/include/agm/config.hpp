#pragma once

#include <optional>
#include <string>

#include "agm/scheduler.hpp"

namespace agm {

struct TlsConfig {
  std::string cert_file;
  std::string key_file;
};

struct ServerConfig {
  std::string listen_address = "127.0.0.1:8080";
  std::string data_dir;  // empty: in-memory store
  SchedulerConfig scheduler;
  std::string org_id;
  std::optional<TlsConfig> tls;
};

struct HostPort {
  std::string host;
  int port = 0;
};

/// "host:port", "[v6]:port" or ":port". Throws ValidationError.
HostPort parse_listen_address(const std::string& text);

void to_json(json& j, const ServerConfig& v);
void from_json(const json& j, ServerConfig& v);

/// Reads a JSON config file; unknown keys are rejected. Throws ValidationError.
ServerConfig load_server_config(const std::string& path);

/// Checks the invariants: parseable listen address, writable data dir.
void validate(const ServerConfig& cfg);

}  // namespace agm
