#include "agm/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "agm/error.hpp"

namespace agm {

namespace fs = std::filesystem;

HostPort parse_listen_address(const std::string& text) {
  HostPort hp;
  std::string port;
  if (!text.empty() && text.front() == '[') {
    const auto close = text.find(']');
    if (close == std::string::npos || close + 1 >= text.size() || text[close + 1] != ':') {
      throw ValidationError("bad listen address '" + text + "'");
    }
    hp.host = text.substr(1, close - 1);
    port = text.substr(close + 2);
  } else {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos) throw ValidationError("listen address '" + text + "' has no port");
    hp.host = text.substr(0, colon);
    port = text.substr(colon + 1);
  }
  if (hp.host.empty()) hp.host = "0.0.0.0";
  if (port.empty() || port.find_first_not_of("0123456789") != std::string::npos || port.size() > 5) {
    throw ValidationError("bad port in listen address '" + text + "'");
  }
  hp.port = std::stoi(port);
  if (hp.port > 65535) throw ValidationError("port out of range in '" + text + "'");
  return hp;
}

void to_json(json& j, const ServerConfig& v) {
  j = json{{"listen_address", v.listen_address},
           {"data_dir", v.data_dir},
           {"scheduler", v.scheduler},
           {"org_id", v.org_id}};
  if (v.tls) j["tls"] = json{{"cert_file", v.tls->cert_file}, {"key_file", v.tls->key_file}};
}

void from_json(const json& j, ServerConfig& v) {
  static const std::set<std::string> known{"listen_address", "data_dir", "scheduler", "org_id", "tls"};
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ValidationError("unknown config key '" + key + "'");
  }
  ServerConfig out;
  out.listen_address = j.value("listen_address", out.listen_address);
  out.data_dir = j.value("data_dir", out.data_dir);
  out.org_id = j.value("org_id", out.org_id);
  if (j.contains("scheduler")) out.scheduler = j.at("scheduler").get<SchedulerConfig>();
  if (j.contains("tls") && !j.at("tls").is_null()) {
    const auto& t = j.at("tls");
    out.tls = TlsConfig{t.value("cert_file", ""), t.value("key_file", "")};
  }
  v = std::move(out);
}

ServerConfig load_server_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str()).get<ServerConfig>();
  } catch (const json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

void validate(const ServerConfig& cfg) {
  parse_listen_address(cfg.listen_address);
  validate(cfg.scheduler);
  if (cfg.data_dir.empty()) return;
  std::error_code ec;
  fs::create_directories(cfg.data_dir, ec);
  if (ec) throw ValidationError("cannot create data dir " + cfg.data_dir + ": " + ec.message());
  const auto probe = fs::path(cfg.data_dir) / ".write-probe";
  {
    std::ofstream out(probe);
    if (!out) throw ValidationError("data dir " + cfg.data_dir + " is not writable");
  }
  fs::remove(probe, ec);
}

}  // namespace agm
