#include "agm/api.hpp"

#include <algorithm>
#include <chrono>
#include <sstream>
#include <vector>

#include "agm/error.hpp"
#include "agm/wire.hpp"

namespace agm {

namespace {

ApiResponse reply(int status, const json& body) { return {status, body.dump(), "application/json"}; }

ApiResponse error_reply(int status, const std::string& message) { return reply(status, json{{"error", message}}); }

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '/')) {
    if (!part.empty()) parts.push_back(part);
  }
  return parts;
}

json parse_body(const std::string& body) {
  if (body.empty()) return json::object();
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) throw ValidationError("request body is not valid JSON");
  return j;
}

// Malformed client input on CRUD bodies is a validation failure (422),
// but an unparseable body stays a plain 400.
struct UnprocessableEntity : ValidationError {
  using ValidationError::ValidationError;
};

template <typename T>
T decode_entity(const json& j) {
  try {
    return decode<T>(j);
  } catch (const ValidationError& e) {
    throw UnprocessableEntity(e.what());
  }
}

std::optional<std::uint64_t> version_of(const json& body) {
  auto it = body.find("version");
  if (it == body.end() || it->is_null()) return std::nullopt;
  if (!it->is_number_unsigned() && !it->is_number_integer()) throw ValidationError("version must be an integer");
  return it->get<std::uint64_t>();
}

template <typename T>
json resource(const T& value, std::uint64_t version) {
  json j = value;
  j["version"] = version;
  return j;
}

template <typename T>
constexpr const char* id_prefix();
template <>
constexpr const char* id_prefix<Worker>() { return "wkr"; }
template <>
constexpr const char* id_prefix<Workstation>() { return "ws"; }
template <>
constexpr const char* id_prefix<Routing>() { return "routing"; }

// Configuration changes are audited under the kind closest to the resource.
template <typename T>
constexpr AuditKind audit_kind();
template <>
constexpr AuditKind audit_kind<Worker>() { return AuditKind::worker_activity; }
template <>
constexpr AuditKind audit_kind<Workstation>() { return AuditKind::workstation_state; }
template <>
constexpr AuditKind audit_kind<Routing>() { return AuditKind::routing_activated; }

template <typename T>
json change_payload(const char* action, const T& value) {
  json p{{"action", action}, {"resource", json(value)}};
  if constexpr (std::is_same_v<T, Workstation>) {
    p["station"] = value.id;
    p["state"] = to_string(value.state);
    p["occupancy"] = value.occupancy;
    p["capacity"] = value.capacity;
  }
  return p;
}

// Resource-specific create/update/delete rules.
template <typename T>
struct Rules;

template <>
struct Rules<Worker> {
  static Worker create(FleetService& fleet, const json& body) {
    Worker w = decode_entity<Worker>(body);
    if (w.name.empty()) throw UnprocessableEntity("name is required");
    if (w.worker_group.empty()) throw UnprocessableEntity("worker_group is required");
    w.id = fleet.world().next_id(id_prefix<Worker>());  // ids are always server-generated
    w.status = WorkerStatus::idle;
    w.last_seen = fleet.now();
    return w;
  }
  static Worker update(FleetService&, const Worker& cur, const json& body) {
    json merged = json(cur);
    for (const char* key : {"name", "worker_group", "pose", "battery", "address", "port"}) {
      if (body.contains(key)) merged[key] = body[key];
    }
    return decode_entity<Worker>(merged);
  }
  static void check_delete(FleetService& fleet, const Worker& w) {
    if (active_job_for_worker(fleet.world(), w.id)) throw StateConflict("worker " + w.id + " holds an active job");
  }
};

template <>
struct Rules<Workstation> {
  static Workstation create(FleetService& fleet, const json& body) {
    Workstation ws = decode_entity<Workstation>(body);
    if (ws.station_type.empty()) throw UnprocessableEntity("station_type is required");
    if (!is_valid(ws.pose)) throw UnprocessableEntity("pose must be finite");
    if (ws.id.empty()) ws.id = fleet.world().next_id(id_prefix<Workstation>());
    if (ws.name.empty()) ws.name = ws.id;
    ws.occupancy = 0;
    ws.state = derive_state(ws);
    return ws;
  }
  static Workstation update(FleetService&, const Workstation& cur, const json& body) {
    json merged = json(cur);
    for (const char* key : {"name", "station_type", "pose", "capacity", "state"}) {
      if (body.contains(key)) merged[key] = body[key];
    }
    merged["occupancy"] = cur.occupancy;  // server-managed
    if (merged.value("capacity", 1) < cur.occupancy) {
      throw UnprocessableEntity("capacity below current occupancy " + std::to_string(cur.occupancy));
    }
    // Leaving "down" re-derives free/occupied from occupancy.
    if (merged.value("state", "") != "down") merged["state"] = "free";
    return decode_entity<Workstation>(merged);
  }
  static void check_delete(FleetService&, const Workstation& ws) {
    if (ws.occupancy > 0) throw StateConflict("workstation " + ws.id + " is in use");
  }
};

template <>
struct Rules<Routing> {
  static Routing create(FleetService& fleet, const json& body) {
    Routing r = decode_entity<Routing>(body);
    if (r.id.empty()) r.id = fleet.world().next_id(id_prefix<Routing>());
    r.active = false;
    if (auto v = fleet.check_routing(r); !v.empty()) throw RoutingInvalid(std::move(v));
    return r;
  }
  static Routing update(FleetService& fleet, const Routing& cur, const json& body) {
    json merged = json(cur);
    for (const char* key : {"part_number", "customer", "steps", "active"}) {
      if (body.contains(key)) merged[key] = body[key];
    }
    Routing r = decode_entity<Routing>(merged);
    if (auto v = fleet.check_routing(r); !v.empty()) throw RoutingInvalid(std::move(v));
    return r;
  }
  static void check_delete(FleetService& fleet, const Routing& r) {
    for (const auto& [inst, version] : fleet.world().list<RoutingInstance>(Query{}.where("routing_id", r.id))) {
      if (inst.phase != InstancePhase::completed) throw StateConflict("routing " + r.id + " has unfinished instances");
    }
  }
};

Query query_from_params(const std::map<std::string, std::string>& params) {
  Query q;
  for (const auto& [key, value] : params) {
    if (key == "since" || key == "stream" || key == "wait_ms") continue;
    q.where(key, value);
  }
  return q;
}

}  // namespace

ApiService::ApiService(FleetService& fleet, std::shared_ptr<ManualClock> manual_clock)
    : fleet_(fleet), manual_clock_(std::move(manual_clock)) {}

ApiResponse ApiService::handle(const ApiRequest& req) {
  try {
    return dispatch(req);
  } catch (const RoutingInvalid& e) {
    return reply(422, json{{"error", e.what()}, {"violations", e.violations}});
  } catch (const UnprocessableEntity& e) {
    return error_reply(422, e.what());
  } catch (const ValidationError& e) {
    return error_reply(400, e.what());
  } catch (const NotFound& e) {
    return error_reply(404, e.what());
  } catch (const VersionConflict& e) {
    return error_reply(409, e.what());
  } catch (const AlreadyExists& e) {
    return error_reply(409, e.what());
  } catch (const StateConflict& e) {
    return error_reply(409, e.what());
  } catch (const std::exception& e) {
    return error_reply(500, e.what());
  }
}

ApiResponse ApiService::dispatch(const ApiRequest& req) {
  const auto parts = split_path(req.path);
  const std::string& m = req.method;

  if (parts.size() == 1) {
    if (parts[0] == "workerGetNextJob" && m == "GET") return next_job(req);
    if (parts[0] == "workerJobProgress" && m == "POST") return job_progress(req);
    if (parts[0] == "workerJobComplete" && m == "POST") return job_complete(req);
  }
  if (parts.empty() || parts[0] != "api") return error_reply(404, "no route for " + m + " " + req.path);

  const std::string resource_name = parts.size() > 1 ? parts[1] : "";
  const std::string id = parts.size() > 2 ? parts[2] : "";

  if (parts.size() <= 3) {
    if (resource_name == "workers") return crud<Worker>(req, id);
    if (resource_name == "workstations") return crud<Workstation>(req, id);
    if (resource_name == "routings") return crud<Routing>(req, id);
  }
  if (resource_name == "routings" && parts.size() == 4 && parts[3] == "activate" && m == "POST") {
    return activate(id, req);
  }
  if (resource_name == "instances" || resource_name == "jobs") {
    const bool instances = resource_name == "instances";
    if (parts.size() == 2 && m == "GET") {
      json out = json::array();
      const Query q = query_from_params(req.params);
      if (instances) {
        for (const auto& [v, ver] : fleet_.world().list<RoutingInstance>(q)) out.push_back(resource(v, ver));
      } else {
        for (const auto& [v, ver] : fleet_.world().list<Job>(q)) out.push_back(resource(v, ver));
      }
      return reply(200, out);
    }
    if (parts.size() == 3 && m == "GET") {
      if (instances) {
        if (auto v = fleet_.world().load<RoutingInstance>(id)) return reply(200, resource(v->value, v->version));
      } else if (auto v = fleet_.world().load<Job>(id)) {
        return reply(200, resource(v->value, v->version));
      }
      return error_reply(404, resource_name + "/" + id + " not found");
    }
    if (instances && parts.size() == 4 && parts[3] == "cancel" && m == "POST") {
      fleet_.cancel_instance(id);
      return reply(200, json{{"status", 1}, {"instance_id", id}});
    }
  }
  if (resource_name == "events" && parts.size() == 2 && m == "GET") return events(req);
  if (resource_name == "sim" && parts.size() == 3 && parts[2] == "clock" && m == "POST") return sim_clock(req);
  if (resource_name == "health" && parts.size() == 2 && m == "GET") {
    return reply(200, json{{"status", "ok"},
                           {"now", format_timestamp(fleet_.now())},
                           {"audit_size", fleet_.world().store().audit_size()},
                           {"manual_clock", manual_clock()}});
  }
  return error_reply(404, "no route for " + m + " " + req.path);
}

ApiResponse ApiService::next_job(const ApiRequest& req) {
  auto it = req.params.find("key");
  if (it == req.params.end() || it->second.empty()) return error_reply(400, "missing key parameter");
  return reply(200, json(fleet_.poll(it->second)));
}

ApiResponse ApiService::job_progress(const ApiRequest& req) {
  const json body = parse_body(req.body);
  ProgressReport r;
  try {
    r.key = body.at("key").get<std::string>();
    r.job_id = body.at("job_id").get<std::string>();
    const std::string phase = body.at("phase").get<std::string>();
    auto p = enum_from_string<JobPhase>(phase);
    if (!p) throw ValidationError("unknown phase '" + phase + "'");
    r.phase = *p;
    r.pose = body.contains("pose") ? decode<Pose3>(body["pose"]) : Pose3{};
    r.battery = body.value("battery", 1.0);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed progress report: ") + e.what());
  }
  if (!body.contains("pose") || !body.contains("battery")) {
    // Without telemetry keep the stored values.
    if (auto w = fleet_.world().load<Worker>(r.key)) {
      if (!body.contains("pose")) r.pose = w->value.pose;
      if (!body.contains("battery")) r.battery = w->value.battery;
    }
  }
  if (!(r.battery >= 0.0 && r.battery <= 1.0)) throw ValidationError("battery must be within [0, 1]");
  const auto result = fleet_.report_progress(r);
  json out{{"status", result.status}};
  if (!result.reason.empty()) out["reason"] = result.reason;
  return reply(200, out);
}

ApiResponse ApiService::job_complete(const ApiRequest& req) {
  const json body = parse_body(req.body);
  std::string key, job_id;
  try {
    key = body.at("key").get<std::string>();
    job_id = body.at("job_id").get<std::string>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed completion: ") + e.what());
  }
  const auto result = fleet_.complete_job(key, job_id);
  json out{{"status", result.status}};
  if (!result.reason.empty()) out["reason"] = result.reason;
  return reply(200, out);
}

template <typename T>
ApiResponse ApiService::crud(const ApiRequest& req, const std::string& id) {
  Repository& world = fleet_.world();
  const std::string& m = req.method;

  if (id.empty()) {
    if (m == "GET") {
      json out = json::array();
      for (const auto& [v, ver] : world.list<T>(query_from_params(req.params))) out.push_back(resource(v, ver));
      return reply(200, out);
    }
    if (m == "POST") {
      const json body = parse_body(req.body);
      if (!body.is_object()) throw UnprocessableEntity("expected a JSON object");
      T value = Rules<T>::create(fleet_, body);
      const auto version = world.save(value, std::nullopt);
      world.audit(audit_kind<T>(), value.id, change_payload("created", value), fleet_.now());
      return reply(201, resource(value, version));
    }
    return error_reply(405, "method not allowed");
  }

  auto cur = world.load<T>(id);
  if (!cur) return error_reply(404, std::string(collection_of<T>()) + "/" + id + " not found");

  if (m == "GET") return reply(200, resource(cur->value, cur->version));
  if (m == "PUT") {
    const json body = parse_body(req.body);
    if (!body.is_object()) throw UnprocessableEntity("expected a JSON object");
    if (body.contains("id") && body["id"] != id) throw UnprocessableEntity("id in body does not match the path");
    const auto expected = version_of(body).value_or(cur->version);
    T next = Rules<T>::update(fleet_, cur->value, body);
    next.id = cur->value.id;
    const auto version = world.save(next, expected);
    world.audit(audit_kind<T>(), next.id, change_payload("updated", next), fleet_.now());
    return reply(200, resource(next, version));
  }
  if (m == "DELETE") {
    Rules<T>::check_delete(fleet_, cur->value);
    world.erase<T>(id, cur->version);
    world.audit(audit_kind<T>(), id, change_payload("removed", cur->value), fleet_.now());
    return reply(200, json{{"deleted", id}});
  }
  return error_reply(405, "method not allowed");
}

ApiResponse ApiService::activate(const std::string& routing_id, const ApiRequest& req) {
  const json body = parse_body(req.body);
  const json q = body.value("quantity", json(1));
  if (!q.is_number_integer()) throw ValidationError("quantity must be an integer");
  const int quantity = q.get<int>();
  if (quantity < 1) throw ValidationError("quantity must be >= 1");
  auto ids = fleet_.activate_routing(routing_id, quantity);
  return reply(201, json{{"instance_ids", ids}});
}

ApiResponse ApiService::events(const ApiRequest& req) {
  std::uint64_t since = 0;
  if (auto it = req.params.find("since"); it != req.params.end()) {
    try {
      const long long v = std::stoll(it->second);
      if (v < 0) throw ValidationError("since must be >= 0");
      since = static_cast<std::uint64_t>(v);
    } catch (const std::logic_error&) {
      throw ValidationError("since must be an integer");
    }
  }
  if (auto it = req.params.find("wait_ms"); it != req.params.end()) {
    const long long ms = std::clamp(std::atoll(it->second.c_str()), 0LL, 30'000LL);
    fleet_.world().store().wait_for_audit(since, std::chrono::milliseconds(ms));
  }
  return reply(200, json(fleet_.world().store().read_audit(since)));
}

ApiResponse ApiService::sim_clock(const ApiRequest& req) {
  if (!manual_clock_) return error_reply(404, "server is running on the wall clock");
  const json body = parse_body(req.body);
  Timestamp target = manual_clock_->now();
  if (body.contains("now")) {
    auto t = body["now"].is_string() ? parse_timestamp(body["now"].get<std::string>()) : std::nullopt;
    if (!t) throw ValidationError("now must be an RFC 3339 UTC timestamp");
    target = *t;
  } else if (body.contains("advance")) {
    if (!body["advance"].is_number() || body["advance"].get<double>() < 0) {
      throw ValidationError("advance must be a non-negative number of seconds");
    }
    target = add_seconds(target, body["advance"].get<double>());
  }
  if (!manual_clock_->set(target)) throw StateConflict("clock cannot move backwards");
  fleet_.tick();
  return reply(200, json{{"now", format_timestamp(manual_clock_->now())}});
}

}  // namespace agm
