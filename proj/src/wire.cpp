#include "agm/wire.hpp"

#include <cmath>

#include "agm/error.hpp"

namespace agm {

namespace {

const json* field(const json& j, const char* key) {
  if (!j.is_object()) throw ValidationError("expected a JSON object");
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return nullptr;
  return &*it;
}

const json& required(const json& j, const char* key) {
  const json* f = field(j, key);
  if (f == nullptr) throw ValidationError(std::string("missing field '") + key + "'");
  return *f;
}

std::string get_string(const json& j, const char* key, std::string fallback = {}) {
  const json* f = field(j, key);
  if (f == nullptr) return fallback;
  if (!f->is_string()) throw ValidationError(std::string("field '") + key + "' must be a string");
  return f->get<std::string>();
}

double get_number(const json& j, const char* key, double fallback) {
  const json* f = field(j, key);
  if (f == nullptr) return fallback;
  if (!f->is_number()) throw ValidationError(std::string("field '") + key + "' must be a number");
  const double v = f->get<double>();
  if (!std::isfinite(v)) throw ValidationError(std::string("field '") + key + "' must be finite");
  return v;
}

long long get_integer(const json& j, const char* key, long long fallback) {
  const json* f = field(j, key);
  if (f == nullptr) return fallback;
  if (!f->is_number_integer()) throw ValidationError(std::string("field '") + key + "' must be an integer");
  return f->get<long long>();
}

template <typename E>
E get_enum(const json& j, const char* key, E fallback) {
  const std::string s = get_string(j, key);
  if (s.empty()) return fallback;
  auto v = enum_from_string<E>(s);
  if (!v) throw ValidationError(std::string("field '") + key + "' has unknown value '" + s + "'");
  return *v;
}

Timestamp get_time(const json& j, const char* key, Timestamp fallback) {
  const std::string s = get_string(j, key);
  if (s.empty()) return fallback;
  auto t = parse_timestamp(s);
  if (!t) throw ValidationError(std::string("field '") + key + "' is not an RFC 3339 UTC timestamp");
  return *t;
}

Pose3 get_pose(const json& j, const char* key) {
  const json* f = field(j, key);
  if (f == nullptr) return {};
  return f->get<Pose3>();
}

}  // namespace

void to_json(json& j, const Pose3& v) {
  j = json{{"x", v.x}, {"y", v.y}, {"z", v.z}, {"yaw", v.yaw}};
}

void from_json(const json& j, Pose3& v) {
  v.x = get_number(j, "x", 0.0);
  v.y = get_number(j, "y", 0.0);
  v.z = get_number(j, "z", 0.0);
  v.yaw = normalize_yaw(get_number(j, "yaw", 0.0));
}

void to_json(json& j, const Worker& v) {
  j = json{{"id", v.id},
           {"name", v.name},
           {"worker_group", v.worker_group},
           {"status", to_string(v.status)},
           {"pose", v.pose},
           {"battery", v.battery},
           {"last_seen", format_timestamp(v.last_seen)},
           {"address", v.address},
           {"port", v.port}};
}

void from_json(const json& j, Worker& v) {
  v.id = get_string(j, "id");
  v.name = get_string(j, "name");
  v.worker_group = get_string(j, "worker_group");
  v.status = get_enum(j, "status", WorkerStatus::idle);
  v.pose = get_pose(j, "pose");
  v.battery = get_number(j, "battery", 1.0);
  if (v.battery < 0.0 || v.battery > 1.0) throw ValidationError("battery must be within [0, 1]");
  v.last_seen = get_time(j, "last_seen", Timestamp{});
  v.address = get_string(j, "address");
  v.port = static_cast<int>(get_integer(j, "port", 0));
}

void to_json(json& j, const Workstation& v) {
  j = json{{"id", v.id},
           {"name", v.name},
           {"station_type", v.station_type},
           {"pose", v.pose},
           {"capacity", v.capacity},
           {"state", to_string(v.state)},
           {"occupancy", v.occupancy}};
}

void from_json(const json& j, Workstation& v) {
  v.id = get_string(j, "id");
  v.name = get_string(j, "name");
  v.station_type = get_string(j, "station_type");
  v.pose = get_pose(j, "pose");
  v.capacity = static_cast<int>(get_integer(j, "capacity", 1));
  if (v.capacity < 1) throw ValidationError("capacity must be a positive integer");
  v.occupancy = static_cast<int>(get_integer(j, "occupancy", 0));
  if (v.occupancy < 0 || v.occupancy > v.capacity) throw ValidationError("occupancy must be within [0, capacity]");
  v.state = get_enum(j, "state", StationState::free);
  v.state = derive_state(v);
}

void to_json(json& j, const RoutingStep& v) {
  j = json{{"index", v.index},
           {"operation_name", v.operation_name},
           {"station_type", v.station_type},
           {"worker_group", v.worker_group},
           {"process_duration", v.process_duration},
           {"priority", v.priority}};
}

void from_json(const json& j, RoutingStep& v) {
  v.index = static_cast<int>(get_integer(j, "index", 0));
  v.operation_name = get_string(j, "operation_name");
  v.station_type = get_string(j, "station_type");
  v.worker_group = get_string(j, "worker_group");
  v.process_duration = get_number(j, "process_duration", 0.0);
  v.priority = static_cast<int>(get_integer(j, "priority", 0));
}

void to_json(json& j, const Routing& v) {
  j = json{{"id", v.id},
           {"part_number", v.part_number},
           {"customer", v.customer},
           {"steps", v.steps},
           {"active", v.active}};
}

void from_json(const json& j, Routing& v) {
  v.id = get_string(j, "id");
  v.part_number = get_string(j, "part_number");
  v.customer = get_string(j, "customer");
  v.steps.clear();
  if (const json* steps = field(j, "steps")) {
    if (!steps->is_array()) throw ValidationError("field 'steps' must be an array");
    for (const auto& s : *steps) v.steps.push_back(s.get<RoutingStep>());
  }
  const json* active = field(j, "active");
  if (active != nullptr && !active->is_boolean()) throw ValidationError("field 'active' must be a boolean");
  v.active = active != nullptr && active->get<bool>();
}

void to_json(json& j, const RoutingInstance& v) {
  j = json{{"id", v.id},
           {"routing_id", v.routing_id},
           {"current_step", v.current_step},
           {"phase", to_string(v.phase)},
           {"location", v.location},
           {"created_at", format_timestamp(v.created_at)},
           {"completed_at", v.completed_at ? json(format_timestamp(*v.completed_at)) : json(nullptr)}};
}

void from_json(const json& j, RoutingInstance& v) {
  v.id = get_string(j, "id");
  v.routing_id = get_string(j, "routing_id");
  v.current_step = static_cast<int>(get_integer(j, "current_step", 0));
  if (v.current_step < 0) throw ValidationError("current_step must be >= 0");
  v.phase = get_enum(j, "phase", InstancePhase::awaiting_transport);
  v.location = get_string(j, "location");
  v.created_at = get_time(j, "created_at", Timestamp{});
  v.completed_at.reset();
  if (field(j, "completed_at") != nullptr) v.completed_at = get_time(j, "completed_at", Timestamp{});
}

void to_json(json& j, const Job& v) {
  j = json{{"id", v.id},
           {"worker_id", v.worker_id},
           {"instance_id", v.instance_id},
           {"step_index", v.step_index},
           {"source", v.source},
           {"destination", v.destination},
           {"source_station", v.source_station},
           {"destination_station", v.destination_station},
           {"assigned_at", format_timestamp(v.assigned_at)},
           {"phase", to_string(v.phase)}};
}

void from_json(const json& j, Job& v) {
  v.id = get_string(j, "id");
  v.worker_id = get_string(j, "worker_id");
  v.instance_id = get_string(j, "instance_id");
  v.step_index = static_cast<int>(get_integer(j, "step_index", 0));
  v.source = get_pose(j, "source");
  v.destination = get_pose(j, "destination");
  v.source_station = get_string(j, "source_station");
  v.destination_station = get_string(j, "destination_station");
  v.assigned_at = get_time(j, "assigned_at", Timestamp{});
  v.phase = get_enum(j, "phase", JobPhase::assigned);
}

void to_json(json& j, const JobPayload& v) {
  if (v.status != 1) {
    j = json{{"status", 0}};
    return;
  }
  j = json{{"status", 1},
           {"job_id", v.job_id},
           {"source", v.source},
           {"destination", v.destination},
           {"operation_name", v.operation_name},
           {"instance_id", v.instance_id},
           {"part_number", v.part_number}};
}

void from_json(const json& j, JobPayload& v) {
  if (!required(j, "status").is_number_integer()) throw ValidationError("status must be an integer");
  const auto status = get_integer(j, "status", 0);
  if (status != 0 && status != 1) throw ValidationError("status must be 0 or 1");
  v = JobPayload{};
  v.status = static_cast<int>(status);
  if (v.status == 0) return;
  v.job_id = get_string(j, "job_id");
  v.source = get_pose(j, "source");
  v.destination = get_pose(j, "destination");
  v.operation_name = get_string(j, "operation_name");
  v.instance_id = get_string(j, "instance_id");
  v.part_number = get_string(j, "part_number");
}

void to_json(json& j, const AuditEvent& v) {
  j = json{{"seq", v.seq},
           {"timestamp", format_timestamp(v.timestamp)},
           {"kind", to_string(v.kind)},
           {"subject_id", v.subject_id},
           {"payload", v.payload}};
}

void from_json(const json& j, AuditEvent& v) {
  const auto seq = get_integer(j, "seq", 0);
  if (seq < 0) throw ValidationError("seq must be >= 0");
  v.seq = static_cast<std::uint64_t>(seq);
  v.timestamp = get_time(j, "timestamp", Timestamp{});
  v.kind = get_enum(j, "kind", AuditKind::worker_activity);
  v.subject_id = get_string(j, "subject_id");
  const json* p = field(j, "payload");
  v.payload = p != nullptr ? *p : json::object();
}

void to_json(json& j, const RoutingViolation& v) {
  j = json{{"step", v.step ? json(*v.step) : json(nullptr)}, {"message", v.message}};
}

}  // namespace agm
