#pragma once

// Fleet domain model: workers, workstations, routings and their activated
// instances, transport jobs, the job payload returned to polling workers,
// and audit events. Everything here is a plain value; no I/O.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "agm/time.hpp"

namespace agm {

inline constexpr std::string_view kInfeedType = "infeed";
inline constexpr std::string_view kOutfeedType = "outfeed";

struct Pose3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double yaw = 0.0;  // radians, [-pi, pi)

  friend bool operator==(const Pose3&, const Pose3&) = default;
};

/// Wraps an angle into [-pi, pi).
double normalize_yaw(double yaw);
bool is_valid(const Pose3& p);

/// Euclidean distance over (x, y, z); yaw does not contribute.
double pose_distance(const Pose3& a, const Pose3& b);

enum class WorkerStatus { idle, assigned, working, charging, offline };

struct Worker {
  std::string id;
  std::string name;
  std::string worker_group;
  WorkerStatus status = WorkerStatus::idle;
  Pose3 pose;
  double battery = 1.0;
  Timestamp last_seen{};
  std::string address;
  int port = 0;

  friend bool operator==(const Worker&, const Worker&) = default;
};

enum class StationState { free, occupied, down };

struct Workstation {
  std::string id;
  std::string name;
  std::string station_type;
  Pose3 pose;
  int capacity = 1;
  StationState state = StationState::free;
  int occupancy = 0;

  bool has_free_slot() const { return state != StationState::down && occupancy < capacity; }

  friend bool operator==(const Workstation&, const Workstation&) = default;
};

/// State implied by occupancy, unless the station is down.
StationState derive_state(const Workstation& ws);

struct RoutingStep {
  int index = 0;
  std::string operation_name;
  std::string station_type;
  std::string worker_group;
  double process_duration = 0.0;  // seconds
  int priority = 0;               // higher is more urgent

  friend bool operator==(const RoutingStep&, const RoutingStep&) = default;
};

struct Routing {
  std::string id;
  std::string part_number;
  std::string customer;
  std::vector<RoutingStep> steps;
  bool active = false;

  int last_index() const { return static_cast<int>(steps.size()) - 1; }

  friend bool operator==(const Routing&, const Routing&) = default;
};

struct RoutingViolation {
  std::optional<int> step;  // empty for routing-level violations
  std::string message;

  friend bool operator==(const RoutingViolation&, const RoutingViolation&) = default;
};

/// Lists every broken routing invariant; an empty result means the routing
/// can be activated against the given station types and worker groups.
std::vector<RoutingViolation> validate_routing(const Routing& r,
                                               const std::set<std::string>& known_station_types,
                                               const std::set<std::string>& known_worker_groups);

enum class InstancePhase { awaiting_transport, in_transit, processing, completed };

/// One activated execution of a routing. `current_step` is the step the part
/// is waiting to be carried to, travelling to, or being processed at.
struct RoutingInstance {
  std::string id;
  std::string routing_id;
  int current_step = 0;
  InstancePhase phase = InstancePhase::awaiting_transport;
  std::string location;  // workstation id, or worker id while carried
  Timestamp created_at{};
  std::optional<Timestamp> completed_at;

  friend bool operator==(const RoutingInstance&, const RoutingInstance&) = default;
};

/// Moves a finished processing step forward: the next step awaits
/// transport, or the instance completes at the last step.
/// Throws StateConflict unless `inst.phase` is processing.
RoutingInstance advance_step(const RoutingInstance& inst, const Routing& routing, Timestamp now);

enum class JobPhase { assigned, en_route_to_source, carrying, delivered };

struct Job {
  std::string id;
  std::string worker_id;
  std::string instance_id;
  int step_index = 0;
  Pose3 source;
  Pose3 destination;
  std::string source_station;
  std::string destination_station;
  Timestamp assigned_at{};
  JobPhase phase = JobPhase::assigned;

  friend bool operator==(const Job&, const Job&) = default;
};

/// What a polling worker receives. status 0 carries nothing else.
struct JobPayload {
  int status = 0;
  std::string job_id;
  Pose3 source;
  Pose3 destination;
  std::string operation_name;
  std::string instance_id;
  std::string part_number;

  static JobPayload none() { return {}; }

  friend bool operator==(const JobPayload&, const JobPayload&) = default;
};

enum class AuditKind { task_assigned, worker_activity, workstation_state, routing_activated, routing_completed };

struct AuditEvent {
  std::uint64_t seq = 0;
  Timestamp timestamp{};
  AuditKind kind = AuditKind::worker_activity;
  std::string subject_id;
  nlohmann::json payload = nlohmann::json::object();

  friend bool operator==(const AuditEvent&, const AuditEvent&) = default;
};

// Enum <-> wire string. Strings are the lowercase snake_case enumerator names.
std::string_view to_string(WorkerStatus v);
std::string_view to_string(StationState v);
std::string_view to_string(InstancePhase v);
std::string_view to_string(JobPhase v);
std::string_view to_string(AuditKind v);

template <typename E>
std::optional<E> enum_from_string(std::string_view s);

template <>
std::optional<WorkerStatus> enum_from_string<WorkerStatus>(std::string_view s);
template <>
std::optional<StationState> enum_from_string<StationState>(std::string_view s);
template <>
std::optional<InstancePhase> enum_from_string<InstancePhase>(std::string_view s);
template <>
std::optional<JobPhase> enum_from_string<JobPhase>(std::string_view s);
template <>
std::optional<AuditKind> enum_from_string<AuditKind>(std::string_view s);

}  // namespace agm
