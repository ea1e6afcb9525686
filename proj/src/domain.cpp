#include "agm/domain.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <utility>

#include "agm/error.hpp"

namespace agm {

double normalize_yaw(double yaw) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(yaw + std::numbers::pi, two_pi);
  if (r < 0) r += two_pi;
  r -= std::numbers::pi;
  // fmod can land exactly on +pi after the shift due to rounding.
  if (r >= std::numbers::pi) r -= two_pi;
  return r;
}

bool is_valid(const Pose3& p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z) && std::isfinite(p.yaw) &&
         p.yaw >= -std::numbers::pi && p.yaw < std::numbers::pi;
}

double pose_distance(const Pose3& a, const Pose3& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

StationState derive_state(const Workstation& ws) {
  if (ws.state == StationState::down) return StationState::down;
  return ws.occupancy >= ws.capacity ? StationState::occupied : StationState::free;
}

std::vector<RoutingViolation> validate_routing(const Routing& r,
                                               const std::set<std::string>& known_station_types,
                                               const std::set<std::string>& known_worker_groups) {
  std::vector<RoutingViolation> out;
  if (r.steps.empty()) {
    out.push_back({std::nullopt, "empty steps"});
    return out;
  }
  for (std::size_t i = 0; i < r.steps.size(); ++i) {
    const auto& s = r.steps[i];
    const int pos = static_cast<int>(i);
    if (s.index != pos) {
      out.push_back({pos, "step " + std::to_string(pos) + ": index " + std::to_string(s.index) +
                              " breaks the contiguous 0..n-1 sequence"});
    }
    if (!known_station_types.contains(s.station_type)) {
      out.push_back({pos, "step " + std::to_string(pos) + ": unknown station_type '" + s.station_type + "'"});
    }
    if (!known_worker_groups.contains(s.worker_group)) {
      out.push_back({pos, "step " + std::to_string(pos) + ": unknown worker_group '" + s.worker_group + "'"});
    }
    if (!(s.process_duration >= 0.0) || !std::isfinite(s.process_duration)) {
      out.push_back({pos, "step " + std::to_string(pos) + ": process_duration must be a finite value >= 0"});
    }
  }
  if (r.steps.front().station_type != kInfeedType) {
    out.push_back({0, "step 0: first step must use an infeed station"});
  }
  if (r.steps.back().station_type != kOutfeedType) {
    const int last = r.last_index();
    out.push_back({last, "step " + std::to_string(last) + ": last step must use an outfeed station"});
  }
  return out;
}

RoutingInstance advance_step(const RoutingInstance& inst, const Routing& routing, Timestamp now) {
  if (inst.phase != InstancePhase::processing) {
    throw StateConflict("instance " + inst.id + " is " + std::string(to_string(inst.phase)) +
                        ", expected processing");
  }
  if (inst.current_step < 0 || inst.current_step > routing.last_index()) {
    throw StateConflict("instance " + inst.id + " step " + std::to_string(inst.current_step) +
                        " outside routing " + routing.id);
  }
  RoutingInstance next = inst;
  if (inst.current_step < routing.last_index()) {
    next.current_step += 1;
    next.phase = InstancePhase::awaiting_transport;
  } else {
    next.phase = InstancePhase::completed;
    next.completed_at = now;
  }
  return next;
}

namespace {

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::pair<E, std::string_view>, N>& table, std::string_view s) {
  for (const auto& [e, name] : table) {
    if (name == s) return e;
  }
  return std::nullopt;
}

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E v) {
  for (const auto& [e, name] : table) {
    if (e == v) return name;
  }
  return "unknown";
}

constexpr std::array<std::pair<WorkerStatus, std::string_view>, 5> kWorkerStatus{{
    {WorkerStatus::idle, "idle"},
    {WorkerStatus::assigned, "assigned"},
    {WorkerStatus::working, "working"},
    {WorkerStatus::charging, "charging"},
    {WorkerStatus::offline, "offline"},
}};

constexpr std::array<std::pair<StationState, std::string_view>, 3> kStationState{{
    {StationState::free, "free"},
    {StationState::occupied, "occupied"},
    {StationState::down, "down"},
}};

constexpr std::array<std::pair<InstancePhase, std::string_view>, 4> kInstancePhase{{
    {InstancePhase::awaiting_transport, "awaiting_transport"},
    {InstancePhase::in_transit, "in_transit"},
    {InstancePhase::processing, "processing"},
    {InstancePhase::completed, "completed"},
}};

constexpr std::array<std::pair<JobPhase, std::string_view>, 4> kJobPhase{{
    {JobPhase::assigned, "assigned"},
    {JobPhase::en_route_to_source, "en_route_to_source"},
    {JobPhase::carrying, "carrying"},
    {JobPhase::delivered, "delivered"},
}};

constexpr std::array<std::pair<AuditKind, std::string_view>, 5> kAuditKind{{
    {AuditKind::task_assigned, "task_assigned"},
    {AuditKind::worker_activity, "worker_activity"},
    {AuditKind::workstation_state, "workstation_state"},
    {AuditKind::routing_activated, "routing_activated"},
    {AuditKind::routing_completed, "routing_completed"},
}};

}  // namespace

std::string_view to_string(WorkerStatus v) { return name_of(kWorkerStatus, v); }
std::string_view to_string(StationState v) { return name_of(kStationState, v); }
std::string_view to_string(InstancePhase v) { return name_of(kInstancePhase, v); }
std::string_view to_string(JobPhase v) { return name_of(kJobPhase, v); }
std::string_view to_string(AuditKind v) { return name_of(kAuditKind, v); }

template <>
std::optional<WorkerStatus> enum_from_string<WorkerStatus>(std::string_view s) {
  return lookup(kWorkerStatus, s);
}
template <>
std::optional<StationState> enum_from_string<StationState>(std::string_view s) {
  return lookup(kStationState, s);
}
template <>
std::optional<InstancePhase> enum_from_string<InstancePhase>(std::string_view s) {
  return lookup(kInstancePhase, s);
}
template <>
std::optional<JobPhase> enum_from_string<JobPhase>(std::string_view s) {
  return lookup(kJobPhase, s);
}
template <>
std::optional<AuditKind> enum_from_string<AuditKind>(std::string_view s) {
  return lookup(kAuditKind, s);
}

}  // namespace agm
