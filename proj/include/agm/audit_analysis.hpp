#pragma once

// Offline checks over an audit log. Used by the simulator tooling and the
// test suites; none of this runs on the request path.

#include <map>
#include <string>
#include <vector>

#include "agm/domain.hpp"

namespace agm {

struct ProjectedInstance {
  std::string routing_id;
  InstancePhase phase = InstancePhase::awaiting_transport;
  int current_step = 0;
  bool cancelled = false;

  friend bool operator==(const ProjectedInstance&, const ProjectedInstance&) = default;
};

/// Folds the log into instance phases. Cancelled instances stay in the map
/// with `cancelled` set.
std::map<std::string, ProjectedInstance> project_instances(const std::vector<AuditEvent>& events);

/// A routing step assigned twice without a reclaim or cancel in between.
std::vector<std::string> check_mutual_exclusion(const std::vector<AuditEvent>& events);

/// Recorded occupancy must stay within [0, capacity] on every event. With
/// `serial` set the occupancy is also rebuilt by counting reservations and
/// releases in log order, which is exact only when requests were serialized.
std::vector<std::string> check_capacity(const std::vector<AuditEvent>& events,
                                        const std::map<std::string, int>& capacity, bool serial);

/// Per instance and step: task_assigned, any worker activity, then processing
/// started and finished, in step order, at a station of the step's type.
std::vector<std::string> check_instance_traces(const std::vector<AuditEvent>& events,
                                               const std::map<std::string, Routing>& routings,
                                               const std::map<std::string, std::string>& station_types);

/// Station types where each instance started processing, in log order.
std::map<std::string, std::vector<std::string>> station_visit_order(
    const std::vector<AuditEvent>& events, const std::map<std::string, std::string>& station_types);

}  // namespace agm
