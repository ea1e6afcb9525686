#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "agm/domain.hpp"
#include "agm/error.hpp"
#include "agm/repository.hpp"
#include "agm/scheduler.hpp"
#include "agm/time.hpp"

namespace agm {

/// A routing failed validation; carries every violation found.
class RoutingInvalid : public ValidationError {
 public:
  explicit RoutingInvalid(std::vector<RoutingViolation> v)
      : ValidationError("routing failed validation"), violations(std::move(v)) {}
  std::vector<RoutingViolation> violations;
};

/// In-band verdict of the worker protocol endpoints.
struct ProtocolResult {
  int status = 0;
  std::string reason;

  static ProtocolResult ok() { return {1, {}}; }
  static ProtocolResult rejected(std::string why) { return {0, std::move(why)}; }
};

struct ProgressReport {
  std::string key;
  std::string job_id;
  JobPhase phase = JobPhase::assigned;
  Pose3 pose;
  double battery = 1.0;
};

/// Summary of the repairs made by FleetService::recover().
struct RecoveryReport {
  int orphan_jobs_removed = 0;
  int completions_finished = 0;
  int claims_rolled_back = 0;
  int timers_rearmed = 0;
  int timers_removed = 0;
  int occupancy_fixed = 0;
  int workers_fixed = 0;
  int audit_events_added = 0;

  int total() const {
    return orphan_jobs_removed + completions_finished + claims_rolled_back + timers_rearmed + timers_removed +
           occupancy_fixed + workers_fixed + audit_events_added;
  }
};

/// Fleet operations behind the HTTP surface: polling, progress and
/// completion, routing activation, processing timers, stale-job reclaim and
/// crash recovery. Every state change lands in the document store and the
/// audit log; the time source is injected.
class FleetService {
 public:
  FleetService(std::shared_ptr<DocumentStore> store, std::shared_ptr<const Clock> clock, SchedulerConfig cfg = {},
               std::string org_id = {});

  Repository& world() { return world_; }
  const Repository& world() const { return world_; }
  Scheduler& scheduler() { return scheduler_; }
  const Clock& clock() const { return *clock_; }
  Timestamp now() const { return clock_->now(); }

  /// workerGetNextJob: refreshes last_seen, then runs the scheduler.
  JobPayload poll(std::string_view worker_key);

  ProtocolResult report_progress(const ProgressReport& report);
  ProtocolResult complete_job(std::string_view key, std::string_view job_id);

  /// Creates `quantity` instances at step 0 awaiting transport at the infeed.
  /// Throws NotFound, ValidationError (quantity < 1 or invalid routing).
  std::vector<std::string> activate_routing(std::string_view routing_id, int quantity);

  /// Removes an unfinished instance, releasing its job, timer and reservation.
  /// Throws NotFound, or StateConflict for a completed instance.
  void cancel_instance(std::string_view instance_id);

  /// Fires due processing timers and reclaims stale jobs at the current time.
  void tick();
  int fire_due_timers(Timestamp now);

  /// Routing invariants against the registered station types and worker groups.
  std::vector<RoutingViolation> check_routing(const Routing& r) const;

  /// Repairs partially applied multi-document operations after a crash.
  RecoveryReport recover();

 private:
  std::set<std::string> known_station_types() const;
  std::set<std::string> known_worker_groups() const;

  std::shared_ptr<const Clock> clock_;
  Repository world_;
  Scheduler scheduler_;
  std::mutex timer_mu_;
};

int phase_rank(JobPhase p);

}  // namespace agm
