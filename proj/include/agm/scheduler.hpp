#pragma once

// Task selection for polling workers.
//
// A worker that asks for work gets, in order: nothing if its key is unknown;
// its current job again if it already holds one; nothing if its battery is
// under the threshold (and it is marked charging); otherwise the best
// eligible transport, claimed with a compare-and-swap on the instance so
// that no two workers ever get the same step.
//
// "Best" is a total order: higher step priority, then shorter distance from
// the worker to the pickup, then older instance, then smaller instance id.

#include <array>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "agm/domain.hpp"
#include "agm/repository.hpp"

namespace agm {

struct SchedulerConfig {
  double battery_threshold = 0.20;
  int claim_retry_limit = 3;
  double stale_job_timeout = 300.0;  // seconds

  friend bool operator==(const SchedulerConfig&, const SchedulerConfig&) = default;
};

/// Throws ValidationError when a field is out of range.
void validate(const SchedulerConfig& cfg);

void to_json(json& j, const SchedulerConfig& v);
void from_json(const json& j, SchedulerConfig& v);

struct CandidateTask {
  std::string instance_id;
  int step_index = 0;
  int priority = 0;
  std::string source_station;
  std::string destination_station;
  Pose3 source_pose;
  Pose3 destination_pose;
  Timestamp created_at{};

  friend bool operator==(const CandidateTask&, const CandidateTask&) = default;
};

/// Strict weak order used by rank(): true when `a` should be served before `b`
/// by a worker standing at `worker_pose`.
bool ranks_before(const CandidateTask& a, const CandidateTask& b, const Pose3& worker_pose);

std::vector<CandidateTask> rank(std::vector<CandidateTask> candidates, const Worker& worker);

/// Free, non-down station of the step's type with the lowest occupancy;
/// ties go to the lexicographically smallest id.
std::optional<std::string> assign_destination(const RoutingStep& step, const std::vector<Workstation>& stations);
std::optional<std::string> assign_destination(const RoutingStep& step, const Repository& world);

/// Instances awaiting transport whose current step matches the worker's
/// group and whose destination pool has room. Expects an idle worker.
std::vector<CandidateTask> eligible_tasks(const Worker& worker, const Repository& world);

class Scheduler {
 public:
  Scheduler(Repository& world, SchedulerConfig cfg);

  const SchedulerConfig& config() const { return cfg_; }

  JobPayload select_next_job(std::string_view worker_key, Timestamp now);

  /// Cancels non-delivered jobs whose worker has been silent for longer than
  /// the stale timeout. Returns the reclaimed job ids.
  std::vector<std::string> reclaim_stale_jobs(Timestamp now);

  /// Payload describing an existing job (used for idempotent re-polls).
  JobPayload payload_for(const Job& job) const;

  /// Serializes operations that must not interleave for one worker.
  std::mutex& worker_lock(std::string_view worker_id);

 private:
  std::optional<JobPayload> try_claim(const Worker& worker, const CandidateTask& task, Timestamp now);

  Repository& world_;
  SchedulerConfig cfg_;
  std::array<std::mutex, 64> worker_locks_;
};

/// The non-delivered job held by `worker_id`, if any.
std::optional<Versioned<Job>> active_job_for_worker(const Repository& world, std::string_view worker_id);

/// Adds `delta` to a station's occupancy with a CAS retry loop. Returns the
/// updated station, or nothing when a reservation (delta > 0) does not fit.
std::optional<Workstation> adjust_occupancy(Repository& world, std::string_view station_id, int delta);

/// Re-reads and rewrites a document until the CAS succeeds.
template <typename T, typename Mutate>
std::optional<T> update_with_retry(Repository& world, std::string_view id, Mutate&& mutate) {
  for (;;) {
    auto cur = world.load<T>(id);
    if (!cur) return std::nullopt;
    T next = cur->value;
    mutate(next);
    try {
      world.save(next, cur->version);
      return next;
    } catch (const VersionConflict&) {
    }
  }
}

}  // namespace agm
