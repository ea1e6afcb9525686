#include "agm/scheduler.hpp"

#include <algorithm>
#include <functional>
#include <map>

#include "agm/error.hpp"

namespace agm {

void validate(const SchedulerConfig& cfg) {
  if (!(cfg.battery_threshold >= 0.0 && cfg.battery_threshold <= 1.0)) {
    throw ValidationError("battery_threshold must be within [0, 1]");
  }
  if (cfg.claim_retry_limit < 1) throw ValidationError("claim_retry_limit must be a positive integer");
  if (!(cfg.stale_job_timeout >= 0.0)) throw ValidationError("stale_job_timeout must be >= 0");
}

void to_json(json& j, const SchedulerConfig& v) {
  j = json{{"battery_threshold", v.battery_threshold},
           {"claim_retry_limit", v.claim_retry_limit},
           {"stale_job_timeout", v.stale_job_timeout}};
}

void from_json(const json& j, SchedulerConfig& v) {
  v = SchedulerConfig{};
  v.battery_threshold = j.value("battery_threshold", v.battery_threshold);
  v.claim_retry_limit = j.value("claim_retry_limit", v.claim_retry_limit);
  v.stale_job_timeout = j.value("stale_job_timeout", v.stale_job_timeout);
  validate(v);
}

bool ranks_before(const CandidateTask& a, const CandidateTask& b, const Pose3& worker_pose) {
  if (a.priority != b.priority) return a.priority > b.priority;
  const double da = pose_distance(worker_pose, a.source_pose);
  const double db = pose_distance(worker_pose, b.source_pose);
  if (da != db) return da < db;
  if (a.created_at != b.created_at) return a.created_at < b.created_at;
  return a.instance_id < b.instance_id;
}

std::vector<CandidateTask> rank(std::vector<CandidateTask> candidates, const Worker& worker) {
  std::sort(candidates.begin(), candidates.end(),
            [&](const CandidateTask& a, const CandidateTask& b) { return ranks_before(a, b, worker.pose); });
  return candidates;
}

std::optional<std::string> assign_destination(const RoutingStep& step, const std::vector<Workstation>& stations) {
  const Workstation* best = nullptr;
  for (const auto& ws : stations) {
    if (ws.station_type != step.station_type || !ws.has_free_slot()) continue;
    if (best == nullptr || ws.occupancy < best->occupancy || (ws.occupancy == best->occupancy && ws.id < best->id)) {
      best = &ws;
    }
  }
  if (best == nullptr) return std::nullopt;
  return best->id;
}

std::optional<std::string> assign_destination(const RoutingStep& step, const Repository& world) {
  std::vector<Workstation> pool;
  for (auto& v : world.list<Workstation>(Query{}.where("station_type", step.station_type))) {
    pool.push_back(std::move(v.value));
  }
  return assign_destination(step, pool);
}

std::vector<CandidateTask> eligible_tasks(const Worker& worker, const Repository& world) {
  std::vector<CandidateTask> out;
  auto waiting = world.list<RoutingInstance>(Query{}.where("phase", to_string(InstancePhase::awaiting_transport)));
  if (waiting.empty()) return out;

  std::vector<Workstation> stations;
  std::map<std::string, Workstation, std::less<>> by_id;
  for (auto& v : world.list<Workstation>()) {
    by_id.emplace(v.value.id, v.value);
    stations.push_back(std::move(v.value));
  }
  std::map<std::string, std::optional<Routing>, std::less<>> routings;

  for (const auto& [inst, version] : waiting) {
    auto rit = routings.find(inst.routing_id);
    if (rit == routings.end()) {
      auto r = world.load<Routing>(inst.routing_id);
      rit = routings.emplace(inst.routing_id, r ? std::optional<Routing>(r->value) : std::nullopt).first;
    }
    if (!rit->second) continue;
    const Routing& routing = *rit->second;
    if (inst.current_step < 0 || inst.current_step > routing.last_index()) continue;
    const RoutingStep& step = routing.steps[static_cast<std::size_t>(inst.current_step)];
    if (step.worker_group != worker.worker_group) continue;
    auto source = by_id.find(inst.location);
    if (source == by_id.end()) continue;
    auto dest = assign_destination(step, stations);
    if (!dest) continue;

    CandidateTask c;
    c.instance_id = inst.id;
    c.step_index = inst.current_step;
    c.priority = step.priority;
    c.source_station = source->second.id;
    c.source_pose = source->second.pose;
    c.destination_station = *dest;
    c.destination_pose = by_id.at(*dest).pose;
    c.created_at = inst.created_at;
    out.push_back(std::move(c));
  }
  return out;
}

std::optional<Versioned<Job>> active_job_for_worker(const Repository& world, std::string_view worker_id) {
  auto jobs = world.list<Job>(Query{}
                                  .where("worker_id", std::string(worker_id))
                                  .where("phase", FilterOp::ne, to_string(JobPhase::delivered)));
  if (!jobs.empty()) return jobs.front();
  // A job reported delivered stays held until workerJobComplete moves the
  // part into processing. Only the newest job of a worker can be in that state.
  auto delivered = world.list<Job>(Query{}.where("worker_id", std::string(worker_id)));
  if (delivered.empty()) return std::nullopt;
  const auto& last = delivered.back();
  auto inst = world.load<RoutingInstance>(last.value.instance_id);
  if (inst && inst->value.phase == InstancePhase::in_transit && inst->value.current_step == last.value.step_index) {
    return last;
  }
  return std::nullopt;
}

std::optional<Workstation> adjust_occupancy(Repository& world, std::string_view station_id, int delta) {
  for (;;) {
    auto cur = world.load<Workstation>(station_id);
    if (!cur) return std::nullopt;
    Workstation ws = cur->value;
    if (delta > 0 && (ws.state == StationState::down || ws.occupancy + delta > ws.capacity)) return std::nullopt;
    ws.occupancy = std::clamp(ws.occupancy + delta, 0, ws.capacity);
    ws.state = derive_state(ws);
    try {
      world.save(ws, cur->version);
      return ws;
    } catch (const VersionConflict&) {
    }
  }
}

Scheduler::Scheduler(Repository& world, SchedulerConfig cfg) : world_(world), cfg_(cfg) { validate(cfg_); }

std::mutex& Scheduler::worker_lock(std::string_view worker_id) {
  return worker_locks_[std::hash<std::string_view>{}(worker_id) % worker_locks_.size()];
}

JobPayload Scheduler::payload_for(const Job& job) const {
  JobPayload p;
  p.status = 1;
  p.job_id = job.id;
  p.source = job.source;
  p.destination = job.destination;
  p.instance_id = job.instance_id;
  if (auto inst = world_.load<RoutingInstance>(job.instance_id)) {
    if (auto routing = world_.load<Routing>(inst->value.routing_id)) {
      p.part_number = routing->value.part_number;
      const auto& steps = routing->value.steps;
      if (job.step_index >= 0 && job.step_index < static_cast<int>(steps.size())) {
        p.operation_name = steps[static_cast<std::size_t>(job.step_index)].operation_name;
      }
    }
  }
  return p;
}

JobPayload Scheduler::select_next_job(std::string_view worker_key, Timestamp now) {
  std::lock_guard guard(worker_lock(worker_key));

  auto worker = world_.load<Worker>(worker_key);
  if (!worker) return JobPayload::none();

  if (auto held = active_job_for_worker(world_, worker_key)) return payload_for(held->value);

  if (worker->value.battery < cfg_.battery_threshold) {
    if (worker->value.status != WorkerStatus::charging) {
      update_with_retry<Worker>(world_, worker_key, [](Worker& w) { w.status = WorkerStatus::charging; });
      world_.audit(AuditKind::worker_activity, worker->value.id,
                   json{{"action", "charging"},
                        {"battery", worker->value.battery},
                        {"threshold", cfg_.battery_threshold}},
                   now);
    }
    return JobPayload::none();
  }

  for (int pass = 0; pass < cfg_.claim_retry_limit; ++pass) {
    auto fresh = world_.load<Worker>(worker_key);
    if (!fresh) return JobPayload::none();
    auto ranked = rank(eligible_tasks(fresh->value, world_), fresh->value);
    if (ranked.empty()) break;
    for (const auto& task : ranked) {
      if (auto payload = try_claim(fresh->value, task, now)) return *payload;
    }
  }

  if (worker->value.status != WorkerStatus::idle) {
    update_with_retry<Worker>(world_, worker_key, [](Worker& w) {
      if (w.status == WorkerStatus::charging || w.status == WorkerStatus::offline) w.status = WorkerStatus::idle;
    });
  }
  return JobPayload::none();
}

std::optional<JobPayload> Scheduler::try_claim(const Worker& worker, const CandidateTask& task, Timestamp now) {
  auto inst = world_.load<RoutingInstance>(task.instance_id);
  if (!inst || inst->value.phase != InstancePhase::awaiting_transport ||
      inst->value.current_step != task.step_index || inst->value.location != task.source_station) {
    return std::nullopt;
  }

  // The claim itself: whoever moves the instance out of awaiting_transport owns the step.
  RoutingInstance claimed = inst->value;
  claimed.phase = InstancePhase::in_transit;
  std::uint64_t claimed_version;
  try {
    claimed_version = world_.save(claimed, inst->version);
  } catch (const VersionConflict&) {
    return std::nullopt;
  }

  auto reserved = adjust_occupancy(world_, task.destination_station, +1);
  if (!reserved) {
    try {
      world_.save(inst->value, claimed_version);
    } catch (const VersionConflict&) {
      // Someone else touched the instance meanwhile; recovery reconciles it.
    }
    return std::nullopt;
  }

  Job job;
  job.id = world_.next_id("job");
  job.worker_id = worker.id;
  job.instance_id = task.instance_id;
  job.step_index = task.step_index;
  job.source = task.source_pose;
  job.destination = task.destination_pose;
  job.source_station = task.source_station;
  job.destination_station = task.destination_station;
  job.assigned_at = now;
  job.phase = JobPhase::assigned;
  world_.save(job, std::nullopt);

  update_with_retry<Worker>(world_, worker.id, [](Worker& w) { w.status = WorkerStatus::assigned; });

  world_.audit(AuditKind::task_assigned, worker.id,
               json{{"job_id", job.id},
                    {"worker_id", worker.id},
                    {"instance_id", job.instance_id},
                    {"step_index", job.step_index},
                    {"priority", task.priority},
                    {"source_station", job.source_station},
                    {"destination_station", job.destination_station},
                    {"station", job.destination_station},
                    {"occupancy", reserved->occupancy},
                    {"capacity", reserved->capacity}},
               now);
  return payload_for(job);
}

std::vector<std::string> Scheduler::reclaim_stale_jobs(Timestamp now) {
  std::vector<std::string> reclaimed;
  auto open_jobs = world_.list<Job>(Query{}.where("phase", FilterOp::ne, to_string(JobPhase::delivered)));
  for (const auto& [job, job_version] : open_jobs) {
    std::lock_guard guard(worker_lock(job.worker_id));
    auto worker = world_.load<Worker>(job.worker_id);
    if (worker && seconds_between(worker->value.last_seen, now) <= cfg_.stale_job_timeout) continue;

    // Re-check under the worker lock; the job may have moved on.
    auto current = world_.load<Job>(job.id);
    if (!current || current->value.phase == JobPhase::delivered) continue;

    auto inst = world_.load<RoutingInstance>(job.instance_id);
    if (inst && inst->value.phase == InstancePhase::in_transit && inst->value.current_step == job.step_index) {
      RoutingInstance back = inst->value;
      back.phase = InstancePhase::awaiting_transport;
      back.location = job.source_station;
      try {
        world_.save(back, inst->version);
      } catch (const VersionConflict&) {
        continue;
      }
    }
    auto released = adjust_occupancy(world_, job.destination_station, -1);
    try {
      world_.erase<Job>(job.id, current->version);
    } catch (const Error&) {
    }
    if (worker) {
      update_with_retry<Worker>(world_, job.worker_id, [](Worker& w) { w.status = WorkerStatus::offline; });
    }
    world_.audit(AuditKind::worker_activity, job.worker_id,
                 json{{"action", "job_reclaimed"},
                      {"job_id", job.id},
                      {"instance_id", job.instance_id},
                      {"step_index", job.step_index},
                      {"station", job.destination_station},
                      {"occupancy", released ? json(released->occupancy) : json(nullptr)},
                      {"capacity", released ? json(released->capacity) : json(nullptr)}},
                 now);
    reclaimed.push_back(job.id);
  }
  return reclaimed;
}

}  // namespace agm
