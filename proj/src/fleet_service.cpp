#include "agm/fleet_service.hpp"

#include <algorithm>
#include <map>
#include <utility>

#include "agm/error.hpp"

namespace agm {

int phase_rank(JobPhase p) {
  switch (p) {
    case JobPhase::assigned: return 0;
    case JobPhase::en_route_to_source: return 1;
    case JobPhase::carrying: return 2;
    case JobPhase::delivered: return 3;
  }
  return 0;
}

namespace {

json station_fields(const Workstation& ws) {
  return json{{"station", ws.id}, {"occupancy", ws.occupancy}, {"capacity", ws.capacity},
              {"state", to_string(ws.state)}};
}

json merge(json a, const json& b) {
  for (auto it = b.begin(); it != b.end(); ++it) a[it.key()] = it.value();
  return a;
}

}  // namespace

FleetService::FleetService(std::shared_ptr<DocumentStore> store, std::shared_ptr<const Clock> clock,
                           SchedulerConfig cfg, std::string org_id)
    : clock_(std::move(clock)), world_(std::move(store), std::move(org_id)), scheduler_(world_, cfg) {}

JobPayload FleetService::poll(std::string_view worker_key) {
  const Timestamp now = clock_->now();
  {
    std::lock_guard guard(scheduler_.worker_lock(worker_key));
    auto touched = update_with_retry<Worker>(world_, worker_key, [&](Worker& w) { w.last_seen = now; });
    if (!touched) return JobPayload::none();
  }
  return scheduler_.select_next_job(worker_key, now);
}

ProtocolResult FleetService::report_progress(const ProgressReport& report) {
  const Timestamp now = clock_->now();
  if (!is_valid(report.pose)) return ProtocolResult::rejected("pose is not finite");
  if (!(report.battery >= 0.0 && report.battery <= 1.0)) return ProtocolResult::rejected("battery outside [0, 1]");

  std::lock_guard guard(scheduler_.worker_lock(report.key));
  auto job = world_.load<Job>(report.job_id);
  if (!job || job->value.worker_id != report.key) return ProtocolResult::rejected("unknown job for this worker");
  if (job->value.phase == JobPhase::delivered) {
    auto inst = world_.load<RoutingInstance>(job->value.instance_id);
    const bool awaiting_completion = inst && inst->value.phase == InstancePhase::in_transit &&
                                     inst->value.current_step == job->value.step_index;
    if (!awaiting_completion) return ProtocolResult::rejected("job already completed");
    if (report.phase != JobPhase::delivered) return ProtocolResult::rejected("phase regression from delivered");
  }
  if (phase_rank(report.phase) < phase_rank(job->value.phase)) {
    return ProtocolResult::rejected("phase regression from " + std::string(to_string(job->value.phase)) + " to " +
                                    std::string(to_string(report.phase)));
  }

  if (report.phase != job->value.phase) {
    Job next = job->value;
    next.phase = report.phase;
    try {
      world_.save(next, job->version);
    } catch (const VersionConflict&) {
      return ProtocolResult::rejected("job changed concurrently");
    }
  }
  if (phase_rank(report.phase) >= phase_rank(JobPhase::carrying)) {
    update_with_retry<RoutingInstance>(world_, job->value.instance_id, [&](RoutingInstance& inst) {
      if (inst.phase == InstancePhase::in_transit && inst.current_step == job->value.step_index) {
        inst.location = report.key;
      }
    });
  }
  update_with_retry<Worker>(world_, report.key, [&](Worker& w) {
    w.pose = report.pose;
    w.battery = report.battery;
    w.last_seen = now;
    w.status = report.phase == JobPhase::assigned ? WorkerStatus::assigned : WorkerStatus::working;
  });
  world_.audit(AuditKind::worker_activity, report.key,
               json{{"action", "progress"},
                    {"job_id", report.job_id},
                    {"instance_id", job->value.instance_id},
                    {"step_index", job->value.step_index},
                    {"phase", to_string(report.phase)},
                    {"pose", report.pose},
                    {"battery", report.battery}},
               now);
  return ProtocolResult::ok();
}

ProtocolResult FleetService::complete_job(std::string_view key, std::string_view job_id) {
  const Timestamp now = clock_->now();
  {
    std::lock_guard guard(scheduler_.worker_lock(key));
    auto job = world_.load<Job>(job_id);
    if (!job || job->value.worker_id != key) return ProtocolResult::rejected("unknown job for this worker");
    auto inst = world_.load<RoutingInstance>(job->value.instance_id);
    const bool in_transit = inst && inst->value.phase == InstancePhase::in_transit &&
                            inst->value.current_step == job->value.step_index;
    if (!in_transit) {
      return ProtocolResult::rejected(job->value.phase == JobPhase::delivered ? "job already completed"
                                                                                : "instance is not in transit");
    }
    auto routing = world_.load<Routing>(inst->value.routing_id);
    if (!routing || job->value.step_index > routing->value.last_index()) {
      return ProtocolResult::rejected("routing for this job no longer exists");
    }
    const RoutingStep& step = routing->value.steps[static_cast<std::size_t>(job->value.step_index)];

    if (job->value.phase != JobPhase::delivered) {
      Job delivered = job->value;
      delivered.phase = JobPhase::delivered;
      try {
        world_.save(delivered, job->version);
      } catch (const VersionConflict&) {
        return ProtocolResult::rejected("job changed concurrently");
      }
    }

    ProcessingTimer timer{inst->value.id, job->value.step_index, job->value.destination_station,
                          add_seconds(now, step.process_duration)};
    if (auto existing = world_.load<ProcessingTimer>(timer.instance_id)) {
      world_.save(timer, existing->version);
    } else {
      world_.save(timer, std::nullopt);
    }

    RoutingInstance processing = inst->value;
    processing.phase = InstancePhase::processing;
    processing.location = job->value.destination_station;
    try {
      world_.save(processing, inst->version);
    } catch (const VersionConflict&) {
      // Only the carrying-location update can race here, and it is ours.
      update_with_retry<RoutingInstance>(world_, processing.id, [&](RoutingInstance& i) {
        i.phase = InstancePhase::processing;
        i.location = job->value.destination_station;
      });
    }

    update_with_retry<Worker>(world_, key, [&](Worker& w) {
      w.status = WorkerStatus::idle;
      w.last_seen = now;
    });

    world_.audit(AuditKind::worker_activity, std::string(key),
                 json{{"action", "job_completed"},
                      {"job_id", job->value.id},
                      {"instance_id", job->value.instance_id},
                      {"step_index", job->value.step_index}},
                 now);
    auto ws = world_.load<Workstation>(job->value.destination_station);
    json detail{{"action", "processing_started"},
                {"job_id", job->value.id},
                {"instance_id", job->value.instance_id},
                {"step_index", job->value.step_index},
                {"station_type", step.station_type},
                {"process_duration", step.process_duration}};
    if (ws) detail = merge(detail, station_fields(ws->value));
    world_.audit(AuditKind::workstation_state, job->value.destination_station, std::move(detail), now);
  }
  fire_due_timers(now);
  return ProtocolResult::ok();
}

int FleetService::fire_due_timers(Timestamp now) {
  std::lock_guard guard(timer_mu_);
  auto timers = world_.list<ProcessingTimer>();
  std::sort(timers.begin(), timers.end(), [](const auto& a, const auto& b) {
    if (a.value.due_at != b.value.due_at) return a.value.due_at < b.value.due_at;
    return a.value.instance_id < b.value.instance_id;
  });
  int fired = 0;
  for (const auto& [timer, timer_version] : timers) {
    if (timer.due_at > now) break;
    auto inst = world_.load<RoutingInstance>(timer.instance_id);
    auto routing = inst ? world_.load<Routing>(inst->value.routing_id) : std::nullopt;
    if (!inst || !routing || inst->value.phase != InstancePhase::processing ||
        inst->value.current_step != timer.step_index) {
      world_.erase<ProcessingTimer>(timer.instance_id);
      continue;
    }
    const RoutingInstance next = advance_step(inst->value, routing->value, now);
    try {
      world_.save(next, inst->version);
    } catch (const VersionConflict&) {
      continue;  // retried on the next tick
    }
    auto released = adjust_occupancy(world_, timer.station_id, -1);
    world_.erase<ProcessingTimer>(timer.instance_id);

    json detail{{"action", "processing_finished"}, {"instance_id", timer.instance_id}, {"step_index", timer.step_index}};
    if (released) detail = merge(detail, station_fields(*released));
    world_.audit(AuditKind::workstation_state, timer.station_id, std::move(detail), now);
    if (next.phase == InstancePhase::completed) {
      world_.audit(AuditKind::routing_completed, next.id,
                   json{{"outcome", "completed"},
                        {"routing_id", next.routing_id},
                        {"part_number", routing->value.part_number},
                        {"created_at", format_timestamp(next.created_at)}},
                   now);
    }
    ++fired;
  }
  return fired;
}

void FleetService::tick() {
  const Timestamp now = clock_->now();
  fire_due_timers(now);
  scheduler_.reclaim_stale_jobs(now);
}

std::set<std::string> FleetService::known_station_types() const {
  std::set<std::string> out;
  for (const auto& v : world_.list<Workstation>()) out.insert(v.value.station_type);
  return out;
}

std::set<std::string> FleetService::known_worker_groups() const {
  std::set<std::string> out;
  for (const auto& v : world_.list<Worker>()) out.insert(v.value.worker_group);
  return out;
}

std::vector<RoutingViolation> FleetService::check_routing(const Routing& r) const {
  return validate_routing(r, known_station_types(), known_worker_groups());
}

std::vector<std::string> FleetService::activate_routing(std::string_view routing_id, int quantity) {
  if (quantity < 1) throw ValidationError("quantity must be >= 1");
  auto routing = world_.load<Routing>(routing_id);
  if (!routing) throw NotFound("routing " + std::string(routing_id) + " not found");
  if (auto violations = check_routing(routing->value); !violations.empty()) throw RoutingInvalid(std::move(violations));

  const std::string& infeed_type = routing->value.steps.front().station_type;
  auto infeeds = world_.list<Workstation>(Query{}.where("station_type", infeed_type));
  if (infeeds.empty()) throw RoutingInvalid({{0, "step 0: no station of type '" + infeed_type + "' registered"}});
  const std::string infeed = infeeds.front().value.id;  // list() is ordered by id

  const Timestamp now = clock_->now();
  std::vector<std::string> ids;
  for (int i = 0; i < quantity; ++i) {
    RoutingInstance inst;
    inst.id = world_.next_id("inst");
    inst.routing_id = routing->value.id;
    inst.current_step = 0;
    inst.phase = InstancePhase::awaiting_transport;
    inst.location = infeed;
    inst.created_at = now;
    world_.save(inst, std::nullopt);
    ids.push_back(inst.id);
  }
  if (!routing->value.active) {
    update_with_retry<Routing>(world_, routing_id, [](Routing& r) { r.active = true; });
  }
  world_.audit(AuditKind::routing_activated, routing->value.id,
               json{{"action", "activated"},
                    {"instance_ids", ids},
                    {"quantity", quantity},
                    {"part_number", routing->value.part_number},
                    {"steps", routing->value.steps.size()}},
               now);
  return ids;
}

void FleetService::cancel_instance(std::string_view instance_id) {
  const Timestamp now = clock_->now();
  auto inst = world_.load<RoutingInstance>(instance_id);
  if (!inst) throw NotFound("instance " + std::string(instance_id) + " not found");
  if (inst->value.phase == InstancePhase::completed) {
    throw StateConflict("instance " + std::string(instance_id) + " is already completed");
  }

  // Open jobs, plus a delivered job still waiting for its completion call.
  auto jobs = world_.list<Job>(Query{}.where("instance_id", std::string(instance_id)));
  const bool in_transit = inst->value.phase == InstancePhase::in_transit;
  for (const auto& [job, version] : jobs) {
    if (job.phase == JobPhase::delivered && !(in_transit && job.step_index == inst->value.current_step)) continue;
    std::lock_guard guard(scheduler_.worker_lock(job.worker_id));
    try {
      world_.erase<Job>(job.id);
    } catch (const NotFound&) {
      continue;
    }
    auto released = adjust_occupancy(world_, job.destination_station, -1);
    update_with_retry<Worker>(world_, job.worker_id, [](Worker& w) {
      if (w.status == WorkerStatus::assigned || w.status == WorkerStatus::working) w.status = WorkerStatus::idle;
    });
    json detail{{"action", "job_cancelled"}, {"job_id", job.id}, {"instance_id", job.instance_id},
                {"step_index", job.step_index}};
    if (released) detail = merge(detail, station_fields(*released));
    world_.audit(AuditKind::worker_activity, job.worker_id, std::move(detail), now);
  }

  if (inst->value.phase == InstancePhase::processing) {
    std::lock_guard guard(timer_mu_);
    if (world_.load<ProcessingTimer>(instance_id)) world_.erase<ProcessingTimer>(instance_id);
    auto released = adjust_occupancy(world_, inst->value.location, -1);
    json detail{{"action", "processing_cancelled"}, {"instance_id", inst->value.id},
                {"step_index", inst->value.current_step}};
    if (released) detail = merge(detail, station_fields(*released));
    world_.audit(AuditKind::workstation_state, inst->value.location, std::move(detail), now);
  }

  world_.erase<RoutingInstance>(instance_id);
  world_.audit(AuditKind::routing_completed, std::string(instance_id),
               json{{"outcome", "cancelled"},
                    {"routing_id", inst->value.routing_id},
                    {"step_index", inst->value.current_step}},
               now);
}

RecoveryReport FleetService::recover() {
  RecoveryReport rep;
  const Timestamp now = clock_->now();

  std::map<std::string, RoutingInstance> instances;
  for (auto& v : world_.list<RoutingInstance>()) instances.emplace(v.value.id, std::move(v.value));
  std::map<std::string, Routing> routings;
  for (auto& v : world_.list<Routing>()) routings.emplace(v.value.id, std::move(v.value));

  auto open_job_for = [&](const std::string& instance_id, int step) -> std::optional<Job> {
    for (auto& v : world_.list<Job>(Query{}.where("instance_id", instance_id).where("step_index", step))) {
      if (v.value.phase != JobPhase::delivered) return v.value;
    }
    return std::nullopt;
  };

  // Jobs whose claim never reached the instance, or whose instance moved on.
  for (const auto& [job, version] : world_.list<Job>(Query{}.where("phase", FilterOp::ne, "delivered"))) {
    auto it = instances.find(job.instance_id);
    const bool live = it != instances.end() && it->second.phase == InstancePhase::in_transit &&
                      it->second.current_step == job.step_index;
    if (!live) {
      world_.erase<Job>(job.id);
      ++rep.orphan_jobs_removed;
    }
  }

  // Deliveries that stopped between the job and the instance update.
  for (const auto& [job, version] : world_.list<Job>(Query{}.where("phase", "delivered"))) {
    auto it = instances.find(job.instance_id);
    if (it == instances.end() || it->second.phase != InstancePhase::in_transit ||
        it->second.current_step != job.step_index || open_job_for(job.instance_id, job.step_index)) {
      continue;
    }
    auto rit = routings.find(it->second.routing_id);
    const double duration =
        rit == routings.end() ? 0.0 : rit->second.steps[static_cast<std::size_t>(job.step_index)].process_duration;
    if (!world_.load<ProcessingTimer>(job.instance_id)) {
      world_.save(ProcessingTimer{job.instance_id, job.step_index, job.destination_station,
                                  add_seconds(now, duration)},
                  std::nullopt);
    }
    auto updated = update_with_retry<RoutingInstance>(world_, job.instance_id, [&](RoutingInstance& i) {
      i.phase = InstancePhase::processing;
      i.location = job.destination_station;
    });
    if (updated) instances[job.instance_id] = *updated;
    ++rep.completions_finished;
  }

  // Claims that never produced a job.
  for (auto& [id, inst] : instances) {
    if (inst.phase != InstancePhase::in_transit || open_job_for(id, inst.current_step)) continue;
    auto updated = update_with_retry<RoutingInstance>(world_, id, [](RoutingInstance& i) {
      i.phase = InstancePhase::awaiting_transport;
    });
    if (updated) inst = *updated;
    ++rep.claims_rolled_back;
  }

  // Timers must exist exactly for processing instances.
  std::set<std::string> timer_ids;
  for (const auto& [timer, version] : world_.list<ProcessingTimer>()) {
    auto it = instances.find(timer.instance_id);
    if (it == instances.end() || it->second.phase != InstancePhase::processing ||
        it->second.current_step != timer.step_index) {
      world_.erase<ProcessingTimer>(timer.instance_id);
      ++rep.timers_removed;
    } else {
      timer_ids.insert(timer.instance_id);
    }
  }
  for (const auto& [id, inst] : instances) {
    if (inst.phase != InstancePhase::processing || timer_ids.contains(id)) continue;
    auto rit = routings.find(inst.routing_id);
    const double duration = rit == routings.end() || inst.current_step > rit->second.last_index()
                                ? 0.0
                                : rit->second.steps[static_cast<std::size_t>(inst.current_step)].process_duration;
    world_.save(ProcessingTimer{id, inst.current_step, inst.location, add_seconds(now, duration)}, std::nullopt);
    ++rep.timers_rearmed;
  }

  // Occupancy = open transports heading to the station + parts processing there.
  std::map<std::string, int> occupancy;
  auto open_jobs = world_.list<Job>(Query{}.where("phase", FilterOp::ne, "delivered"));
  for (const auto& [job, version] : open_jobs) ++occupancy[job.destination_station];
  for (const auto& [id, inst] : instances) {
    if (inst.phase == InstancePhase::processing) ++occupancy[inst.location];
  }
  for (const auto& [ws, version] : world_.list<Workstation>()) {
    const int want = std::min(occupancy[ws.id], ws.capacity);
    if (ws.occupancy == want) continue;
    update_with_retry<Workstation>(world_, ws.id, [&](Workstation& w) {
      w.occupancy = want;
      w.state = derive_state(w);
    });
    ++rep.occupancy_fixed;
  }

  std::set<std::string> busy_workers;
  for (const auto& [job, version] : open_jobs) busy_workers.insert(job.worker_id);
  for (const auto& [w, version] : world_.list<Worker>()) {
    const bool busy = busy_workers.contains(w.id);
    const bool marked_busy = w.status == WorkerStatus::assigned || w.status == WorkerStatus::working;
    if (busy == marked_busy) continue;
    update_with_retry<Worker>(world_, w.id, [&](Worker& x) { x.status = busy ? WorkerStatus::assigned : WorkerStatus::idle; });
    ++rep.workers_fixed;
  }

  // Audit records that the crash cut off.
  std::set<std::string> assigned_jobs, started_jobs, completed_instances, activated;
  std::set<std::pair<std::string, int>> started_steps, finished_steps;
  for (const auto& e : world_.store().read_audit(0)) {
    const auto& p = e.payload;
    switch (e.kind) {
      case AuditKind::task_assigned: assigned_jobs.insert(p.value("job_id", "")); break;
      case AuditKind::workstation_state: {
        const std::string action = p.value("action", "");
        const std::pair<std::string, int> key{p.value("instance_id", ""), p.value("step_index", -1)};
        if (action == "processing_started") {
          started_jobs.insert(p.value("job_id", ""));
          started_steps.insert(key);
        } else if (action == "processing_finished") {
          finished_steps.insert(key);
        }
        break;
      }
      case AuditKind::routing_activated:
        for (const auto& id : p.value("instance_ids", json::array())) activated.insert(id.get<std::string>());
        break;
      case AuditKind::routing_completed: completed_instances.insert(e.subject_id); break;
      default: break;
    }
  }

  std::map<std::string, std::vector<std::string>> unannounced;
  for (const auto& [id, inst] : instances) {
    if (!activated.contains(id)) unannounced[inst.routing_id].push_back(id);
  }
  for (const auto& [routing_id, ids] : unannounced) {
    world_.audit(AuditKind::routing_activated, routing_id,
                 json{{"action", "activated"}, {"instance_ids", ids}, {"quantity", ids.size()}, {"recovered", true}}, now);
    ++rep.audit_events_added;
  }

  for (const auto& [job, version] : world_.list<Job>()) {
    if (!assigned_jobs.contains(job.id)) {
      json detail{{"job_id", job.id},
                  {"worker_id", job.worker_id},
                  {"instance_id", job.instance_id},
                  {"step_index", job.step_index},
                  {"source_station", job.source_station},
                  {"destination_station", job.destination_station},
                  {"recovered", true}};
      if (auto ws = world_.load<Workstation>(job.destination_station)) detail = merge(detail, station_fields(ws->value));
      world_.audit(AuditKind::task_assigned, job.worker_id, std::move(detail), now);
      ++rep.audit_events_added;
    }
    if (job.phase == JobPhase::delivered && !started_jobs.contains(job.id)) {
      json detail{{"action", "processing_started"},
                  {"job_id", job.id},
                  {"instance_id", job.instance_id},
                  {"step_index", job.step_index},
                  {"recovered", true}};
      if (auto ws = world_.load<Workstation>(job.destination_station)) detail = merge(detail, station_fields(ws->value));
      world_.audit(AuditKind::workstation_state, job.destination_station, std::move(detail), now);
      started_steps.insert({job.instance_id, job.step_index});
      ++rep.audit_events_added;
    }
  }

  for (const auto& [id, inst] : instances) {
    // The step before the current one finished processing if it was started.
    const int prev = inst.phase == InstancePhase::completed ? inst.current_step : inst.current_step - 1;
    if (prev >= 0 && started_steps.contains({id, prev}) && !finished_steps.contains({id, prev})) {
      std::string station;
      for (const auto& [job, version] : world_.list<Job>(Query{}.where("instance_id", id).where("step_index", prev))) {
        station = job.destination_station;
      }
      json detail{{"action", "processing_finished"}, {"instance_id", id}, {"step_index", prev}, {"recovered", true}};
      if (auto ws = world_.load<Workstation>(station)) detail = merge(detail, station_fields(ws->value));
      world_.audit(AuditKind::workstation_state, station, std::move(detail), now);
      ++rep.audit_events_added;
    }
    if (inst.phase == InstancePhase::completed && !completed_instances.contains(id)) {
      world_.audit(AuditKind::routing_completed, id,
                   json{{"outcome", "completed"}, {"routing_id", inst.routing_id}, {"recovered", true}}, now);
      ++rep.audit_events_added;
    }
  }
  return rep;
}

}  // namespace agm
