#include <gtest/gtest.h>

#include "agm/audit_analysis.hpp"
#include "agm/fleet_service.hpp"
#include "support/fixtures.hpp"

using namespace agm;
using namespace agm::test;

namespace {

int count_events(const DocumentStore& s, AuditKind kind, const std::string& action = {}) {
  int n = 0;
  for (const auto& e : s.read_audit(0)) {
    if (e.kind == kind && (action.empty() || e.payload.value("action", "") == action)) ++n;
  }
  return n;
}

}  // namespace

TEST(Progress, MonotonicPhases) {
  TestFleet f;
  f.basic_line();
  f.fleet->activate_routing("R1", 1);
  const auto p = f.fleet->poll("w1");
  EXPECT_EQ(f.fleet->report_progress({"w1", p.job_id, JobPhase::en_route_to_source, at(0, 0), 1.0}).status, 1);
  EXPECT_EQ(f.fleet->report_progress({"w1", p.job_id, JobPhase::carrying, at(0, 0), 1.0}).status, 1);
  // Repeating a phase is telemetry, not a regression.
  EXPECT_EQ(f.fleet->report_progress({"w1", p.job_id, JobPhase::carrying, at(0, 0), 1.0}).status, 1);
  const auto back = f.fleet->report_progress({"w1", p.job_id, JobPhase::en_route_to_source, at(0, 0), 1.0});
  EXPECT_EQ(back.status, 0);
  EXPECT_EQ(back.reason, "phase regression from carrying to en_route_to_source");
  EXPECT_EQ(f.world().load<Job>(p.job_id)->value.phase, JobPhase::carrying);
}

TEST(Progress, UpdatesWorkerTelemetry) {
  TestFleet f;
  f.basic_line();
  f.fleet->activate_routing("R1", 1);
  const auto p = f.fleet->poll("w1");
  f.clock->advance(3);
  ASSERT_EQ(f.fleet->report_progress({"w1", p.job_id, JobPhase::en_route_to_source, at(1, 2), 0.55}).status, 1);
  const auto w = f.world().load<Worker>("w1")->value;
  EXPECT_EQ(w.battery, 0.55);
  EXPECT_EQ(w.pose, at(1, 2));
  EXPECT_EQ(w.last_seen, f.clock->now());
  EXPECT_EQ(w.status, WorkerStatus::working);
}

TEST(Progress, CarryingMovesPartOntoWorker) {
  TestFleet f;
  f.basic_line();
  f.fleet->activate_routing("R1", 1);
  const auto p = f.fleet->poll("w1");
  EXPECT_EQ(f.world().load<RoutingInstance>(p.instance_id)->value.location, "IN");
  f.fleet->report_progress({"w1", p.job_id, JobPhase::carrying, at(0, 0), 1.0});
  EXPECT_EQ(f.world().load<RoutingInstance>(p.instance_id)->value.location, "w1");
}

TEST(Progress, ForeignOrUnknownJobRejected) {
  TestFleet f;
  f.basic_line();
  f.add(worker("w2", at(0, 0)));
  f.fleet->activate_routing("R1", 1);
  const auto p = f.fleet->poll("w1");
  EXPECT_EQ(f.fleet->report_progress({"w2", p.job_id, JobPhase::carrying, at(0, 0), 1.0}).status, 0);
  EXPECT_EQ(f.fleet->report_progress({"w1", "job-999999", JobPhase::carrying, at(0, 0), 1.0}).status, 0);
  EXPECT_EQ(f.fleet->complete_job("w2", p.job_id).status, 0);
}

TEST(Complete, StartsProcessingAndFreesWorker) {
  TestFleet f;
  f.basic_line();
  f.fleet->activate_routing("R1", 1);
  f.carry("w1", f.fleet->poll("w1"));  // infeed step, zero duration
  const auto p = f.fleet->poll("w1");
  ASSERT_EQ(p.status, 1);
  EXPECT_EQ(p.destination, at(5, 0));
  EXPECT_EQ(f.world().load<Workstation>("M1")->value.occupancy, 1);

  f.fleet->report_progress({"w1", p.job_id, JobPhase::carrying, at(0, 0), 1.0});
  ASSERT_EQ(f.fleet->complete_job("w1", p.job_id).status, 1);
  auto inst = f.world().load<RoutingInstance>(p.instance_id)->value;
  EXPECT_EQ(inst.phase, InstancePhase::processing);
  EXPECT_EQ(inst.location, "M1");
  EXPECT_EQ(f.world().load<Worker>("w1")->value.status, WorkerStatus::idle);
  EXPECT_EQ(f.world().load<Workstation>("M1")->value.occupancy, 1);
  EXPECT_EQ(f.world().load<Workstation>("M1")->value.state, StationState::occupied);

  const auto again = f.fleet->complete_job("w1", p.job_id);
  EXPECT_EQ(again.status, 0);
  EXPECT_EQ(again.reason, "job already completed");
}

TEST(Complete, TimerFiresAtDueTimeNotBefore) {
  TestFleet f;
  f.basic_line();
  f.fleet->activate_routing("R1", 1);
  f.carry("w1", f.fleet->poll("w1"));
  const auto p = f.fleet->poll("w1");
  f.carry("w1", p);

  f.advance(9.999);
  EXPECT_EQ(f.world().load<RoutingInstance>(p.instance_id)->value.phase, InstancePhase::processing);
  f.advance(0.001);
  const auto inst = f.world().load<RoutingInstance>(p.instance_id)->value;
  EXPECT_EQ(inst.phase, InstancePhase::awaiting_transport);
  EXPECT_EQ(inst.current_step, 2);
  EXPECT_EQ(f.world().load<Workstation>("M1")->value.occupancy, 0);
  EXPECT_FALSE(f.world().load<ProcessingTimer>(p.instance_id));
}

TEST(Complete, FinalStepCompletesRoutingAndWorkerCanContinue) {
  TestFleet f;
  f.basic_line();
  f.fleet->activate_routing("R1", 2);
  int jobs = 0;
  for (int round = 0; round < 50; ++round) {
    const auto p = f.fleet->poll("w1");
    if (p.status == 1) {
      f.carry("w1", p);
      ++jobs;
    }
    f.advance(5);
  }
  EXPECT_EQ(jobs, 6);
  for (const auto& [inst, v] : f.world().list<RoutingInstance>()) {
    EXPECT_EQ(inst.phase, InstancePhase::completed);
    EXPECT_TRUE(inst.completed_at.has_value());
  }
  EXPECT_EQ(count_events(*f.store, AuditKind::routing_completed), 2);
  EXPECT_EQ(count_events(*f.store, AuditKind::task_assigned), 6);
}

TEST(Activate, CreatesInstancesAtInfeed) {
  TestFleet f;
  f.basic_line();
  const auto ids = f.fleet->activate_routing("R1", 3);
  EXPECT_EQ(ids, (std::vector<std::string>{"inst-000001", "inst-000002", "inst-000003"}));
  for (const auto& id : ids) {
    const auto inst = f.world().load<RoutingInstance>(id)->value;
    EXPECT_EQ(inst.phase, InstancePhase::awaiting_transport);
    EXPECT_EQ(inst.current_step, 0);
    EXPECT_EQ(inst.location, "IN");
  }
  EXPECT_TRUE(f.world().load<Routing>("R1")->value.active);
  EXPECT_EQ(count_events(*f.store, AuditKind::routing_activated), 1);
}

TEST(Activate, Errors) {
  TestFleet f;
  f.basic_line();
  EXPECT_THROW(f.fleet->activate_routing("nope", 1), NotFound);
  EXPECT_THROW(f.fleet->activate_routing("R1", 0), ValidationError);
  f.add(routing("BAD", {"infeed", "laser", "outfeed"}));
  try {
    f.fleet->activate_routing("BAD", 1);
    FAIL() << "expected RoutingInvalid";
  } catch (const RoutingInvalid& e) {
    ASSERT_EQ(e.violations.size(), 1u);
    EXPECT_EQ(e.violations[0].message, "step 1: unknown station_type 'laser'");
  }
  EXPECT_TRUE(f.world().list<RoutingInstance>().empty());
}

TEST(Cancel, ReleasesJobAndReservation) {
  TestFleet f;
  f.basic_line();
  const auto ids = f.fleet->activate_routing("R1", 1);
  f.carry("w1", f.fleet->poll("w1"));
  const auto p = f.fleet->poll("w1");
  ASSERT_EQ(f.world().load<Workstation>("M1")->value.occupancy, 1);

  f.fleet->cancel_instance(ids[0]);
  EXPECT_FALSE(f.world().load<RoutingInstance>(ids[0]));
  EXPECT_FALSE(f.world().load<Job>(p.job_id));
  EXPECT_EQ(f.world().load<Workstation>("M1")->value.occupancy, 0);
  EXPECT_EQ(f.world().load<Worker>("w1")->value.status, WorkerStatus::idle);
  EXPECT_EQ(f.fleet->poll("w1").status, 0);
  EXPECT_THROW(f.fleet->cancel_instance(ids[0]), NotFound);
}

TEST(Cancel, DuringProcessingRemovesTimer) {
  TestFleet f;
  f.basic_line();
  const auto ids = f.fleet->activate_routing("R1", 1);
  f.carry("w1", f.fleet->poll("w1"));
  f.carry("w1", f.fleet->poll("w1"));
  ASSERT_TRUE(f.world().load<ProcessingTimer>(ids[0]));
  f.fleet->cancel_instance(ids[0]);
  EXPECT_FALSE(f.world().load<ProcessingTimer>(ids[0]));
  EXPECT_EQ(f.world().load<Workstation>("M1")->value.occupancy, 0);
}

TEST(Cancel, DeliveredButNotCompletedReleasesReservation) {
  TestFleet f;
  f.basic_line();
  const auto ids = f.fleet->activate_routing("R1", 1);
  f.carry("w1", f.fleet->poll("w1"));
  const auto p = f.fleet->poll("w1");
  f.fleet->report_progress({"w1", p.job_id, JobPhase::delivered, at(5, 0), 1.0});
  // Held until completion: a re-poll returns the same job.
  EXPECT_EQ(f.fleet->poll("w1").job_id, p.job_id);
  f.fleet->cancel_instance(ids[0]);
  EXPECT_EQ(f.world().load<Workstation>("M1")->value.occupancy, 0);
}

TEST(Cancel, CompletedInstanceConflicts) {
  TestFleet f;
  f.basic_line();
  const auto ids = f.fleet->activate_routing("R1", 1);
  for (int i = 0; i < 3; ++i) {
    f.carry("w1", f.fleet->poll("w1"));
    f.advance(10);
  }
  ASSERT_EQ(f.world().load<RoutingInstance>(ids[0])->value.phase, InstancePhase::completed);
  EXPECT_THROW(f.fleet->cancel_instance(ids[0]), StateConflict);
}

TEST(Audit, ReplayReproducesFinalPhases) {
  TestFleet f;
  f.basic_line(2);
  f.add(worker("w2", at(0, 1)));
  const auto ids = f.fleet->activate_routing("R1", 4);
  for (int round = 0; round < 12; ++round) {
    for (const char* w : {"w1", "w2"}) {
      const auto p = f.fleet->poll(w);
      if (p.status == 1 && round % 3 != 2) f.carry(w, p);
    }
    if (round == 4) f.fleet->cancel_instance(ids[3]);
    f.advance(4);
  }
  const auto projected = project_instances(f.store->read_audit(0));
  for (const auto& id : ids) {
    auto live = f.world().load<RoutingInstance>(id);
    auto it = projected.find(id);
    ASSERT_NE(it, projected.end());
    if (!live) {
      EXPECT_TRUE(it->second.cancelled) << id;
      continue;
    }
    EXPECT_EQ(it->second.phase, live->value.phase) << id;
    EXPECT_EQ(it->second.current_step, live->value.current_step) << id;
  }
}
