#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "agm/domain.hpp"
#include "agm/error.hpp"
#include "support/fixtures.hpp"

using namespace agm;
using agm::test::routing;

TEST(Pose, DistanceIgnoresYaw) {
  EXPECT_DOUBLE_EQ(pose_distance({0, 0, 0, 0}, {0, 0, 0, 1.0}), 0.0);
  EXPECT_DOUBLE_EQ(pose_distance({0, 0, 0, 0}, {3, 4, 0, 2.0}), 5.0);
  EXPECT_DOUBLE_EQ(pose_distance({1, 1, 1, 0}, {1, 1, 4, 0}), 3.0);
}

TEST(Pose, NormalizeYawRange) {
  const double pi = std::numbers::pi;
  EXPECT_DOUBLE_EQ(normalize_yaw(0.0), 0.0);
  EXPECT_DOUBLE_EQ(normalize_yaw(pi), -pi);
  EXPECT_NEAR(normalize_yaw(3 * pi / 2), -pi / 2, 1e-12);
  EXPECT_NEAR(normalize_yaw(-5 * pi / 2), -pi / 2, 1e-12);
  for (double y = -20; y < 20; y += 0.37) {
    const double n = normalize_yaw(y);
    EXPECT_GE(n, -pi);
    EXPECT_LT(n, pi);
    EXPECT_NEAR(std::remainder(n - y, 2 * pi), 0.0, 1e-9);
  }
}

TEST(Pose, Validity) {
  EXPECT_TRUE(is_valid({1, 2, 3, 0}));
  EXPECT_FALSE(is_valid({NAN, 0, 0, 0}));
  EXPECT_FALSE(is_valid({0, INFINITY, 0, 0}));
}

TEST(Workstation, DerivedState) {
  auto ws = test::station("M1", "milling", test::at(0, 0), 2);
  EXPECT_EQ(derive_state(ws), StationState::free);
  ws.occupancy = 2;
  EXPECT_EQ(derive_state(ws), StationState::occupied);
  ws.state = StationState::down;
  ws.occupancy = 0;
  EXPECT_EQ(derive_state(ws), StationState::down);
  EXPECT_FALSE(ws.has_free_slot());
}

namespace {
const std::set<std::string> kTypes{"infeed", "milling", "grinding", "cmm", "marking", "outfeed"};
const std::set<std::string> kGroups{"PO Movement"};
}  // namespace

TEST(ValidateRouting, LineIsValid) {
  auto r = routing("R", {"infeed", "milling", "grinding", "cmm", "marking", "outfeed"});
  EXPECT_TRUE(validate_routing(r, kTypes, kGroups).empty());
}

TEST(ValidateRouting, EmptySteps) {
  Routing r;
  r.id = "R";
  const auto v = validate_routing(r, kTypes, kGroups);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].message, "empty steps");
  EXPECT_FALSE(v[0].step.has_value());
}

TEST(ValidateRouting, UnknownStationTypeNamesStep) {
  auto r = routing("R", {"infeed", "milling", "laser", "outfeed"});
  const auto v = validate_routing(r, kTypes, kGroups);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].step, 2);
  EXPECT_EQ(v[0].message, "step 2: unknown station_type 'laser'");
}

TEST(ValidateRouting, CollectsEveryViolation) {
  auto r = routing("R", {"milling", "grinding"});
  r.steps[1].index = 7;
  r.steps[0].worker_group = "Forklifts";
  r.steps[1].process_duration = -1;
  const auto v = validate_routing(r, kTypes, kGroups);
  std::vector<std::string> msgs;
  for (const auto& x : v) msgs.push_back(x.message);
  EXPECT_EQ(msgs, (std::vector<std::string>{
                      "step 0: unknown worker_group 'Forklifts'",
                      "step 1: index 7 breaks the contiguous 0..n-1 sequence",
                      "step 1: process_duration must be a finite value >= 0",
                      "step 0: first step must use an infeed station",
                      "step 1: last step must use an outfeed station",
                  }));
}

TEST(AdvanceStep, MovesToNextStep) {
  auto r = routing("R", {"infeed", "milling", "outfeed"});
  RoutingInstance i{"i1", "R", 1, InstancePhase::processing, "M1", sim_epoch(), std::nullopt};
  const auto next = advance_step(i, r, add_seconds(sim_epoch(), 5));
  EXPECT_EQ(next.current_step, 2);
  EXPECT_EQ(next.phase, InstancePhase::awaiting_transport);
  EXPECT_EQ(next.location, "M1");
  EXPECT_FALSE(next.completed_at.has_value());
}

TEST(AdvanceStep, LastStepCompletes) {
  auto r = routing("R", {"infeed", "milling", "outfeed"});
  RoutingInstance i{"i1", "R", 2, InstancePhase::processing, "OUT", sim_epoch(), std::nullopt};
  const auto t = add_seconds(sim_epoch(), 9);
  const auto next = advance_step(i, r, t);
  EXPECT_EQ(next.phase, InstancePhase::completed);
  EXPECT_EQ(next.current_step, 2);
  EXPECT_EQ(next.completed_at, t);
}

TEST(AdvanceStep, RequiresProcessing) {
  auto r = routing("R", {"infeed", "outfeed"});
  for (auto p : {InstancePhase::awaiting_transport, InstancePhase::in_transit, InstancePhase::completed}) {
    RoutingInstance i{"i1", "R", 0, p, "IN", sim_epoch(), std::nullopt};
    EXPECT_THROW(advance_step(i, r, sim_epoch()), StateConflict);
  }
}

TEST(Enums, RoundTripThroughStrings) {
  for (auto v : {WorkerStatus::idle, WorkerStatus::assigned, WorkerStatus::working, WorkerStatus::charging,
                 WorkerStatus::offline}) {
    EXPECT_EQ(enum_from_string<WorkerStatus>(to_string(v)), v);
  }
  for (auto v : {JobPhase::assigned, JobPhase::en_route_to_source, JobPhase::carrying, JobPhase::delivered}) {
    EXPECT_EQ(enum_from_string<JobPhase>(to_string(v)), v);
  }
  for (auto v : {AuditKind::task_assigned, AuditKind::worker_activity, AuditKind::workstation_state,
                 AuditKind::routing_activated, AuditKind::routing_completed}) {
    EXPECT_EQ(enum_from_string<AuditKind>(to_string(v)), v);
  }
  EXPECT_FALSE(enum_from_string<InstancePhase>("done").has_value());
}
