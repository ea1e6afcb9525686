// Crash at every write of a small run, reopen, recover, finish the run.

#include <filesystem>

#include <gtest/gtest.h>

#include "agm/audit_analysis.hpp"
#include "agm/error.hpp"
#include "agm/fleet_service.hpp"
#include "support/fixtures.hpp"

using namespace agm;
using namespace agm::test;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  auto p = fs::temp_directory_path() / ("agm-recovery-" + std::to_string(::getpid()) + "-" + tag);
  fs::remove_all(p);
  return p;
}

void setup_world(const fs::path& dir) {
  TestFleet f({}, DocumentStore::open(dir));
  f.add(station("IN", "infeed", at(0, 0), 100));
  f.add(station("M1", "milling", at(5, 0), 1));
  f.add(station("M2", "milling", at(5, 5), 1));
  f.add(station("OUT", "outfeed", at(10, 0), 100));
  f.add(worker("w1", at(0, -1)));
  f.add(worker("w2", at(0, -2)));
  f.add(routing("R1", {"infeed", "milling", "outfeed"}, 7));
}

// Polls and carries until every instance is complete. Returns false on timeout.
bool drive(TestFleet& f, bool activate, int max_rounds = 200) {
  if (activate) f.fleet->activate_routing("R1", 3);
  for (int round = 0; round < max_rounds; ++round) {
    for (const char* w : {"w1", "w2"}) {
      const auto p = f.fleet->poll(w);
      if (p.status == 1) f.carry(w, p);
    }
    const auto all = f.world().list<RoutingInstance>();
    if (!all.empty() && std::all_of(all.begin(), all.end(),
                                    [](const auto& v) { return v.value.phase == InstancePhase::completed; })) {
      return true;
    }
    f.advance(2);
  }
  return false;
}

// Occupancy must equal open transports plus parts in processing.
void expect_consistent(Repository& world) {
  std::map<std::string, int> want;
  for (const auto& [job, v] : world.list<Job>()) {
    auto inst = world.load<RoutingInstance>(job.instance_id);
    const bool open = inst && inst->value.phase == InstancePhase::in_transit &&
                      inst->value.current_step == job.step_index;
    if (open) ++want[job.destination_station];
  }
  for (const auto& [inst, v] : world.list<RoutingInstance>()) {
    if (inst.phase == InstancePhase::processing) ++want[inst.location];
    if (inst.phase == InstancePhase::in_transit) {
      EXPECT_FALSE(world.list<Job>(Query{}.where("instance_id", inst.id).where("step_index", inst.current_step)).empty())
          << inst.id << " in transit without a job";
    }
  }
  for (const auto& [ws, v] : world.list<Workstation>()) EXPECT_EQ(ws.occupancy, want[ws.id]) << ws.id;
}

}  // namespace

TEST(Recovery, CleanShutdownNeedsNoRepair) {
  const auto dir = fresh_dir("clean");
  setup_world(dir);
  auto clock = std::make_shared<ManualClock>();
  {
    TestFleet f({}, DocumentStore::open(dir), clock);
    ASSERT_TRUE(drive(f, true));
  }
  FleetService again(DocumentStore::open(dir), clock);
  EXPECT_EQ(again.recover().total(), 0);
  fs::remove_all(dir);
}

TEST(Recovery, CrashAtEveryWrite) {
  const auto base = fresh_dir("sweep");
  int crashes = 0;
  for (std::size_t n = 0; n < 3000; ++n) {
    const auto dir = base / std::to_string(n);
    setup_world(dir);

    StoreOptions faulty;
    faulty.crash_after_writes = n;
    auto clock = std::make_shared<ManualClock>();
    bool crashed = false;
    {
      TestFleet f({}, DocumentStore::open(dir, faulty), clock);
      try {
        drive(f, true);
      } catch (const StorageError&) {
        crashed = true;
      }
    }
    if (!crashed) {
      fs::remove_all(base);
      EXPECT_GT(crashes, 50);
      return;
    }
    ++crashes;

    TestFleet f({}, DocumentStore::open(dir), clock);
    f.fleet->recover();
    expect_consistent(f.world());
    EXPECT_EQ(f.fleet->recover().total(), 0) << "recovery is not idempotent after write " << n;

    const bool activated = !f.world().list<RoutingInstance>().empty();
    ASSERT_TRUE(drive(f, !activated)) << "run did not finish after crash at write " << n;

    const auto events = f.store->read_audit(0);
    std::map<std::string, Routing> routings{{"R1", f.world().load<Routing>("R1")->value}};
    std::map<std::string, std::string> types;
    for (const auto& [ws, v] : f.world().list<Workstation>()) types[ws.id] = ws.station_type;
    EXPECT_EQ(check_mutual_exclusion(events), std::vector<std::string>{}) << "crash at write " << n;
    EXPECT_EQ(check_capacity(events, {}, true), std::vector<std::string>{}) << "crash at write " << n;
    EXPECT_EQ(check_instance_traces(events, routings, types), std::vector<std::string>{}) << "crash at write " << n;
    const auto projected = project_instances(events);
    for (const auto& [inst, v] : f.world().list<RoutingInstance>()) {
      ASSERT_TRUE(projected.count(inst.id)) << inst.id << " after crash at write " << n;
      EXPECT_EQ(projected.at(inst.id).phase, InstancePhase::completed);
    }
    fs::remove_all(dir);
  }
  FAIL() << "fault injection never let the run finish";
}
