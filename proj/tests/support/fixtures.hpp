#pragma once

// Builders shared by the test suites.

#include <memory>
#include <string>
#include <vector>

#include "agm/api.hpp"
#include "agm/fleet_service.hpp"
#include "agm/store.hpp"

namespace agm::test {

inline Pose3 at(double x, double y) { return Pose3{x, y, 0.0, 0.0}; }

inline Workstation station(std::string id, std::string type, Pose3 pose, int capacity = 1) {
  Workstation ws;
  ws.id = id;
  ws.name = id;
  ws.station_type = std::move(type);
  ws.pose = pose;
  ws.capacity = capacity;
  return ws;
}

inline Worker worker(std::string id, Pose3 pose, double battery = 1.0, std::string group = "PO Movement") {
  Worker w;
  w.id = id;
  w.name = id;
  w.worker_group = std::move(group);
  w.pose = pose;
  w.battery = battery;
  return w;
}

inline Routing routing(std::string id, const std::vector<std::string>& types, double duration = 10.0,
                       std::string group = "PO Movement") {
  Routing r;
  r.id = std::move(id);
  r.part_number = "PN-" + r.id;
  r.customer = "test";
  for (std::size_t i = 0; i < types.size(); ++i) {
    RoutingStep s;
    s.index = static_cast<int>(i);
    s.operation_name = "op " + types[i];
    s.station_type = types[i];
    s.worker_group = group;
    s.process_duration = (types[i] == "infeed" || types[i] == "outfeed") ? 0.0 : duration;
    s.priority = static_cast<int>(i);
    r.steps.push_back(s);
  }
  return r;
}

/// In-memory fleet on a manual clock starting at sim_epoch().
struct TestFleet {
  std::shared_ptr<ManualClock> clock;
  std::shared_ptr<DocumentStore> store;
  std::unique_ptr<FleetService> fleet;

  explicit TestFleet(SchedulerConfig cfg = {}, std::shared_ptr<DocumentStore> s = nullptr,
                     std::shared_ptr<ManualClock> c = nullptr)
      : clock(c ? std::move(c) : std::make_shared<ManualClock>(sim_epoch())),
        store(s ? std::move(s) : DocumentStore::in_memory()),
        fleet(std::make_unique<FleetService>(store, clock, cfg)) {}

  Repository& world() { return fleet->world(); }

  void add(const Workstation& ws) { world().save(ws, std::nullopt); }
  void add(const Worker& w) { world().save(w, std::nullopt); }
  void add(const Routing& r) { world().save(r, std::nullopt); }

  /// IN at the origin, a milling pool, OUT; worker "w1" next to IN.
  void basic_line(int milling_capacity = 1) {
    add(station("IN", "infeed", at(0, 0), 100));
    add(station("M1", "milling", at(5, 0), milling_capacity));
    add(station("OUT", "outfeed", at(10, 0), 100));
    add(worker("w1", at(0, -1)));
    add(routing("R1", {"infeed", "milling", "outfeed"}));
  }

  void advance(double seconds) {
    clock->advance(seconds);
    fleet->tick();
  }

  /// Moves a job through progress and completion without travel time.
  void carry(const std::string& key, const JobPayload& p) {
    fleet->report_progress({key, p.job_id, JobPhase::en_route_to_source, p.source, 1.0});
    fleet->report_progress({key, p.job_id, JobPhase::carrying, p.source, 1.0});
    fleet->complete_job(key, p.job_id);
  }
};

}  // namespace agm::test
