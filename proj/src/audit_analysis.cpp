#include "agm/audit_analysis.hpp"

#include <optional>
#include <set>

#include "agm/wire.hpp"

namespace agm {

namespace {

std::string instance_of(const AuditEvent& e) { return e.payload.value("instance_id", ""); }
int step_of(const AuditEvent& e) { return e.payload.value("step_index", -1); }
std::string action_of(const AuditEvent& e) { return e.payload.value("action", ""); }

std::string at(const AuditEvent& e) { return "seq " + std::to_string(e.seq) + ": "; }

}  // namespace

std::map<std::string, ProjectedInstance> project_instances(const std::vector<AuditEvent>& events) {
  std::map<std::string, ProjectedInstance> out;
  for (const auto& e : events) {
    switch (e.kind) {
      case AuditKind::routing_activated:
        for (const auto& id : e.payload.value("instance_ids", json::array())) {
          out[id.get<std::string>()] = ProjectedInstance{e.subject_id};
        }
        break;
      case AuditKind::task_assigned:
        if (auto it = out.find(instance_of(e)); it != out.end()) {
          it->second.phase = InstancePhase::in_transit;
          it->second.current_step = step_of(e);
        }
        break;
      case AuditKind::worker_activity: {
        const auto action = action_of(e);
        if (action != "job_reclaimed" && action != "job_cancelled") break;
        if (auto it = out.find(instance_of(e)); it != out.end()) it->second.phase = InstancePhase::awaiting_transport;
        break;
      }
      case AuditKind::workstation_state: {
        auto it = out.find(instance_of(e));
        if (it == out.end()) break;
        const auto action = action_of(e);
        if (action == "processing_started") {
          it->second.phase = InstancePhase::processing;
          it->second.current_step = step_of(e);
        } else if (action == "processing_finished") {
          it->second.phase = InstancePhase::awaiting_transport;
          it->second.current_step = step_of(e) + 1;
        }
        break;
      }
      case AuditKind::routing_completed:
        if (auto it = out.find(e.subject_id); it != out.end()) {
          if (e.payload.value("outcome", "") == "cancelled") {
            it->second.cancelled = true;
          } else {
            it->second.phase = InstancePhase::completed;
            it->second.current_step = std::max(0, it->second.current_step - 1);
          }
        }
        break;
    }
  }
  return out;
}

std::vector<std::string> check_mutual_exclusion(const std::vector<AuditEvent>& events) {
  enum class Slot { assigned, processed };
  std::map<std::pair<std::string, int>, std::pair<Slot, std::string>> slots;  // -> (state, job id)
  std::vector<std::string> out;
  for (const auto& e : events) {
    const std::pair<std::string, int> key{instance_of(e), step_of(e)};
    if (e.kind == AuditKind::task_assigned) {
      const auto job = e.payload.value("job_id", "");
      if (auto it = slots.find(key); it != slots.end()) {
        out.push_back(at(e) + "step " + std::to_string(key.second) + " of " + key.first + " assigned to " + job +
                      " while held by " + it->second.second);
        continue;
      }
      slots[key] = {Slot::assigned, job};
    } else if (e.kind == AuditKind::worker_activity) {
      const auto action = action_of(e);
      if (action == "job_reclaimed" || action == "job_cancelled") slots.erase(key);
    } else if (e.kind == AuditKind::workstation_state && action_of(e) == "processing_started") {
      if (auto it = slots.find(key); it != slots.end()) it->second.first = Slot::processed;
    }
  }
  return out;
}

std::vector<std::string> check_capacity(const std::vector<AuditEvent>& events, const std::map<std::string, int>& capacity,
                                        bool serial) {
  std::vector<std::string> out;
  std::map<std::string, int> count;
  auto cap_of = [&](const std::string& station, const AuditEvent& e) -> std::optional<int> {
    if (auto it = capacity.find(station); it != capacity.end()) return it->second;
    if (e.payload.contains("capacity") && e.payload["capacity"].is_number_integer()) return e.payload["capacity"].get<int>();
    return std::nullopt;
  };

  for (const auto& e : events) {
    const auto& p = e.payload;
    if (p.contains("occupancy") && p["occupancy"].is_number_integer() && p.contains("capacity") &&
        p["capacity"].is_number_integer()) {
      const int occ = p["occupancy"].get<int>();
      const int cap = p["capacity"].get<int>();
      if (occ < 0 || occ > cap) {
        out.push_back(at(e) + "recorded occupancy " + std::to_string(occ) + " outside [0, " + std::to_string(cap) + "]");
      }
    }
    if (!serial) continue;

    std::string station;
    int delta = 0;
    if (e.kind == AuditKind::task_assigned) {
      station = p.value("destination_station", "");
      delta = +1;
    } else if (e.kind == AuditKind::worker_activity) {
      const auto action = action_of(e);
      if (action == "job_reclaimed" || action == "job_cancelled") {
        station = p.value("station", "");
        delta = -1;
      }
    } else if (e.kind == AuditKind::workstation_state) {
      const auto action = action_of(e);
      if (action == "processing_finished" || action == "processing_cancelled") {
        station = e.subject_id;
        delta = -1;
      }
    }
    if (station.empty() || delta == 0) continue;
    int& c = count[station];
    c += delta;
    if (c < 0) {
      out.push_back(at(e) + "station " + station + " released below zero");
      c = 0;
    }
    if (auto cap = cap_of(station, e); cap && c > *cap) {
      out.push_back(at(e) + "station " + station + " holds " + std::to_string(c) + " > capacity " +
                    std::to_string(*cap));
    }
  }
  return out;
}

std::vector<std::string> check_instance_traces(const std::vector<AuditEvent>& events,
                                               const std::map<std::string, Routing>& routings,
                                               const std::map<std::string, std::string>& station_types) {
  enum class State { awaiting, assigned, processing, done, cancelled };
  struct Trace {
    std::string routing_id;
    int step = 0;
    State state = State::awaiting;
  };
  std::map<std::string, Trace> traces;
  std::vector<std::string> out;

  auto expect = [&](const AuditEvent& e, Trace& t, State want, const std::string& what) {
    if (t.state != want || step_of(e) != t.step) {
      out.push_back(at(e) + instance_of(e) + ": unexpected " + what + " for step " + std::to_string(step_of(e)) +
                    " (at step " + std::to_string(t.step) + ")");
      return false;
    }
    return true;
  };
  auto type_matches = [&](const AuditEvent& e, const Trace& t, const std::string& station) {
    auto r = routings.find(t.routing_id);
    auto st = station_types.find(station);
    if (r == routings.end() || st == station_types.end()) return;
    if (t.step < 0 || t.step >= static_cast<int>(r->second.steps.size())) {
      out.push_back(at(e) + "step " + std::to_string(t.step) + " outside routing " + t.routing_id);
      return;
    }
    const auto& want = r->second.steps[static_cast<std::size_t>(t.step)].station_type;
    if (st->second != want) {
      out.push_back(at(e) + instance_of(e) + " step " + std::to_string(t.step) + " sent to " + station + " (" +
                    st->second + "), expected " + want);
    }
  };

  for (const auto& e : events) {
    if (e.kind == AuditKind::routing_activated) {
      for (const auto& id : e.payload.value("instance_ids", json::array())) traces[id.get<std::string>()] = {e.subject_id};
      continue;
    }
    const std::string id = e.kind == AuditKind::routing_completed ? e.subject_id : instance_of(e);
    auto it = traces.find(id);
    if (it == traces.end()) continue;
    Trace& t = it->second;

    switch (e.kind) {
      case AuditKind::task_assigned:
        if (expect(e, t, State::awaiting, "task_assigned")) {
          type_matches(e, t, e.payload.value("destination_station", ""));
          t.state = State::assigned;
        }
        break;
      case AuditKind::worker_activity: {
        const auto action = action_of(e);
        if (action == "job_reclaimed" || action == "job_cancelled") {
          if (expect(e, t, State::assigned, action)) t.state = State::awaiting;
        } else if (action == "progress" || action == "job_completed") {
          if (t.state == State::processing && action == "job_completed" && step_of(e) == t.step) break;
          expect(e, t, State::assigned, action);
        }
        break;
      }
      case AuditKind::workstation_state: {
        const auto action = action_of(e);
        if (action == "processing_started") {
          if (expect(e, t, State::assigned, action)) {
            type_matches(e, t, e.subject_id);
            t.state = State::processing;
          }
        } else if (action == "processing_finished") {
          if (expect(e, t, State::processing, action)) {
            ++t.step;
            t.state = State::awaiting;
          }
        } else if (action == "processing_cancelled") {
          t.state = State::cancelled;
        }
        break;
      }
      case AuditKind::routing_completed:
        if (e.payload.value("outcome", "") == "cancelled") {
          t.state = State::cancelled;
          break;
        }
        if (auto r = routings.find(t.routing_id); r != routings.end()) {
          if (t.state != State::awaiting || t.step != static_cast<int>(r->second.steps.size())) {
            out.push_back(at(e) + id + " completed after " + std::to_string(t.step) + " of " +
                          std::to_string(r->second.steps.size()) + " steps");
          }
        }
        t.state = State::done;
        break;
      default: break;
    }
  }
  return out;
}

std::map<std::string, std::vector<std::string>> station_visit_order(
    const std::vector<AuditEvent>& events, const std::map<std::string, std::string>& station_types) {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& e : events) {
    if (e.kind != AuditKind::workstation_state || action_of(e) != "processing_started") continue;
    auto st = station_types.find(e.subject_id);
    out[instance_of(e)].push_back(st == station_types.end() ? "?" : st->second);
  }
  return out;
}

}  // namespace agm
