#include "agm/scenario.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace agm {

namespace {

std::string join_lines(const std::vector<std::string>& v) {
  std::string out = "scenario failed validation";
  for (const auto& s : v) out += "\n  " + s;
  return out;
}

// Line and column of a byte offset.
std::pair<int, int> locate(const std::string& text, std::size_t offset) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

ScenarioInvalid::ScenarioInvalid(std::vector<std::string> v) : ValidationError(join_lines(v)), violations(std::move(v)) {}

void to_json(json& j, const ScenarioWorker& v) {
  j = json{{"name", v.name},
           {"worker_group", v.worker_group},
           {"start_pose", v.start_pose},
           {"speed", v.speed},
           {"battery_start", v.battery_start},
           {"battery_drain_per_meter", v.battery_drain_per_meter}};
}

void from_json(const json& j, ScenarioWorker& v) {
  ScenarioWorker out;
  out.name = j.at("name").get<std::string>();
  out.worker_group = j.at("worker_group").get<std::string>();
  if (j.contains("start_pose")) out.start_pose = j.at("start_pose").get<Pose3>();
  out.speed = j.value("speed", out.speed);
  out.battery_start = j.value("battery_start", out.battery_start);
  out.battery_drain_per_meter = j.value("battery_drain_per_meter", out.battery_drain_per_meter);
  v = std::move(out);
}

void to_json(json& j, const Activation& v) {
  j = json{{"routing_id", v.routing_id}, {"quantity", v.quantity}, {"at_time", v.at_time}};
}

void from_json(const json& j, Activation& v) {
  Activation out;
  out.routing_id = j.at("routing_id").get<std::string>();
  out.quantity = j.value("quantity", 1);
  out.at_time = j.value("at_time", 0.0);
  v = std::move(out);
}

void to_json(json& j, const Scenario& v) {
  j = json{{"name", v.name},
           {"stations", v.stations},
           {"routings", v.routings},
           {"workers", v.workers},
           {"activations", v.activations}};
}

void from_json(const json& j, Scenario& v) {
  Scenario out;
  out.name = j.value("name", "");
  for (const auto& s : j.value("stations", json::array())) out.stations.push_back(s.get<Workstation>());
  for (const auto& r : j.value("routings", json::array())) out.routings.push_back(r.get<Routing>());
  for (const auto& w : j.value("workers", json::array())) out.workers.push_back(w.get<ScenarioWorker>());
  for (const auto& a : j.value("activations", json::array())) out.activations.push_back(a.get<Activation>());
  v = std::move(out);
}

std::vector<std::string> validate_scenario(const Scenario& s) {
  std::vector<std::string> out;
  std::set<std::string> station_ids, types, groups, routing_ids, worker_names;
  for (const auto& st : s.stations) {
    if (st.id.empty()) out.push_back("station with empty id");
    if (!station_ids.insert(st.id).second) out.push_back("duplicate station id '" + st.id + "'");
    if (st.station_type.empty()) out.push_back("station '" + st.id + "' has no station_type");
    if (!is_valid(st.pose)) out.push_back("station '" + st.id + "' has a non-finite pose");
    types.insert(st.station_type);
  }
  for (const auto& w : s.workers) {
    if (w.name.empty()) out.push_back("worker with empty name");
    if (!worker_names.insert(w.name).second) out.push_back("duplicate worker name '" + w.name + "'");
    if (!(w.speed > 0)) out.push_back("worker '" + w.name + "': speed must be > 0");
    if (!(w.battery_start >= 0 && w.battery_start <= 1)) out.push_back("worker '" + w.name + "': battery_start outside [0, 1]");
    if (!(w.battery_drain_per_meter >= 0)) out.push_back("worker '" + w.name + "': battery_drain_per_meter must be >= 0");
    if (!is_valid(w.start_pose)) out.push_back("worker '" + w.name + "' has a non-finite start_pose");
    groups.insert(w.worker_group);
  }
  for (const auto& r : s.routings) {
    if (!routing_ids.insert(r.id).second) out.push_back("duplicate routing id '" + r.id + "'");
    for (const auto& v : validate_routing(r, types, groups)) out.push_back("routing '" + r.id + "': " + v.message);
  }
  for (std::size_t i = 0; i < s.activations.size(); ++i) {
    const auto& a = s.activations[i];
    const std::string where = "activation " + std::to_string(i);
    if (!routing_ids.count(a.routing_id)) out.push_back(where + ": unknown routing '" + a.routing_id + "'");
    if (a.quantity < 1) out.push_back(where + ": quantity must be >= 1");
    if (!(a.at_time >= 0)) out.push_back(where + ": at_time must be >= 0");
  }
  return out;
}

Scenario parse_scenario(const std::string& text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = locate(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ValidationError(source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
  }
  Scenario s;
  try {
    s = j.get<Scenario>();
  } catch (const json::exception& e) {
    throw ValidationError(source + ": " + e.what());
  }
  if (auto v = validate_scenario(s); !v.empty()) throw ScenarioInvalid(std::move(v));
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scenario file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path);
}

}  // namespace agm
