#pragma once

#include <string>
#include <vector>

#include "agm/domain.hpp"
#include "agm/error.hpp"
#include "agm/wire.hpp"

namespace agm {

struct ScenarioWorker {
  std::string name;
  std::string worker_group;
  Pose3 start_pose;
  double speed = 1.0;  // m/s
  double battery_start = 1.0;
  double battery_drain_per_meter = 0.0;
};

struct Activation {
  std::string routing_id;
  int quantity = 1;
  double at_time = 0.0;  // seconds after simulation start
};

struct Scenario {
  std::string name;
  std::vector<Workstation> stations;
  std::vector<Routing> routings;
  std::vector<ScenarioWorker> workers;
  std::vector<Activation> activations;
};

/// A scenario that parses but breaks its invariants.
class ScenarioInvalid : public ValidationError {
 public:
  explicit ScenarioInvalid(std::vector<std::string> v);
  std::vector<std::string> violations;
};

void to_json(json& j, const ScenarioWorker& v);
void from_json(const json& j, ScenarioWorker& v);
void to_json(json& j, const Activation& v);
void from_json(const json& j, Activation& v);
void to_json(json& j, const Scenario& v);
void from_json(const json& j, Scenario& v);

/// Every broken invariant; empty when the scenario is usable.
std::vector<std::string> validate_scenario(const Scenario& s);

/// Parse errors are ValidationError with "<source>:<line>:<column>"; an
/// invalid scenario throws ScenarioInvalid.
Scenario parse_scenario(const std::string& text, const std::string& source = "<scenario>");
Scenario load_scenario(const std::string& path);

}  // namespace agm
