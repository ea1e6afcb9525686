#pragma once

// Fleet simulator: virtual robots that speak the worker protocol.
//
// Robots travel straight lines at constant speed and drain battery per metre.
// In the deterministic mode one thread advances simulated time in fixed
// ticks, drives the server's manual clock, and lets each robot act in worker
// id order. The stress mode runs one thread per robot against a live HTTP
// server so that polls genuinely race.

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "agm/api.hpp"
#include "agm/domain.hpp"
#include "agm/scenario.hpp"

namespace agm {

enum class RobotTask { idle, to_source, to_destination };
enum class RobotAction { none, arrived_at_source, arrived_at_destination };

struct RobotState {
  std::string worker_id;
  Pose3 pose;
  double speed = 1.0;
  double battery = 1.0;
  double drain_per_meter = 0.0;
  RobotTask task = RobotTask::idle;
  std::string job_id;
  Pose3 source;
  Pose3 destination;
  double odometer = 0.0;

  friend bool operator==(const RobotState&, const RobotState&) = default;
};

struct StepResult {
  RobotState state;
  double moved = 0.0;      // metres
  double time_used = 0.0;  // seconds, <= dt
  RobotAction action = RobotAction::none;
};

/// Advances along the current leg by min(speed * dt, remaining). Arrival snaps
/// to the target pose and switches the leg (source -> destination -> idle).
/// Requires dt > 0.
StepResult step_robot(const RobotState& state, double dt);

/// Request/response channel to a fleet server.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual ApiResponse call(const ApiRequest& req) = 0;
};

class InProcessTransport : public Transport {
 public:
  explicit InProcessTransport(ApiService& api) : api_(api) {}
  ApiResponse call(const ApiRequest& req) override { return api_.handle(req); }

 private:
  ApiService& api_;
};

/// HTTP client. With a positive `retry_for`, connection failures are retried
/// until that much wall time has passed (a restarting server looks like that).
class HttpTransport : public Transport {
 public:
  explicit HttpTransport(std::string base_url, std::chrono::milliseconds retry_for = std::chrono::milliseconds(0));
  ~HttpTransport() override;
  ApiResponse call(const ApiRequest& req) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Registers the scenario's workers, stations and routings (in that order).
/// Existing records are kept, so it is safe to run against a populated server.
/// Returns worker name -> worker id.
std::map<std::string, std::string> preload_scenario(Transport& t, const Scenario& s);

struct WorkerReport {
  double distance_traveled = 0.0;
  int jobs_completed = 0;
  double idle_time = 0.0;
};

struct StuckInstance {
  std::string instance_id;
  std::string phase;
  int current_step = 0;
  std::string location;
};

struct RunReport {
  std::string scenario;
  std::uint64_t seed = 0;
  double tick = 0.0;
  bool complete = true;
  double makespan = 0.0;
  int activated_instances = 0;
  int completed_instances = 0;
  std::uint64_t event_count = 0;
  std::map<std::string, WorkerReport> per_worker;  // keyed by worker name
  std::map<std::string, double> per_station;       // station id -> utilization
  std::vector<StuckInstance> stuck;
};

void to_json(json& j, const RunReport& r);
/// Fixed-width text table for terminals.
std::string format_table(const RunReport& r);

struct SimOptions {
  std::uint64_t seed = 0;
  double tick = 0.5;             // seconds of simulated time per step
  double max_sim_time = 36000.0;
  double poll_interval = 1.0;
  double progress_interval = 5.0;
  /// Called at the start of every tick with (tick number, simulated seconds).
  std::function<void(std::uint64_t, double)> on_tick;
};

struct SimResult {
  RunReport report;
  std::vector<AuditEvent> events;  // the full audit log at the end of the run
};

/// Deterministic run. The server must run on a manual clock starting at
/// sim_epoch(); the simulator sets it to sim_epoch() + t every tick.
SimResult run(const Scenario& s, Transport& t, const SimOptions& opt);

/// Deterministic run against a fresh in-memory server in this process.
SimResult run_embedded(const Scenario& s, const SimOptions& opt, SchedulerConfig cfg = {});

struct StressOptions {
  std::uint64_t seed = 0;
  double tick = 0.5;
  double max_sim_time = 36000.0;
  std::chrono::milliseconds wall_per_tick{2};
  std::chrono::milliseconds max_jitter{3};
};

/// Concurrent run: one HTTP client thread per robot plus a clock driver.
/// `base_url` must point at a server with a manual clock.
SimResult run_stress(const Scenario& s, const std::string& base_url, const StressOptions& opt);

}  // namespace agm
