#include "agm/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <httplib.h>

#include "agm/store.hpp"
#include "agm/wire.hpp"

namespace agm {

StepResult step_robot(const RobotState& state, double dt) {
  StepResult out{state, 0.0, 0.0, RobotAction::none};
  if (state.task == RobotTask::idle || !(dt > 0)) return out;

  RobotState& s = out.state;
  const Pose3& target = state.task == RobotTask::to_source ? state.source : state.destination;
  const double remaining = pose_distance(s.pose, target);
  const double reach = s.speed * dt;

  if (reach < remaining) {
    const double f = reach / remaining;
    s.pose.yaw = std::atan2(target.y - s.pose.y, target.x - s.pose.x);
    s.pose.x += (target.x - s.pose.x) * f;
    s.pose.y += (target.y - s.pose.y) * f;
    s.pose.z += (target.z - s.pose.z) * f;
    out.moved = reach;
    out.time_used = dt;
  } else {
    s.pose = target;
    out.moved = remaining;
    out.time_used = s.speed > 0 ? remaining / s.speed : 0.0;
    if (state.task == RobotTask::to_source) {
      s.task = RobotTask::to_destination;
      out.action = RobotAction::arrived_at_source;
    } else {
      s.task = RobotTask::idle;
      out.action = RobotAction::arrived_at_destination;
    }
  }
  s.battery = std::max(0.0, s.battery - s.drain_per_meter * out.moved);
  s.odometer += out.moved;
  return out;
}

// ---------------------------------------------------------------------------

struct HttpTransport::Impl {
  std::string base_url;
  std::chrono::milliseconds retry_for;
  httplib::Client client;

  Impl(std::string url, std::chrono::milliseconds r) : base_url(url), retry_for(r), client(url) {
    client.set_connection_timeout(std::chrono::seconds(2));
    client.set_read_timeout(std::chrono::seconds(30));
    client.set_keep_alive(true);
    client.set_tcp_nodelay(true);
  }
};

HttpTransport::HttpTransport(std::string base_url, std::chrono::milliseconds retry_for)
    : impl_(std::make_unique<Impl>(std::move(base_url), retry_for)) {}

HttpTransport::~HttpTransport() = default;

ApiResponse HttpTransport::call(const ApiRequest& req) {
  const auto deadline = std::chrono::steady_clock::now() + impl_->retry_for;
  httplib::Params params(req.params.begin(), req.params.end());
  const std::string path = params.empty() ? req.path : httplib::append_query_params(req.path, params);
  for (;;) {
    httplib::Result res{nullptr, httplib::Error::Unknown};
    auto& c = impl_->client;
    if (req.method == "GET") {
      res = c.Get(path);
    } else if (req.method == "POST") {
      res = c.Post(path, req.body, "application/json");
    } else if (req.method == "PUT") {
      res = c.Put(path, req.body, "application/json");
    } else if (req.method == "DELETE") {
      res = c.Delete(path);
    } else {
      throw std::invalid_argument("unsupported method " + req.method);
    }
    if (res) {
      ApiResponse out{res->status, res->body, res->get_header_value("Content-Type")};
      return out;
    }
    if (std::chrono::steady_clock::now() >= deadline) {
      throw std::runtime_error(req.method + " " + impl_->base_url + req.path + ": " + httplib::to_string(res.error()));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

// ---------------------------------------------------------------------------

namespace {

class Client {
 public:
  explicit Client(Transport& t) : t_(t) {}

  ApiResponse raw(const std::string& method, const std::string& path, const json& body = nullptr,
                  std::map<std::string, std::string> params = {}) {
    return t_.call(ApiRequest{method, path, std::move(params), body.is_null() ? std::string() : body.dump()});
  }

  json ok(const std::string& method, const std::string& path, const json& body = nullptr,
          std::map<std::string, std::string> params = {}) {
    auto res = raw(method, path, body, std::move(params));
    if (res.status < 200 || res.status >= 300) {
      throw std::runtime_error(method + " " + path + " -> " + std::to_string(res.status) + " " + res.body);
    }
    return res.json_body();
  }

  void set_clock(double t) { ok("POST", "/api/sim/clock", json{{"now", format_timestamp(add_seconds(sim_epoch(), t))}}); }

 private:
  Transport& t_;
};

struct Robot {
  std::string name;
  RobotState st;
  JobPhase phase = JobPhase::assigned;
  double next_poll_at = 0.0;
  double last_report_at = 0.0;
  WorkerReport rep;

  bool has_job() const { return !st.job_id.empty(); }

  void drop_job() {
    st.job_id.clear();
    st.task = RobotTask::idle;
  }

  // Returns false when the server no longer recognises the job.
  bool report(Client& c, JobPhase p, double t) {
    auto r = c.ok("POST", "/workerJobProgress",
                  json{{"key", st.worker_id},
                       {"job_id", st.job_id},
                       {"phase", to_string(p)},
                       {"pose", st.pose},
                       {"battery", st.battery}});
    last_report_at = t;
    if (r.value("status", 0) != 1) return false;
    phase = p;
    return true;
  }

  void finish(Client& c, double t) {
    report(c, JobPhase::delivered, t);  // a repeat after a lost reply is harmless
    auto r = c.ok("POST", "/workerJobComplete", json{{"key", st.worker_id}, {"job_id", st.job_id}});
    if (r.value("status", 0) == 1) ++rep.jobs_completed;
    drop_job();
    next_poll_at = t;
  }

  void poll(Client& c, double t, double poll_interval) {
    auto res = c.raw("GET", "/workerGetNextJob", nullptr, {{"key", st.worker_id}});
    if (res.status != 200) throw std::runtime_error("workerGetNextJob -> " + std::to_string(res.status) + " " + res.body);
    auto payload = decode<JobPayload>(res.json_body());
    if (payload.status != 1) {
      next_poll_at = t + poll_interval;
      return;
    }
    st.job_id = payload.job_id;
    st.source = payload.source;
    st.destination = payload.destination;
    st.task = RobotTask::to_source;
    phase = JobPhase::assigned;
    if (!report(c, JobPhase::en_route_to_source, t)) drop_job();
  }

  // One simulated interval of length dt ending at time t.
  void act(Client& c, double t, double dt, const SimOptions& opt) {
    if (!has_job()) rep.idle_time += dt;

    double remaining = dt;
    while (has_job() && st.task != RobotTask::idle && remaining > 0) {
      auto r = step_robot(st, remaining);
      st = r.state;
      remaining -= r.time_used;
      if (r.action == RobotAction::arrived_at_source) {
        if (!report(c, JobPhase::carrying, t)) drop_job();
      } else if (r.action == RobotAction::arrived_at_destination) {
        finish(c, t);
      } else {
        break;
      }
    }
    // A zero-length first leg arrives without using time.
    if (has_job() && st.task == RobotTask::to_source && pose_distance(st.pose, st.source) == 0.0) {
      st.task = RobotTask::to_destination;
      if (!report(c, JobPhase::carrying, t)) drop_job();
    }
    if (has_job() && st.task == RobotTask::to_destination && pose_distance(st.pose, st.destination) == 0.0) {
      finish(c, t);
    }

    if (has_job() && t - last_report_at >= opt.progress_interval) {
      if (!report(c, phase, t)) drop_job();
    }
    if (!has_job() && t >= next_poll_at) poll(c, t, opt.poll_interval);
  }
};

std::vector<Robot> make_robots(const Scenario& s, const std::map<std::string, std::string>& ids) {
  std::vector<Robot> robots;
  for (const auto& w : s.workers) {
    Robot r;
    r.name = w.name;
    r.st.worker_id = ids.at(w.name);
    r.st.pose = w.start_pose;
    r.st.speed = w.speed;
    r.st.battery = w.battery_start;
    r.st.drain_per_meter = w.battery_drain_per_meter;
    robots.push_back(std::move(r));
  }
  std::sort(robots.begin(), robots.end(), [](const Robot& a, const Robot& b) { return a.st.worker_id < b.st.worker_id; });
  return robots;
}

// Tracks activations and completions from the audit log.
struct Progress {
  std::vector<AuditEvent> events;
  std::set<std::string> activated;
  std::set<std::string> completed;
  std::optional<double> first_activation;
  std::optional<Timestamp> last_completion;
  std::size_t next_activation = 0;
  std::vector<Activation> schedule;

  explicit Progress(const Scenario& s) : schedule(s.activations) {
    std::stable_sort(schedule.begin(), schedule.end(),
                     [](const Activation& a, const Activation& b) { return a.at_time < b.at_time; });
  }

  void activate_due(Client& c, double t) {
    while (next_activation < schedule.size() && schedule[next_activation].at_time <= t + 1e-9) {
      const auto& a = schedule[next_activation];
      auto r = c.ok("POST", "/api/routings/" + a.routing_id + "/activate", json{{"quantity", a.quantity}});
      for (const auto& id : r.at("instance_ids")) activated.insert(id.get<std::string>());
      if (!first_activation) first_activation = t;
      ++next_activation;
    }
  }

  void fetch(Client& c) {
    auto arr = c.ok("GET", "/api/events", nullptr, {{"stream", "false"}, {"since", std::to_string(events.size())}});
    for (const auto& j : arr) {
      auto e = decode<AuditEvent>(j);
      if (e.seq != events.size()) continue;  // already seen
      if (e.kind == AuditKind::routing_completed && e.payload.value("outcome", "") == "completed" &&
          activated.count(e.subject_id)) {
        completed.insert(e.subject_id);
        last_completion = e.timestamp;
      }
      events.push_back(std::move(e));
    }
  }

  bool done() const { return next_activation == schedule.size() && completed.size() == activated.size(); }
};

RunReport build_report(const Scenario& s, Client& c, Progress& p, const std::vector<Robot>& robots, bool complete,
                       std::uint64_t seed, double tick) {
  RunReport r;
  r.scenario = s.name;
  r.seed = seed;
  r.tick = tick;
  r.complete = complete;
  r.activated_instances = static_cast<int>(p.activated.size());
  r.completed_instances = static_cast<int>(p.completed.size());
  r.event_count = p.events.size();
  if (p.first_activation && p.last_completion) {
    r.makespan = std::max(0.0, seconds_between(add_seconds(sim_epoch(), *p.first_activation), *p.last_completion));
  }
  for (const auto& robot : robots) {
    WorkerReport w = robot.rep;
    w.distance_traveled = robot.st.odometer;
    r.per_worker[robot.name] = w;
  }

  std::map<std::string, double> busy;
  std::map<std::pair<std::string, std::string>, Timestamp> started;
  for (const auto& e : p.events) {
    if (e.kind != AuditKind::workstation_state) continue;
    const auto action = e.payload.value("action", "");
    const auto key = std::make_pair(e.subject_id, e.payload.value("instance_id", ""));
    if (action == "processing_started") {
      started[key] = e.timestamp;
    } else if (action == "processing_finished" || action == "processing_cancelled") {
      if (auto it = started.find(key); it != started.end()) {
        busy[e.subject_id] += seconds_between(it->second, e.timestamp);
        started.erase(it);
      }
    }
  }
  for (const auto& ws : c.ok("GET", "/api/workstations")) {
    const auto id = ws.at("id").get<std::string>();
    const int cap = ws.at("capacity").get<int>();
    const double u = r.makespan > 0 ? busy[id] / (r.makespan * cap) : 0.0;
    r.per_station[id] = std::clamp(u, 0.0, 1.0);
  }

  if (!complete) {
    for (const auto& j : c.ok("GET", "/api/instances")) {
      auto inst = decode<RoutingInstance>(j);
      if (!p.activated.count(inst.id) || inst.phase == InstancePhase::completed) continue;
      r.stuck.push_back({inst.id, std::string(to_string(inst.phase)), inst.current_step, inst.location});
    }
  }
  return r;
}

}  // namespace

std::map<std::string, std::string> preload_scenario(Transport& t, const Scenario& s) {
  Client c(t);
  std::map<std::string, std::string> ids;
  for (const auto& w : s.workers) {
    auto found = c.ok("GET", "/api/workers", nullptr, {{"name", w.name}});
    if (!found.empty()) {
      ids[w.name] = found.front().at("id").get<std::string>();
      continue;
    }
    auto created = c.ok("POST", "/api/workers",
                        json{{"name", w.name},
                             {"worker_group", w.worker_group},
                             {"pose", w.start_pose},
                             {"battery", w.battery_start}});
    ids[w.name] = created.at("id").get<std::string>();
  }
  for (const auto& st : s.stations) {
    auto res = c.raw("POST", "/api/workstations", json(st));
    if (res.status != 201 && res.status != 409) {
      throw std::runtime_error("creating station " + st.id + ": " + std::to_string(res.status) + " " + res.body);
    }
  }
  for (const auto& r : s.routings) {
    auto res = c.raw("POST", "/api/routings", json(r));
    if (res.status != 201 && res.status != 409) {
      throw std::runtime_error("creating routing " + r.id + ": " + std::to_string(res.status) + " " + res.body);
    }
  }
  return ids;
}

SimResult run(const Scenario& s, Transport& t, const SimOptions& opt) {
  if (!(opt.tick > 0)) throw std::invalid_argument("tick must be > 0");
  Client c(t);
  c.set_clock(0.0);
  auto robots = make_robots(s, preload_scenario(t, s));
  Progress p(s);

  bool complete = false;
  for (std::uint64_t k = 0;; ++k) {
    const double now = static_cast<double>(k) * opt.tick;
    if (opt.on_tick) opt.on_tick(k, now);
    c.set_clock(now);
    p.activate_due(c, now);
    for (auto& robot : robots) robot.act(c, now, k == 0 ? 0.0 : opt.tick, opt);
    p.fetch(c);
    if (p.done()) {
      complete = true;
      break;
    }
    if (now >= opt.max_sim_time) break;
  }
  p.fetch(c);
  SimResult out;
  out.report = build_report(s, c, p, robots, complete, opt.seed, opt.tick);
  out.events = std::move(p.events);
  return out;
}

SimResult run_embedded(const Scenario& s, const SimOptions& opt, SchedulerConfig cfg) {
  auto clock = std::make_shared<ManualClock>(sim_epoch());
  FleetService fleet(DocumentStore::in_memory(), clock, cfg);
  ApiService api(fleet, clock);
  InProcessTransport t(api);
  return run(s, t, opt);
}

SimResult run_stress(const Scenario& s, const std::string& base_url, const StressOptions& opt) {
  if (!(opt.tick > 0)) throw std::invalid_argument("tick must be > 0");
  HttpTransport driver_transport(base_url);
  Client driver(driver_transport);
  driver.set_clock(0.0);
  auto robots = make_robots(s, preload_scenario(driver_transport, s));
  Progress p(s);

  std::atomic<std::int64_t> sim_ms{0};
  std::atomic<bool> stop{false};
  std::mutex error_mu;
  std::string error;
  SimOptions robot_opt;
  robot_opt.tick = opt.tick;

  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < robots.size(); ++i) {
    threads.emplace_back([&, i] {
      Robot& robot = robots[i];
      HttpTransport transport(base_url);
      Client c(transport);
      std::mt19937_64 rng(opt.seed * 0x9E3779B97F4A7C15ULL + i);
      std::uniform_int_distribution<int> jitter(0, static_cast<int>(opt.max_jitter.count()));
      std::int64_t last = 0;
      try {
        while (!stop.load()) {
          const std::int64_t now_ms = sim_ms.load();
          robot.act(c, static_cast<double>(now_ms) / 1000.0, static_cast<double>(now_ms - last) / 1000.0, robot_opt);
          last = now_ms;
          std::this_thread::sleep_for(std::chrono::milliseconds(jitter(rng)));
        }
      } catch (const std::exception& e) {
        std::lock_guard lock(error_mu);
        if (error.empty()) error = robot.name + ": " + e.what();
        stop = true;
      }
    });
  }

  bool complete = false;
  try {
    for (std::uint64_t k = 0; !stop.load(); ++k) {
      const double now = static_cast<double>(k) * opt.tick;
      driver.set_clock(now);
      sim_ms = static_cast<std::int64_t>(std::llround(now * 1000.0));
      p.activate_due(driver, now);
      p.fetch(driver);
      if (p.done()) {
        complete = true;
        break;
      }
      if (now >= opt.max_sim_time) break;
      std::this_thread::sleep_for(opt.wall_per_tick);
    }
  } catch (...) {
    stop = true;
    for (auto& th : threads) th.join();
    throw;
  }
  stop = true;
  for (auto& th : threads) th.join();
  if (!error.empty()) throw std::runtime_error(error);

  p.fetch(driver);
  SimResult out;
  out.report = build_report(s, driver, p, robots, complete, opt.seed, opt.tick);
  out.events = std::move(p.events);
  return out;
}

// ---------------------------------------------------------------------------

void to_json(json& j, const RunReport& r) {
  json workers = json::object();
  for (const auto& [name, w] : r.per_worker) {
    workers[name] = json{{"distance_traveled", w.distance_traveled},
                         {"jobs_completed", w.jobs_completed},
                         {"idle_time", w.idle_time}};
  }
  json stations = json::object();
  for (const auto& [id, u] : r.per_station) stations[id] = json{{"utilization", u}};
  json stuck = json::array();
  for (const auto& s : r.stuck) {
    stuck.push_back(json{{"instance_id", s.instance_id},
                         {"phase", s.phase},
                         {"current_step", s.current_step},
                         {"location", s.location}});
  }
  j = json{{"scenario", r.scenario},
           {"seed", r.seed},
           {"tick", r.tick},
           {"complete", r.complete},
           {"makespan", r.makespan},
           {"activated_instances", r.activated_instances},
           {"completed_instances", r.completed_instances},
           {"event_count", r.event_count},
           {"per_worker", workers},
           {"per_station", stations},
           {"stuck", stuck}};
}

std::string format_table(const RunReport& r) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(1);
  o << "scenario   " << r.scenario << (r.complete ? "" : "  (INCOMPLETE)") << "\n";
  o << "makespan   " << r.makespan << " s\n";
  o << "instances  " << r.completed_instances << "/" << r.activated_instances << " completed\n";
  o << "events     " << r.event_count << "\n\n";
  o << std::left << std::setw(16) << "worker" << std::right << std::setw(12) << "distance m" << std::setw(8) << "jobs"
    << std::setw(12) << "idle s" << "\n";
  for (const auto& [name, w] : r.per_worker) {
    o << std::left << std::setw(16) << name << std::right << std::setw(12) << w.distance_traveled << std::setw(8)
      << w.jobs_completed << std::setw(12) << w.idle_time << "\n";
  }
  o << "\n" << std::left << std::setw(16) << "station" << std::right << std::setw(12) << "util %" << "\n";
  for (const auto& [id, u] : r.per_station) {
    o << std::left << std::setw(16) << id << std::right << std::setw(12) << u * 100.0 << "\n";
  }
  for (const auto& s : r.stuck) {
    o << "stuck " << s.instance_id << " step " << s.current_step << " " << s.phase << " at " << s.location << "\n";
  }
  return o.str();
}

}  // namespace agm
