#pragma once

#include <map>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "agm/fleet_service.hpp"
#include "agm/time.hpp"

namespace agm {

struct ApiRequest {
  std::string method;  // "GET", "POST", ...
  std::string path;    // without query string
  std::map<std::string, std::string> params;
  std::string body;
};

struct ApiResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";

  nlohmann::json json_body() const { return nlohmann::json::parse(body); }
};

/// Transport-independent request handling for every HTTP endpoint except
/// the streamed form of /api/events (see HttpServer). Safe to call from
/// concurrent request threads.
///
///   GET  /workerGetNextJob?key=<worker-id>
///   POST /workerJobProgress            {key, job_id, phase, pose, battery}
///   POST /workerJobComplete            {key, job_id}
///   GET|POST /api/{workers|workstations|routings}
///   GET|PUT|DELETE /api/{workers|workstations|routings}/<id>
///   POST /api/routings/<id>/activate   {quantity}
///   GET  /api/instances, /api/instances/<id>; POST /api/instances/<id>/cancel
///   GET  /api/jobs, /api/jobs/<id>
///   GET  /api/events?since=<seq>&stream=false[&wait_ms=<ms>]
///   POST /api/sim/clock                {now} or {advance}   (manual clock only)
///   GET  /api/health
class ApiService {
 public:
  /// `manual_clock` enables /api/sim/clock; it must be the clock `fleet` reads.
  explicit ApiService(FleetService& fleet, std::shared_ptr<ManualClock> manual_clock = nullptr);

  ApiResponse handle(const ApiRequest& req);

  FleetService& fleet() { return fleet_; }
  bool manual_clock() const { return manual_clock_ != nullptr; }

 private:
  ApiResponse dispatch(const ApiRequest& req);

  ApiResponse next_job(const ApiRequest& req);
  ApiResponse job_progress(const ApiRequest& req);
  ApiResponse job_complete(const ApiRequest& req);
  ApiResponse events(const ApiRequest& req);
  ApiResponse sim_clock(const ApiRequest& req);

  template <typename T>
  ApiResponse crud(const ApiRequest& req, const std::string& id);
  ApiResponse activate(const std::string& routing_id, const ApiRequest& req);

  FleetService& fleet_;
  std::shared_ptr<ManualClock> manual_clock_;
};

}  // namespace agm
