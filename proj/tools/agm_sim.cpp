// agm-sim: drives virtual robots against a fleet server and reports the run.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "agm/audit_analysis.hpp"
#include "agm/http_server.hpp"
#include "agm/scenario.hpp"
#include "agm/simulator.hpp"
#include "agm/store.hpp"

namespace {

int check_invariants(const agm::Scenario& s, const agm::SimResult& r, bool serial) {
  std::map<std::string, agm::Routing> routings;
  for (const auto& x : s.routings) routings[x.id] = x;
  std::map<std::string, std::string> types;
  std::map<std::string, int> caps;
  for (const auto& st : s.stations) {
    types[st.id] = st.station_type;
    caps[st.id] = st.capacity;
  }
  int bad = 0;
  auto show = [&](const char* name, const std::vector<std::string>& v) {
    std::cout << (v.empty() ? "ok    " : "FAIL  ") << name << "\n";
    for (const auto& line : v) std::cout << "      " << line << "\n";
    bad += static_cast<int>(v.size());
  };
  show("mutual exclusion", agm::check_mutual_exclusion(r.events));
  show("capacity", agm::check_capacity(r.events, caps, serial));
  show("instance traces", agm::check_instance_traces(r.events, routings, types));
  return bad;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fleet simulator"};
  std::string scenario_path, endpoint, report_path;
  std::uint64_t seed = 0;
  double tick = 0.5;
  double max_sim_time = 36000.0;
  bool embed = false, stress = false;
  app.add_option("--scenario", scenario_path, "scenario file")->required();
  app.add_option("--seed", seed, "seed for the stochastic parts (stress jitter)");
  app.add_option("--tick", tick, "simulated seconds per step")->check(CLI::PositiveNumber);
  app.add_option("--max-sim-time", max_sim_time, "give up after this many simulated seconds");
  auto* embed_opt = app.add_flag("--embed-server", embed, "run an in-memory server inside this process");
  app.add_option("--endpoint", endpoint, "base URL of a server started with --sim-clock")->excludes(embed_opt);
  app.add_flag("--stress", stress, "one concurrent HTTP client per robot instead of lockstep ticks");
  app.add_option("--report", report_path, "write the RunReport JSON here");
  CLI11_PARSE(app, argc, argv);
  if (!embed && endpoint.empty()) embed = true;

  try {
    const auto scenario = agm::load_scenario(scenario_path);
    agm::SimResult result;

    if (stress) {
      agm::StressOptions opt;
      opt.seed = seed;
      opt.tick = tick;
      opt.max_sim_time = max_sim_time;
      if (embed) {
        auto clock = std::make_shared<agm::ManualClock>(agm::sim_epoch());
        agm::FleetService fleet(agm::DocumentStore::in_memory(), clock);
        agm::ApiService api(fleet, clock);
        agm::HttpServer server(api);
        const int port = server.bind("127.0.0.1", 0);
        server.start();
        result = agm::run_stress(scenario, "http://127.0.0.1:" + std::to_string(port), opt);
        server.stop();
      } else {
        result = agm::run_stress(scenario, endpoint, opt);
      }
    } else {
      agm::SimOptions opt;
      opt.seed = seed;
      opt.tick = tick;
      opt.max_sim_time = max_sim_time;
      if (embed) {
        result = agm::run_embedded(scenario, opt);
      } else {
        agm::HttpTransport transport(endpoint);
        result = agm::run(scenario, transport, opt);
      }
    }

    std::cout << agm::format_table(result.report) << "\n";
    const int violations = check_invariants(scenario, result, !stress);
    if (!report_path.empty()) std::ofstream(report_path) << nlohmann::json(result.report).dump(2) << "\n";
    return result.report.complete && violations == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "agm-sim: " << e.what() << "\n";
    return 2;
  }
}
