// agm-server: the fleet manager HTTP service.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "agm/config.hpp"
#include "agm/http_server.hpp"
#include "agm/scenario.hpp"
#include "agm/simulator.hpp"
#include "agm/store.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Fleet manager server: worker pull protocol, resource API and event stream"};
  std::string listen, data_dir, config_path, scenario_path, ui_dir, port_file;
  bool sim_clock = false;
  bool fsync = false;
  app.add_option("--listen", listen, "host:port to bind (port 0 picks a free port)");
  app.add_option("--data-dir", data_dir, "directory for journals and the audit log (default: $AGM_DATA_DIR)");
  app.add_option("--config", config_path, "JSON server config");
  app.add_option("--scenario", scenario_path, "preload workers, workstations and routings from a scenario file");
  app.add_flag("--sim-clock", sim_clock, "run on a manual clock driven through POST /api/sim/clock");
  app.add_flag("--fsync", fsync, "fsync every journal append");
  app.add_option("--ui-dir", ui_dir, "static files served under /ui");
  app.add_option("--port-file", port_file, "write the bound port to this file once listening");
  CLI11_PARSE(app, argc, argv);

  agm::ServerConfig cfg;
  try {
    if (!config_path.empty()) cfg = agm::load_server_config(config_path);
    if (!listen.empty()) cfg.listen_address = listen;
    if (!data_dir.empty()) {
      cfg.data_dir = data_dir;
    } else if (cfg.data_dir.empty()) {
      if (const char* env = std::getenv("AGM_DATA_DIR")) cfg.data_dir = env;
    }
    if (cfg.tls) {
      std::cerr << "agm-server: TLS is not terminated by this server; put it behind a reverse proxy and remove "
                   "\"tls\" from the config\n";
      return 2;
    }
    agm::validate(cfg);
  } catch (const std::exception& e) {
    std::cerr << "agm-server: " << e.what() << "\n";
    return 2;
  }

  // Signals are consumed by sigwait below; block them before any thread starts.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  try {
    agm::StoreOptions opts;
    opts.fsync = fsync;
    auto store = cfg.data_dir.empty() ? agm::DocumentStore::in_memory(opts) : agm::DocumentStore::open(cfg.data_dir, opts);
    if (cfg.data_dir.empty()) std::cerr << "agm-server: no data dir; state is kept in memory only\n";

    std::shared_ptr<agm::ManualClock> manual;
    std::shared_ptr<const agm::Clock> clock;
    if (sim_clock) {
      manual = std::make_shared<agm::ManualClock>(agm::sim_epoch());
      // Simulated time never runs backwards, so a restart resumes from the last audited instant.
      if (const auto n = store->audit_size(); n > 0) manual->set(store->read_audit(n - 1).front().timestamp);
      clock = manual;
    } else {
      clock = std::make_shared<agm::SystemClock>();
    }
    agm::FleetService fleet(store, clock, cfg.scheduler, cfg.org_id);

    const auto repaired = fleet.recover();
    if (repaired.total() > 0) {
      std::cerr << "agm-server: recovery: " << repaired.orphan_jobs_removed << " orphan jobs, "
                << repaired.completions_finished << " completions finished, " << repaired.claims_rolled_back
                << " claims rolled back, " << repaired.timers_rearmed + repaired.timers_removed << " timers, "
                << repaired.occupancy_fixed << " occupancy, " << repaired.workers_fixed << " workers, "
                << repaired.audit_events_added << " audit events\n";
    }

    agm::ApiService api(fleet, manual);
    if (!scenario_path.empty()) {
      agm::InProcessTransport local(api);
      for (const auto& [name, id] : agm::preload_scenario(local, agm::load_scenario(scenario_path))) {
        std::cout << "worker " << name << " " << id << "\n";
      }
    }

    const auto addr = agm::parse_listen_address(cfg.listen_address);
    agm::HttpServer server(api, ui_dir);
    const int port = server.bind(addr.host, addr.port);
    server.start();
    std::cout << "agm-server listening on http://" << addr.host << ":" << port << std::endl;
    if (!port_file.empty()) {
      const std::string tmp = port_file + ".tmp";
      std::ofstream(tmp) << port << "\n";
      std::rename(tmp.c_str(), port_file.c_str());
    }

    std::atomic<bool> done{false};
    std::thread ticker;
    if (!sim_clock) {
      ticker = std::thread([&] {
        while (!done.load()) {
          try {
            fleet.tick();
          } catch (const std::exception& e) {
            std::cerr << "agm-server: tick: " << e.what() << "\n";
          }
          std::this_thread::sleep_for(std::chrono::milliseconds(200));
        }
      });
    }

    int sig = 0;
    sigwait(&signals, &sig);
    done = true;
    server.stop();
    if (ticker.joinable()) ticker.join();
    std::cerr << "agm-server: stopped\n";
  } catch (const std::exception& e) {
    std::cerr << "agm-server: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
