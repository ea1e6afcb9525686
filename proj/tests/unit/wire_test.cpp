#include <random>

#include <gtest/gtest.h>

#include "agm/error.hpp"
#include "agm/scheduler.hpp"
#include "agm/wire.hpp"

using namespace agm;

namespace {

struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
  std::string text() {
    static const std::string alphabet = "abcXYZ019 _-\"\\/\xc3\xa9";
    std::string s;
    for (int n = integer(0, 12); n > 0; --n) s += alphabet[static_cast<std::size_t>(integer(0, int(alphabet.size()) - 1))];
    // Keep UTF-8 valid: drop a dangling lead byte.
    while (!s.empty() && static_cast<unsigned char>(s.back()) == 0xc3) s.pop_back();
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto c = static_cast<unsigned char>(s[i]);
      if (c == 0xa9 && (out.empty() || static_cast<unsigned char>(out.back()) != 0xc3)) continue;
      if (c == 0xc3 && (i + 1 >= s.size() || static_cast<unsigned char>(s[i + 1]) != 0xa9)) continue;
      out += s[i];
    }
    return out;
  }
  Timestamp time() { return add_seconds(sim_epoch(), integer(0, 1'000'000'000) / 1000.0); }
  Pose3 pose() { return Pose3{real(-100, 100), real(-100, 100), real(-5, 5), normalize_yaw(real(-10, 10))}; }
  template <typename E>
  E pick(std::initializer_list<E> values) {
    return *(values.begin() + integer(0, static_cast<int>(values.size()) - 1));
  }
};

template <typename T>
void expect_round_trip(const T& v) {
  const json j = v;
  EXPECT_EQ(decode<T>(json::parse(j.dump())), v) << j.dump();
}

}  // namespace

TEST(Wire, RandomRoundTrips) {
  Gen g(1234);
  for (int i = 0; i < 300; ++i) {
    expect_round_trip(g.pose());

    Worker w{g.text(), g.text(), g.text(),
             g.pick({WorkerStatus::idle, WorkerStatus::assigned, WorkerStatus::working, WorkerStatus::charging,
                     WorkerStatus::offline}),
             g.pose(), g.real(0, 1), g.time(), g.text(), g.integer(0, 65535)};
    expect_round_trip(w);

    Workstation ws{g.text(), g.text(), g.text(), g.pose(), g.integer(1, 9),
                   g.pick({StationState::free, StationState::occupied, StationState::down}), 0};
    ws.occupancy = g.integer(0, ws.capacity);
    if (ws.state != StationState::down) ws.state = derive_state(ws);  // decoding re-derives it
    expect_round_trip(ws);

    Routing r{g.text(), g.text(), g.text(), {}, g.integer(0, 1) == 1};
    for (int k = g.integer(0, 5), idx = 0; idx < k; ++idx) {
      r.steps.push_back({idx, g.text(), g.text(), g.text(), g.real(0, 500), g.integer(-5, 5)});
    }
    expect_round_trip(r);

    RoutingInstance inst{g.text(), g.text(), g.integer(0, 9),
                         g.pick({InstancePhase::awaiting_transport, InstancePhase::in_transit,
                                 InstancePhase::processing, InstancePhase::completed}),
                         g.text(), g.time(), std::nullopt};
    if (g.integer(0, 1)) inst.completed_at = g.time();
    expect_round_trip(inst);

    Job job{g.text(), g.text(), g.text(), g.integer(0, 9), g.pose(), g.pose(), g.text(), g.text(), g.time(),
            g.pick({JobPhase::assigned, JobPhase::en_route_to_source, JobPhase::carrying, JobPhase::delivered})};
    expect_round_trip(job);

    JobPayload p{1, g.text(), g.pose(), g.pose(), g.text(), g.text(), g.text()};
    expect_round_trip(p);

    AuditEvent e{static_cast<std::uint64_t>(g.integer(0, 1 << 30)), g.time(),
                 g.pick({AuditKind::task_assigned, AuditKind::worker_activity, AuditKind::workstation_state,
                         AuditKind::routing_activated, AuditKind::routing_completed}),
                 g.text(), json{{"k", g.text()}, {"n", g.integer(0, 100)}}};
    expect_round_trip(e);

    SchedulerConfig cfg{g.real(0, 1), g.integer(1, 10), g.real(1, 1000)};
    expect_round_trip(cfg);
  }
}

TEST(Wire, NoWorkPayloadCarriesOnlyStatus) {
  EXPECT_EQ(json(JobPayload::none()).dump(), R"({"status":0})");
}

TEST(Wire, RejectsOutOfRangeValues) {
  EXPECT_THROW(decode<Worker>(json{{"battery", 1.5}}), ValidationError);
  EXPECT_THROW(decode<Worker>(json{{"battery", -0.1}}), ValidationError);
  EXPECT_THROW(decode<Workstation>(json{{"capacity", 0}}), ValidationError);
  EXPECT_THROW(decode<Workstation>(json{{"capacity", 1}, {"occupancy", 2}}), ValidationError);
  EXPECT_THROW(decode<Worker>(json{{"status", "sleeping"}}), ValidationError);
  EXPECT_THROW(decode<Worker>(json{{"last_seen", "yesterday"}}), ValidationError);
  EXPECT_THROW(decode<Worker>(json{{"name", 42}}), ValidationError);
  EXPECT_THROW(decode<JobPayload>(json{{"status", 2}}), ValidationError);
  EXPECT_THROW(decode<JobPayload>(json{{"status", "1"}}), ValidationError);
  EXPECT_THROW(decode<Pose3>(json::array()), ValidationError);
}

TEST(Wire, YawIsNormalizedOnRead) {
  const auto p = decode<Pose3>(json{{"x", 1}, {"yaw", 7.0}});
  EXPECT_NEAR(p.yaw, 7.0 - 2 * 3.141592653589793, 1e-12);
  EXPECT_EQ(p.x, 1.0);
}

TEST(Wire, ViolationEncoding) {
  EXPECT_EQ(json(RoutingViolation{2, "step 2: x"}), (json{{"step", 2}, {"message", "step 2: x"}}));
  EXPECT_EQ(json(RoutingViolation{std::nullopt, "empty steps"})["step"], nullptr);
}
