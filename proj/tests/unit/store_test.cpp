#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include <gtest/gtest.h>

#include "agm/error.hpp"
#include "agm/store.hpp"
#include "agm/wire.hpp"

using namespace agm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static std::atomic<int> n{0};
    path = fs::temp_directory_path() / ("agm-store-test-" + std::to_string(::getpid()) + "-" + std::to_string(n++));
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

AuditEvent event(std::string subject, int n = 0) {
  return AuditEvent{0, sim_epoch(), AuditKind::worker_activity, std::move(subject), json{{"n", n}}};
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST(Store, CreateThenCompareAndSwap) {
  auto s = DocumentStore::in_memory();
  EXPECT_EQ(s->put("workers", "w1", json{{"a", 1}}, std::nullopt), 0u);
  EXPECT_THROW(s->put("workers", "w1", json{{"a", 2}}, std::nullopt), AlreadyExists);
  EXPECT_EQ(s->put("workers", "w1", json{{"a", 2}}, 0), 1u);
  EXPECT_THROW(s->put("workers", "w1", json{{"a", 3}}, 0), VersionConflict);
  EXPECT_THROW(s->put("workers", "nobody", json{}, 0), NotFound);
  const auto d = s->get("workers", "w1");
  ASSERT_TRUE(d);
  EXPECT_EQ(d->version, 1u);
  EXPECT_EQ(d->body["a"], 2);
}

TEST(Store, RemoveHonoursVersion) {
  auto s = DocumentStore::in_memory();
  s->put("jobs", "j1", json::object(), std::nullopt);
  EXPECT_THROW(s->remove("jobs", "j1", 5), VersionConflict);
  s->remove("jobs", "j1", 0);
  EXPECT_FALSE(s->get("jobs", "j1"));
  EXPECT_THROW(s->remove("jobs", "j1", std::nullopt), NotFound);
}

TEST(Store, UnknownCollection) {
  auto s = DocumentStore::in_memory();
  EXPECT_THROW(s->query("robots"), NotFound);
}

TEST(Store, QueryFiltersAndOrders) {
  auto s = DocumentStore::in_memory();
  s->put("workers", "b", json{{"worker_group", "PO Movement"}, {"battery", 0.5}, {"pose", {{"x", 3}}}}, std::nullopt);
  s->put("workers", "a", json{{"worker_group", "PO Movement"}, {"battery", 0.9}, {"pose", {{"x", 1}}}}, std::nullopt);
  s->put("workers", "c", json{{"worker_group", "Forklift"}, {"battery", 0.1}, {"pose", {{"x", 2}}}}, std::nullopt);

  auto ids = [](const std::vector<Document>& docs) {
    std::vector<std::string> out;
    for (const auto& d : docs) out.push_back(d.id);
    return out;
  };
  EXPECT_EQ(ids(s->query("workers", Query{}.where("worker_group", "PO Movement"))), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(ids(s->query("workers", Query{}.where("battery", FilterOp::lt, 0.6))), (std::vector<std::string>{"b", "c"}));
  EXPECT_EQ(ids(s->query("workers", Query{}.where("/pose/x", FilterOp::ge, 2).order_by("battery"))),
            (std::vector<std::string>{"c", "b"}));
  EXPECT_EQ(ids(s->query("workers", Query{}.where("worker_group", FilterOp::ne, "Forklift"))),
            (std::vector<std::string>{"a", "b"}));
}

TEST(Store, OrgScope) {
  auto s = DocumentStore::in_memory();
  s->put("routings", "r1", json::object(), std::nullopt, "org-a");
  s->put("routings", "r2", json::object(), std::nullopt, "org-b");
  EXPECT_EQ(s->query("routings", Query{}.in_org("org-a")).size(), 1u);
  EXPECT_EQ(s->query("routings").size(), 2u);
}

TEST(Store, ConcurrentCasIncrementsLoseNothing) {
  auto s = DocumentStore::in_memory();
  s->put("counters", "c", json{{"n", 0}}, std::nullopt);
  constexpr int kThreads = 8, kPerThread = 200;
  std::atomic<int> conflicts{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < kThreads; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < kPerThread;) {
        auto d = s->get("counters", "c");
        try {
          s->put("counters", "c", json{{"n", d->body["n"].get<int>() + 1}}, d->version);
          ++i;
        } catch (const VersionConflict&) {
          ++conflicts;
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  const auto d = s->get("counters", "c");
  EXPECT_EQ(d->body["n"], kThreads * kPerThread);
  EXPECT_EQ(d->version, std::uint64_t(kThreads * kPerThread));
}

TEST(Store, AuditSequenceIsDenseUnderConcurrency) {
  auto s = DocumentStore::in_memory();
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 50; ++i) s->append_audit(event("t" + std::to_string(t), i));
    });
  }
  for (auto& th : threads) th.join();
  const auto all = s->read_audit(0);
  ASSERT_EQ(all.size(), 400u);
  std::map<std::string, int> last;
  for (std::size_t i = 0; i < all.size(); ++i) {
    EXPECT_EQ(all[i].seq, i);
    // Per-thread order is preserved.
    const int n = all[i].payload["n"];
    auto [it, fresh] = last.emplace(all[i].subject_id, n);
    if (!fresh) {
      EXPECT_EQ(n, it->second + 1);
      it->second = n;
    }
  }
  EXPECT_EQ(s->read_audit(398).size(), 2u);
  EXPECT_TRUE(s->read_audit(400).empty());
}

TEST(Store, WaitForAudit) {
  auto s = DocumentStore::in_memory();
  EXPECT_FALSE(s->wait_for_audit(0, std::chrono::milliseconds(10)));
  std::thread writer([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    s->append_audit(event("x"));
  });
  EXPECT_TRUE(s->wait_for_audit(0, std::chrono::seconds(5)));
  writer.join();
}

TEST(Store, PersistsAcrossReopen) {
  TempDir dir;
  {
    auto s = DocumentStore::open(dir.path);
    s->put("workers", "w1", json{{"a", 1}}, std::nullopt, "org");
    s->put("workers", "w1", json{{"a", 2}}, 0, "org");
    s->put("jobs", "j1", json::object(), std::nullopt);
    s->remove("jobs", "j1", std::nullopt);
    s->append_audit(event("w1"));
  }
  auto s = DocumentStore::open(dir.path);
  const auto d = s->get("workers", "w1");
  ASSERT_TRUE(d);
  EXPECT_EQ(d->version, 1u);
  EXPECT_EQ(d->body["a"], 2);
  EXPECT_EQ(d->org_id, "org");
  EXPECT_FALSE(s->get("jobs", "j1"));
  EXPECT_EQ(s->audit_size(), 1u);
  EXPECT_EQ(s->append_audit(event("w1")), 1u);
}

TEST(Store, TornTailIsDroppedAndTruncated) {
  TempDir dir;
  {
    auto s = DocumentStore::open(dir.path);
    s->put("instances", "i1", json{{"phase", "awaiting_transport"}}, std::nullopt);
    s->append_audit(event("a"));
    s->append_audit(event("b"));
  }
  {
    std::ofstream(dir.path / "instances.jsonl", std::ios::app) << R"({"op":"put","id":"i1","version":1,"bo)";
    std::ofstream(dir.path / "audit.jsonl", std::ios::app) << R"({"seq":2,"timestamp":"2024-01-01T00:0)";
  }
  {
    auto s = DocumentStore::open(dir.path);
    EXPECT_EQ(s->get("instances", "i1")->version, 0u);
    EXPECT_EQ(s->audit_size(), 2u);
    // The next write appends after the truncated prefix.
    s->put("instances", "i1", json{{"phase", "in_transit"}}, 0);
    s->append_audit(event("c"));
  }
  auto s = DocumentStore::open(dir.path);
  EXPECT_EQ(s->get("instances", "i1")->body["phase"], "in_transit");
  EXPECT_EQ(s->audit_size(), 3u);
  EXPECT_EQ(line_count(dir.path / "instances.jsonl"), 2u);
}

TEST(Store, GarbageLineStopsReplay) {
  TempDir dir;
  {
    auto s = DocumentStore::open(dir.path);
    s->put("jobs", "j1", json::object(), std::nullopt);
  }
  std::ofstream(dir.path / "jobs.jsonl", std::ios::app) << "not json\n"
                                                        << R"({"op":"put","id":"j2","version":0,"body":{}})" << "\n";
  auto s = DocumentStore::open(dir.path);
  EXPECT_TRUE(s->get("jobs", "j1"));
  EXPECT_FALSE(s->get("jobs", "j2"));
}

TEST(Store, CompactionKeepsLiveDocuments) {
  TempDir dir;
  StoreOptions opts;
  opts.compact_slack = 10;
  {
    auto s = DocumentStore::open(dir.path, opts);
    s->put("workers", "w", json{{"n", 0}}, std::nullopt);
    for (int i = 1; i <= 100; ++i) s->put("workers", "w", json{{"n", i}}, std::uint64_t(i - 1));
    EXPECT_LE(line_count(dir.path / "workers.jsonl"), 12u);
    s->compact();
    EXPECT_EQ(line_count(dir.path / "workers.jsonl"), 1u);
  }
  auto s = DocumentStore::open(dir.path, opts);
  EXPECT_EQ(s->get("workers", "w")->body["n"], 100);
  EXPECT_EQ(s->get("workers", "w")->version, 100u);
}

TEST(Store, CrashInjectionStopsWrites) {
  TempDir dir;
  StoreOptions opts;
  opts.crash_after_writes = 2;
  {
    auto s = DocumentStore::open(dir.path, opts);
    s->put("jobs", "a", json::object(), std::nullopt);
    s->append_audit(event("a"));
    EXPECT_THROW(s->put("jobs", "b", json::object(), std::nullopt), StorageError);
    EXPECT_THROW(s->append_audit(event("b")), StorageError);
  }
  auto s = DocumentStore::open(dir.path);
  EXPECT_TRUE(s->get("jobs", "a"));
  EXPECT_FALSE(s->get("jobs", "b"));
  EXPECT_EQ(s->audit_size(), 1u);
}

TEST(Store, MemoryAndFileBackendsAgree) {
  TempDir dir;
  auto mem = DocumentStore::in_memory();
  auto file = DocumentStore::open(dir.path);
  std::mt19937 rng(7);
  const std::vector<std::string> ids{"a", "b", "c", "d"};
  for (int step = 0; step < 500; ++step) {
    const auto& id = ids[rng() % ids.size()];
    const int op = static_cast<int>(rng() % 3);
    for (auto* s : {mem.get(), file.get()}) {
      auto cur = s->get("routings", id);
      try {
        if (op == 0) {
          s->put("routings", id, json{{"step", step}}, std::nullopt);
        } else if (op == 1 && cur) {
          s->put("routings", id, json{{"step", step}}, cur->version);
        } else if (cur) {
          s->remove("routings", id, cur->version);
        }
      } catch (const AlreadyExists&) {
      }
    }
  }
  auto reopened = DocumentStore::open(dir.path);
  EXPECT_EQ(mem->query("routings"), file->query("routings"));
  EXPECT_EQ(mem->query("routings"), reopened->query("routings"));
}
