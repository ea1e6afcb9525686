#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "agm/domain.hpp"

namespace agm {

namespace collections {
inline constexpr std::string_view workers = "workers";
inline constexpr std::string_view workstations = "workstations";
inline constexpr std::string_view routings = "routings";
inline constexpr std::string_view instances = "instances";
inline constexpr std::string_view jobs = "jobs";
inline constexpr std::string_view timers = "timers";
inline constexpr std::string_view counters = "counters";
}  // namespace collections

std::vector<std::string> default_collections();

struct Document {
  std::string collection;
  std::string id;
  std::uint64_t version = 0;
  nlohmann::json body;
  std::string org_id;

  friend bool operator==(const Document&, const Document&) = default;
};

enum class FilterOp { eq, ne, lt, le, gt, ge };

struct Filter {
  std::string field;  // top-level key, or a JSON pointer such as "/pose/x"
  FilterOp op = FilterOp::eq;
  nlohmann::json value;
};

/// Conjunction of field filters with an optional org scope and sort key.
/// Without a sort key results come back ordered by id.
struct Query {
  std::vector<Filter> filters;
  std::optional<std::string> org_id;
  std::optional<std::string> sort_by;

  Query& where(std::string field, FilterOp op, nlohmann::json value) {
    filters.push_back({std::move(field), op, std::move(value)});
    return *this;
  }
  Query& where(std::string field, nlohmann::json value) { return where(std::move(field), FilterOp::eq, std::move(value)); }
  Query& in_org(std::string org) {
    org_id = std::move(org);
    return *this;
  }
  Query& order_by(std::string field) {
    sort_by = std::move(field);
    return *this;
  }

  bool matches(const Document& doc) const;
};

struct StoreOptions {
  std::vector<std::string> collections = default_collections();
  /// fsync after every journal append (otherwise data is flushed to the OS only).
  bool fsync = false;
  /// Compact a journal once it holds this many more lines than live documents.
  std::size_t compact_slack = 2048;
  /// Fault injection for crash tests: after this many successful writes every
  /// further write throws StorageError and nothing more reaches disk.
  std::optional<std::size_t> crash_after_writes;
};

/// Document store with per-document optimistic versioning and an append-only
/// audit log. Thread-safe; share one handle between request handlers.
///
/// File layout under the data directory: `<collection>.jsonl` journals and
/// `audit.jsonl`, one JSON object per line. Opening replays the journals and
/// drops any torn tail left by a crash.
class DocumentStore {
 public:
  static std::shared_ptr<DocumentStore> in_memory(StoreOptions options = {});
  static std::shared_ptr<DocumentStore> open(const std::filesystem::path& data_dir, StoreOptions options = {});

  ~DocumentStore();
  DocumentStore(const DocumentStore&) = delete;
  DocumentStore& operator=(const DocumentStore&) = delete;

  /// expected_version empty: create, throws AlreadyExists if the id is taken.
  /// Otherwise compare-and-swap, throws VersionConflict (or NotFound) on mismatch.
  /// Returns the new version: 0 on create, old + 1 on update.
  std::uint64_t put(std::string_view collection, std::string_view id, nlohmann::json body,
                    std::optional<std::uint64_t> expected_version, std::string_view org_id = {});

  std::optional<Document> get(std::string_view collection, std::string_view id) const;

  /// Throws NotFound for a collection the store was not configured with.
  std::vector<Document> query(std::string_view collection, const Query& q = {}) const;

  void remove(std::string_view collection, std::string_view id, std::optional<std::uint64_t> expected_version);

  /// Assigns the next sequence number (ignoring event.seq) and appends.
  std::uint64_t append_audit(AuditEvent event);
  std::vector<AuditEvent> read_audit(std::uint64_t since_seq) const;
  std::uint64_t audit_size() const;

  /// Blocks until the log holds more than `seq` events or the timeout passes.
  bool wait_for_audit(std::uint64_t seq, std::chrono::milliseconds timeout) const;

  /// Rewrites every journal with only live documents (tmp file + rename).
  void compact();

  bool persistent() const;
  const std::filesystem::path& data_dir() const;

 private:
  struct Impl;
  explicit DocumentStore(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

}  // namespace agm
