#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "agm/domain.hpp"
#include "agm/store.hpp"
#include "agm/wire.hpp"

namespace agm {

template <typename T>
struct Versioned {
  T value;
  std::uint64_t version = 0;
};

/// A processing countdown for a part sitting at a workstation. Persisted so
/// a restarted server re-arms it.
struct ProcessingTimer {
  std::string instance_id;
  int step_index = 0;
  std::string station_id;
  Timestamp due_at{};

  friend bool operator==(const ProcessingTimer&, const ProcessingTimer&) = default;
};

void to_json(json& j, const ProcessingTimer& v);
void from_json(const json& j, ProcessingTimer& v);

template <typename T>
constexpr std::string_view collection_of();
template <>
constexpr std::string_view collection_of<Worker>() { return collections::workers; }
template <>
constexpr std::string_view collection_of<Workstation>() { return collections::workstations; }
template <>
constexpr std::string_view collection_of<Routing>() { return collections::routings; }
template <>
constexpr std::string_view collection_of<RoutingInstance>() { return collections::instances; }
template <>
constexpr std::string_view collection_of<Job>() { return collections::jobs; }
template <>
constexpr std::string_view collection_of<ProcessingTimer>() { return collections::timers; }

template <typename T>
std::string_view key_of(const T& v) {
  return v.id;
}
template <>
inline std::string_view key_of(const ProcessingTimer& v) {
  return v.instance_id;
}

/// Typed view over the document store, scoped to one organization.
class Repository {
 public:
  explicit Repository(std::shared_ptr<DocumentStore> store, std::string org_id = {})
      : store_(std::move(store)), org_id_(std::move(org_id)) {}

  DocumentStore& store() const { return *store_; }
  const std::shared_ptr<DocumentStore>& store_handle() const { return store_; }
  const std::string& org_id() const { return org_id_; }

  template <typename T>
  std::optional<Versioned<T>> load(std::string_view id) const {
    auto doc = store_->get(collection_of<T>(), id);
    if (!doc || (!org_id_.empty() && doc->org_id != org_id_)) return std::nullopt;
    return Versioned<T>{decode<T>(doc->body), doc->version};
  }

  template <typename T>
  std::vector<Versioned<T>> list(Query q = {}) const {
    if (!org_id_.empty()) q.in_org(org_id_);
    std::vector<Versioned<T>> out;
    for (auto& doc : store_->query(collection_of<T>(), q)) out.push_back({decode<T>(doc.body), doc.version});
    return out;
  }

  /// Create (expected empty) or compare-and-swap update.
  template <typename T>
  std::uint64_t save(const T& value, std::optional<std::uint64_t> expected_version) {
    return store_->put(collection_of<T>(), key_of(value), json(value), expected_version, org_id_);
  }

  template <typename T>
  void erase(std::string_view id, std::optional<std::uint64_t> expected_version = std::nullopt) {
    store_->remove(collection_of<T>(), id, expected_version);
  }

  /// Monotonic, persisted id generator: "<prefix>-000001", "<prefix>-000002", ...
  std::string next_id(std::string_view prefix);

  std::uint64_t audit(AuditKind kind, std::string subject_id, json payload, Timestamp at);

 private:
  std::shared_ptr<DocumentStore> store_;
  std::string org_id_;
};

}  // namespace agm
