#include "agm/repository.hpp"

#include <cstdio>

#include "agm/error.hpp"

namespace agm {

void to_json(json& j, const ProcessingTimer& v) {
  j = json{{"instance_id", v.instance_id},
           {"step_index", v.step_index},
           {"station_id", v.station_id},
           {"due_at", format_timestamp(v.due_at)}};
}

void from_json(const json& j, ProcessingTimer& v) {
  v.instance_id = j.at("instance_id").get<std::string>();
  v.step_index = j.at("step_index").get<int>();
  v.station_id = j.at("station_id").get<std::string>();
  auto t = parse_timestamp(j.at("due_at").get<std::string>());
  if (!t) throw ValidationError("timer due_at is not a timestamp");
  v.due_at = *t;
}

std::string Repository::next_id(std::string_view prefix) {
  const std::string key(prefix);
  for (;;) {
    auto doc = store_->get(collections::counters, key);
    std::uint64_t next = 1;
    try {
      if (!doc) {
        store_->put(collections::counters, key, json{{"next", next}}, std::nullopt, org_id_);
      } else {
        next = doc->body.value("next", std::uint64_t{0}) + 1;
        store_->put(collections::counters, key, json{{"next", next}}, doc->version, org_id_);
      }
    } catch (const VersionConflict&) {
      continue;
    } catch (const AlreadyExists&) {
      continue;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "-%06llu", static_cast<unsigned long long>(next));
    return key + buf;
  }
}

std::uint64_t Repository::audit(AuditKind kind, std::string subject_id, json payload, Timestamp at) {
  AuditEvent e;
  e.timestamp = at;
  e.kind = kind;
  e.subject_id = std::move(subject_id);
  e.payload = std::move(payload);
  return store_->append_audit(std::move(e));
}

}  // namespace agm
