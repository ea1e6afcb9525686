#pragma once

// JSON wire encodings of the domain types. Field names match the domain
// structs; enums are lowercase snake_case strings; timestamps are RFC 3339
// UTC strings. Decoders fill absent optional fields with defaults and throw
// ValidationError on wrong types, unknown enum values or broken invariants.

#include <nlohmann/json.hpp>

#include "agm/domain.hpp"
#include "agm/error.hpp"

namespace agm {

using json = nlohmann::json;

void to_json(json& j, const Pose3& v);
void from_json(const json& j, Pose3& v);

void to_json(json& j, const Worker& v);
void from_json(const json& j, Worker& v);

void to_json(json& j, const Workstation& v);
void from_json(const json& j, Workstation& v);

void to_json(json& j, const RoutingStep& v);
void from_json(const json& j, RoutingStep& v);

void to_json(json& j, const Routing& v);
void from_json(const json& j, Routing& v);

void to_json(json& j, const RoutingInstance& v);
void from_json(const json& j, RoutingInstance& v);

void to_json(json& j, const Job& v);
void from_json(const json& j, Job& v);

void to_json(json& j, const JobPayload& v);
void from_json(const json& j, JobPayload& v);

void to_json(json& j, const AuditEvent& v);
void from_json(const json& j, AuditEvent& v);

void to_json(json& j, const RoutingViolation& v);

/// Decodes `j` as T, converting any nlohmann type error into ValidationError.
template <typename T>
T decode(const json& j) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(e.what());
  }
}

}  // namespace agm
