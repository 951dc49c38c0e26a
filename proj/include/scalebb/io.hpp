#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "scalebb/engines.hpp"

namespace scalebb {

inline constexpr const char* kVersion = "0.1.0";

/// FNV-1a 64-bit hash, hex-encoded; used to fingerprint configurations so
/// outputs can be traced back to the exact inputs that produced them.
std::string fnv1a_hex(const std::string& text);

/// Stable JSON form of a summary record ("scalebb.summary.v1"): keys are
/// sorted, per-coordinate arrays ordered by design position.
nlohmann::json summary_to_json(const SummaryRecord& rec,
                               const std::vector<std::string>& coefficient_names = {},
                               const std::string& config_hash = {});

/// Inverse of summary_to_json; used by the compare command.
SummaryRecord summary_from_json(const nlohmann::json& j);

/// One row per draw, full 17-significant-digit round-trip precision, so
/// reruns can be compared byte for byte. BLBB-family results carry a
/// subset column. A leading '#' comment embeds the provenance (method,
/// seed, b, n, version, config hash when known).
void write_draws_csv(const std::string& path, const EngineResult& result,
                     const std::string& config_hash = {});

/// JSON-lines progress trace, one record per checkpoint.
void write_trace_jsonl(const std::string& path, const RunTrace& trace);

}  // namespace scalebb
