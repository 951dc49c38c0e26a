#include "scalebb/io.hpp"

#include <cstdio>
#include <fstream>

namespace scalebb {

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::json summary_to_json(const SummaryRecord& rec,
                               const std::vector<std::string>& coefficient_names,
                               const std::string& config_hash) {
  nlohmann::json j;
  j["schema"] = "scalebb.summary.v1";
  j["method"] = rec.provenance.method;
  j["n"] = rec.provenance.n;
  j["b"] = rec.provenance.b;
  j["seed"] = rec.provenance.seed;
  if (rec.provenance.subset_id) j["subset_id"] = *rec.provenance.subset_id;
  j["n_draws"] = rec.n_draws;
  j["n_excluded"] = rec.n_excluded;
  j["percentile_rule"] = kPercentileRule;
  j["sqrt_n_scaled"] = rec.provenance.sqrt_n_scaled;
  j["flags"] = rec.flags;
  j["version"] = kVersion;
  if (!config_hash.empty()) j["config_hash"] = config_hash;
  auto& coords = j["coefficients"] = nlohmann::json::array();
  for (Eigen::Index l = 0; l < rec.dim(); ++l) {
    nlohmann::json c;
    if (static_cast<std::size_t>(l) < coefficient_names.size()) {
      c["name"] = coefficient_names[static_cast<std::size_t>(l)];
    }
    c["q025"] = rec.q025(l);
    c["q975"] = rec.q975(l);
    c["sd"] = rec.sd(l);
    c["mean"] = rec.mean(l);
    c["center"] = rec.center(l);
    coords.push_back(std::move(c));
  }
  return j;
}

SummaryRecord summary_from_json(const nlohmann::json& j) {
  SummaryRecord rec;
  const auto& coords = j.at("coefficients");
  const Eigen::Index q = static_cast<Eigen::Index>(coords.size());
  rec.q025.resize(q);
  rec.q975.resize(q);
  rec.sd.resize(q);
  rec.mean.resize(q);
  rec.center.resize(q);
  for (Eigen::Index l = 0; l < q; ++l) {
    const auto& c = coords[static_cast<std::size_t>(l)];
    rec.q025(l) = c.at("q025").get<double>();
    rec.q975(l) = c.at("q975").get<double>();
    rec.sd(l) = c.at("sd").get<double>();
    rec.mean(l) = c.at("mean").get<double>();
    rec.center(l) = c.at("center").get<double>();
  }
  rec.n_draws = j.value("n_draws", std::int64_t{0});
  rec.n_excluded = j.value("n_excluded", std::int64_t{0});
  rec.provenance.method = j.value("method", std::string{});
  rec.provenance.n = j.value("n", std::int64_t{0});
  rec.provenance.b = j.value("b", std::int64_t{0});
  rec.provenance.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("flags")) rec.flags = j["flags"].get<std::vector<std::string>>();
  return rec;
}

namespace {

void write_draw_rows(std::ofstream& out, const DrawMatrix& dm, std::int64_t subset_id) {
  char buf[64];
  for (Eigen::Index r = 0; r < dm.draws.rows(); ++r) {
    out << r << ',' << subset_id;
    for (Eigen::Index c = 0; c < dm.draws.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", dm.draws(r, c));
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace

void write_draws_csv(const std::string& path, const EngineResult& result,
                     const std::string& config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot open for writing: " + path);
  Eigen::Index q = 0;
  if (result.pooled_draws) {
    q = result.pooled_draws->draws.cols();
  } else if (!result.subset_runs.empty() && result.subset_runs.front().draws) {
    q = result.subset_runs.front().draws->draws.cols();
  }
  const Provenance& prov = result.summary.provenance;
  out << "# method=" << prov.method << " seed=" << prov.seed << " b=" << prov.b
      << " n=" << prov.n << " sqrt_n_scaled=" << (prov.sqrt_n_scaled ? "true" : "false")
      << " version=" << kVersion;
  if (!config_hash.empty()) out << " config=" << config_hash;
  out << '\n';
  out << "draw,subset";
  for (Eigen::Index c = 0; c < q; ++c) out << ",beta_" << c;
  out << '\n';
  if (result.pooled_draws) {
    write_draw_rows(out, *result.pooled_draws, -1);
  } else {
    for (const auto& run : result.subset_runs) {
      if (run.draws) write_draw_rows(out, *run.draws, run.subset.subset_id);
    }
  }
}

void write_trace_jsonl(const std::string& path, const RunTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot open for writing: " + path);
  std::int64_t i = 0;
  for (const auto& cp : trace.checkpoints) {
    nlohmann::json j;
    j["checkpoint"] = i++;
    j["elapsed_s"] = cp.elapsed_s;
    j["units_done"] = cp.units_done;
    if (cp.running) j["summary"] = summary_to_json(*cp.running);
    out << j.dump() << '\n';
  }
}

}  // namespace scalebb
