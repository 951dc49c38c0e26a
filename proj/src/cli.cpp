#include "scalebb/cli.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "scalebb/baselines.hpp"
#include "scalebb/io.hpp"
#include "scalebb/simlab.hpp"

namespace scalebb {

namespace {

using nlohmann::json;

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("invalid JSON in " + path + ": " + e.what());
  }
  return j;
}

// Schema-validated access: unknown keys are rejected with their dotted path.
void reject_unknown_keys(const json& obj, const std::string& path,
                         std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError("expected an object", path);
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!ok.count(it.key())) {
      throw ConfigError("unknown key", path.empty() ? it.key() : path + "." + it.key());
    }
  }
}

const json& require(const json& obj, const char* key, const std::string& path) {
  if (!obj.contains(key)) throw ConfigError("missing required key", path + "." + key);
  return obj[key];
}

std::string get_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError("expected a string", path);
  return v.get<std::string>();
}

std::int64_t get_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ConfigError("expected an integer", path);
  return v.get<std::int64_t>();
}

double get_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError("expected a number", path);
  return v.get<double>();
}

bool get_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw ConfigError("expected a boolean", path);
  return v.get<bool>();
}

ColumnKind column_kind_from_name(const std::string& name, const std::string& path) {
  if (name == "numeric") return ColumnKind::Numeric;
  if (name == "categorical") return ColumnKind::Categorical;
  if (name == "group-id" || name == "group_id") return ColumnKind::GroupId;
  throw ConfigError("unknown column kind: " + name, path);
}

Schema parse_schema(const json& arr, const std::string& path) {
  if (!arr.is_array() || arr.empty()) throw ConfigError("expected a non-empty array", path);
  Schema schema;
  std::int64_t i = 0;
  for (const auto& col : arr) {
    const std::string p = path + "[" + std::to_string(i++) + "]";
    reject_unknown_keys(col, p, {"name", "kind"});
    ColumnSpec spec;
    spec.name = get_string(require(col, "name", p), p + ".name");
    spec.kind = column_kind_from_name(get_string(require(col, "kind", p), p + ".kind"), p + ".kind");
    schema.push_back(std::move(spec));
  }
  return schema;
}

FunctionalSpec parse_functional(const json& obj, const std::string& path) {
  reject_unknown_keys(obj, path,
                      {"kind", "outcome", "predictors", "intercept", "group", "max_iterations",
                       "gradient_tolerance", "mixed_weight_matrix"});
  FunctionalSpec spec;
  spec.kind = functional_kind_from_name(get_string(require(obj, "kind", path), path + ".kind"));
  spec.outcome = get_string(require(obj, "outcome", path), path + ".outcome");
  if (obj.contains("predictors")) {
    if (!obj["predictors"].is_array()) throw ConfigError("expected an array", path + ".predictors");
    for (const auto& p : obj["predictors"]) {
      spec.predictors.push_back(get_string(p, path + ".predictors[]"));
    }
  }
  if (obj.contains("intercept")) spec.intercept = get_bool(obj["intercept"], path + ".intercept");
  if (obj.contains("group")) spec.group = get_string(obj["group"], path + ".group");
  if (obj.contains("max_iterations")) {
    spec.max_iterations = static_cast<int>(get_int(obj["max_iterations"], path + ".max_iterations"));
  }
  if (obj.contains("gradient_tolerance")) {
    spec.gradient_tolerance = get_number(obj["gradient_tolerance"], path + ".gradient_tolerance");
  }
  if (obj.contains("mixed_weight_matrix")) {
    const std::string mode = get_string(obj["mixed_weight_matrix"], path + ".mixed_weight_matrix");
    if (mode == "inverse") {
      spec.mixed_weight_matrix = MixedWeightMatrix::Inverse;
    } else if (mode == "literal") {
      spec.mixed_weight_matrix = MixedWeightMatrix::Literal;
    } else {
      throw ConfigError("expected 'inverse' or 'literal'", path + ".mixed_weight_matrix");
    }
  }
  spec.validate();
  return spec;
}

EngineConfig parse_engine(const json& obj, const std::string& path) {
  reject_unknown_keys(obj, path,
                      {"method", "gamma", "b", "r", "s", "seed", "dp_alpha", "dp_base",
                       "time_budget", "lossless_batch", "keep_draws", "workers"});
  EngineConfig cfg;
  cfg.method = method_from_name(get_string(require(obj, "method", path), path + ".method"));
  if (obj.contains("gamma")) cfg.gamma = get_number(obj["gamma"], path + ".gamma");
  if (obj.contains("b")) cfg.b = get_int(obj["b"], path + ".b");
  if (obj.contains("r")) cfg.r = get_int(obj["r"], path + ".r");
  if (obj.contains("s")) cfg.s = get_int(obj["s"], path + ".s");
  if (obj.contains("seed")) cfg.seed = static_cast<std::uint64_t>(get_int(obj["seed"], path + ".seed"));
  if (obj.contains("dp_alpha")) cfg.dp_alpha = get_number(obj["dp_alpha"], path + ".dp_alpha");
  if (obj.contains("dp_base")) cfg.dp_base = get_string(obj["dp_base"], path + ".dp_base");
  if (obj.contains("time_budget")) cfg.time_budget_s = get_number(obj["time_budget"], path + ".time_budget");
  if (obj.contains("lossless_batch")) cfg.lossless_batch = get_int(obj["lossless_batch"], path + ".lossless_batch");
  if (obj.contains("keep_draws")) cfg.keep_draws = get_bool(obj["keep_draws"], path + ".keep_draws");
  if (obj.contains("workers")) cfg.workers = static_cast<int>(get_int(obj["workers"], path + ".workers"));
  return cfg;
}

void apply_overrides(EngineConfig& cfg, FunctionalSpec& spec, const CliOverrides& ov) {
  if (ov.method) cfg.method = method_from_name(*ov.method);
  if (ov.gamma) cfg.gamma = *ov.gamma;
  if (ov.b) cfg.b = *ov.b;
  if (ov.r) cfg.r = *ov.r;
  if (ov.s) cfg.s = *ov.s;
  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.workers) cfg.workers = *ov.workers;
  if (ov.time_budget) cfg.time_budget_s = *ov.time_budget;
  if (ov.mixed_weight_matrix) {
    if (*ov.mixed_weight_matrix == "inverse") {
      spec.mixed_weight_matrix = MixedWeightMatrix::Inverse;
    } else if (*ov.mixed_weight_matrix == "literal") {
      spec.mixed_weight_matrix = MixedWeightMatrix::Literal;
    } else {
      throw ConfigError("expected 'inverse' or 'literal'", "--mixed-weight-matrix");
    }
  }
}

json engine_to_json(const EngineConfig& cfg) {
  json j;
  j["method"] = method_name(cfg.method);
  j["gamma"] = cfg.gamma;
  if (cfg.b) j["b"] = *cfg.b;
  j["r"] = cfg.r;
  if (cfg.s) j["s"] = *cfg.s;
  j["seed"] = cfg.seed;
  j["dp_alpha"] = cfg.dp_alpha;
  j["dp_base"] = cfg.dp_base;
  if (cfg.time_budget_s) j["time_budget"] = *cfg.time_budget_s;
  j["lossless_batch"] = cfg.lossless_batch;
  return j;
}

void describe_engine(std::ostream& report, const EngineConfig& cfg, const FunctionalSpec& spec,
                     std::int64_t n, const EngineResult& result) {
  const std::int64_t b = resolve_subset_size(cfg, n);
  report << "method: " << method_name(cfg.method) << "\n"
         << "  n: " << n << "  b: " << b;
  if (!cfg.b) report << " (gamma " << cfg.gamma << ", floor(n^gamma))";
  report << "\n";
  if (cfg.method == Method::BLBB || cfg.method == Method::BLDP) {
    const std::int64_t s_total = partition_count(n, b);
    report << "  subsets: " << (cfg.s ? std::min(*cfg.s, s_total) : s_total) << " of " << s_total
           << "; leftover rows dropped from the partition: " << (n - s_total * b) << "\n";
  }
  report << "  draws r: " << cfg.r << "  seed: " << cfg.seed << "\n"
         << "  failures/exclusions: " << result.failures
         << " (excluded draws: " << result.summary.n_excluded << ")\n"
         << "  percentile rule: " << kPercentileRule << "\n"
         << "  sd divisor: R-1\n"
         << "  sqrt(n) factor: not applied to stored draws (cancels in the reported metrics)\n";
  if (spec.kind == FunctionalKind::Mixed) {
    report << "  mixed weight matrix: "
           << (spec.mixed_weight_matrix == MixedWeightMatrix::Inverse ? "inverse" : "literal")
           << "\n";
  }
  if (cfg.method == Method::BLDP || cfg.method == Method::SDDP) {
    report << "  dp: alpha " << cfg.dp_alpha << ", base " << cfg.dp_base
           << ", stick truncation K = ceil(log(1e-6)/log(alpha/(alpha+1))) = "
           << dp_truncation_level(cfg.dp_alpha) << "\n";
  }
  if (cfg.method == Method::LOSSLESS) {
    report << "  lossless batch: " << cfg.lossless_batch << " draws per pass\n";
  }
  for (const auto& line : result.failure_log) report << "  note: " << line << "\n";
}

}  // namespace

int cmd_run(const std::string& config_path, const CliOverrides& overrides, std::ostream& out,
            std::ostream& err) {
  try {
    const json cfg_json = load_json(config_path);
    reject_unknown_keys(cfg_json, "",
                        {"dataset", "functional", "engine", "engines", "output", "workers",
                         "verbosity"});
    const json& dataset = require(cfg_json, "dataset", "");
    reject_unknown_keys(dataset, "dataset", {"path", "block_size", "schema"});
    const std::string data_path = get_string(require(dataset, "path", "dataset"), "dataset.path");
    const Schema schema = parse_schema(require(dataset, "schema", "dataset"), "dataset.schema");
    std::int64_t block_size = ChunkedDataset::kDefaultBlockSize;
    if (dataset.contains("block_size")) {
      block_size = get_int(dataset["block_size"], "dataset.block_size");
    }

    FunctionalSpec spec = parse_functional(require(cfg_json, "functional", ""), "functional");

    std::vector<EngineConfig> engines;
    if (cfg_json.contains("engine") && cfg_json.contains("engines")) {
      throw ConfigError("give either 'engine' or 'engines', not both", "engine");
    } else if (cfg_json.contains("engine")) {
      engines.push_back(parse_engine(cfg_json["engine"], "engine"));
    } else if (cfg_json.contains("engines")) {
      const json& arr = cfg_json["engines"];
      if (!arr.is_array() || arr.empty()) throw ConfigError("expected a non-empty array", "engines");
      std::int64_t i = 0;
      for (const auto& e : arr) {
        engines.push_back(parse_engine(e, "engines[" + std::to_string(i++) + "]"));
      }
    } else {
      throw ConfigError("missing required key", "engine");
    }

    std::string out_dir = "scalebb_out";
    bool write_draws = true;
    bool write_subsets = false;
    if (cfg_json.contains("output")) {
      const json& output = cfg_json["output"];
      reject_unknown_keys(output, "output", {"directory", "write_draws", "write_subsets"});
      if (output.contains("directory")) out_dir = get_string(output["directory"], "output.directory");
      if (output.contains("write_draws")) write_draws = get_bool(output["write_draws"], "output.write_draws");
      if (output.contains("write_subsets")) {
        write_subsets = get_bool(output["write_subsets"], "output.write_subsets");
      }
    }
    int workers = 0;
    if (cfg_json.contains("workers")) {
      workers = static_cast<int>(get_int(cfg_json["workers"], "workers"));
    }
    int verbosity = 1;
    if (cfg_json.contains("verbosity")) {
      verbosity = static_cast<int>(get_int(cfg_json["verbosity"], "verbosity"));
    }
    if (overrides.out_dir) out_dir = *overrides.out_dir;
    if (overrides.workers) workers = *overrides.workers;

    for (auto& engine : engines) {
      // engine-level workers beat the document default (0 = all cores)
      if (engine.workers == 1) engine.workers = workers;
      apply_overrides(engine, spec, overrides);
      engine.validate();
    }
    spec.validate();

    const ChunkedDataset ds = ChunkedDataset::from_csv(data_path, schema, block_size);
    const std::int64_t n = unit_count(ds, spec);
    const auto coef_names = coefficient_names(ds, spec);
    std::filesystem::create_directories(out_dir);

    std::ostringstream report;
    report << "scalebb run report (version " << kVersion << ")\n"
           << "dataset: " << data_path << " (" << ds.n_rows() << " rows";
    if (ds.n_dropped_rows() > 0) report << ", " << ds.n_dropped_rows() << " incomplete rows dropped";
    report << ")\nfunctional: " << functional_kind_name(spec.kind) << " of '" << spec.outcome
           << "' on " << coef_names.size() << " coefficients\n\n";

    std::size_t successes = 0;
    std::map<std::string, int> label_counts;
    for (const auto& engine : engines) {
      std::string label = method_name(engine.method);
      const int seen = ++label_counts[label];
      if (seen > 1) label += "_" + std::to_string(seen);
      json effective;
      effective["dataset"] = {{"path", data_path}, {"block_size", block_size}};
      effective["functional"] = {{"kind", functional_kind_name(spec.kind)}};
      effective["engine"] = engine_to_json(engine);
      const std::string config_hash = fnv1a_hex(effective.dump());
      try {
        RunTrace trace;
        const bool want_trace = engine.time_budget_s.has_value();
        EngineResult result = run_engine(ds, spec, engine, want_trace ? &trace : nullptr);
        const auto dir = std::filesystem::path(out_dir);
        {
          std::ofstream js(dir / (label + "_summary.json"), std::ios::binary);
          js << summary_to_json(result.summary, coef_names, config_hash).dump(2) << '\n';
        }
        if (write_draws) {
          write_draws_csv((dir / (label + "_draws.csv")).string(), result, config_hash);
        }
        if (want_trace) write_trace_jsonl((dir / ("trace_" + label + ".jsonl")).string(), trace);
        if (write_subsets && !result.subset_runs.empty()) {
          std::vector<SubsetIndex> subsets;
          for (const auto& run : result.subset_runs) subsets.push_back(run.subset);
          std::ofstream sj(dir / ("subsets_" + label + ".json"), std::ios::binary);
          sj << partition_to_json(subsets) << '\n';
        }
        describe_engine(report, engine, spec, n, result);
        report << "  config hash: " << config_hash << "\n\n";
        ++successes;
        if (verbosity > 0) out << label << ": done\n";
      } catch (const Error& e) {
        report << "method " << label << " FAILED: " << e.what() << "\n\n";
        err << label << ": " << e.what() << "\n";
      }
    }
    {
      std::ofstream rep(std::filesystem::path(out_dir) / "report.txt", std::ios::binary);
      rep << report.str();
    }
    if (successes == engines.size()) return 0;
    return successes == 0 ? 1 : 2;
  } catch (const ConfigError& e) {
    err << "config error" << (e.field_path.empty() ? "" : " at " + e.field_path) << ": "
        << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

int cmd_simulate(const std::string& plan_path, const CliOverrides& overrides, std::ostream& out,
                 std::ostream& err) {
  try {
    const json plan_json = load_json(plan_path);
    reject_unknown_keys(plan_json, "",
                        {"dgp", "methods", "replicates", "reference_draws", "output_directory",
                         "workers", "write_traces"});
    ExperimentPlan plan;
    const json& dgp = require(plan_json, "dgp", "");
    reject_unknown_keys(dgp, "dgp", {"model", "n", "p", "seed", "beta0"});
    plan.dgp.model = functional_kind_from_name(get_string(require(dgp, "model", "dgp"), "dgp.model"));
    plan.dgp.n = get_int(require(dgp, "n", "dgp"), "dgp.n");
    plan.dgp.p = static_cast<int>(get_int(require(dgp, "p", "dgp"), "dgp.p"));
    if (dgp.contains("seed")) plan.dgp.seed = static_cast<std::uint64_t>(get_int(dgp["seed"], "dgp.seed"));
    if (dgp.contains("beta0")) {
      for (const auto& v : dgp["beta0"]) plan.dgp.beta0.push_back(get_number(v, "dgp.beta0[]"));
    }
    if (plan_json.contains("replicates")) {
      plan.replicates = get_int(plan_json["replicates"], "replicates");
    }
    if (plan_json.contains("reference_draws")) {
      plan.reference_draws = get_int(plan_json["reference_draws"], "reference_draws");
    }
    if (plan_json.contains("workers")) {
      plan.workers = static_cast<int>(get_int(plan_json["workers"], "workers"));
    }
    if (plan_json.contains("write_traces")) {
      plan.write_traces = get_bool(plan_json["write_traces"], "write_traces");
    }
    if (plan_json.contains("output_directory")) {
      plan.output_directory = get_string(plan_json["output_directory"], "output_directory");
    }
    if (overrides.out_dir) plan.output_directory = *overrides.out_dir;
    if (overrides.workers) plan.workers = *overrides.workers;
    if (overrides.seed) plan.dgp.seed = *overrides.seed;

    const json& methods = require(plan_json, "methods", "");
    if (!methods.is_array() || methods.empty()) {
      throw ConfigError("expected a non-empty array", "methods");
    }
    std::int64_t i = 0;
    for (const auto& mj : methods) {
      const std::string path = "methods[" + std::to_string(i++) + "]";
      PlannedMethod planned;
      if (mj.contains("label")) planned.label = get_string(mj["label"], path + ".label");
      json engine_json = mj;
      engine_json.erase("label");
      const std::string name = get_string(require(mj, "method", path), path + ".method");
      if (name == "AN" || name == "ANS") {
        planned.is_baseline_an = name == "AN";
        planned.is_baseline_ans = name == "ANS";
        engine_json["method"] = "BLBB";  // carries gamma/b for the subset layout
        planned.config = parse_engine(engine_json, path);
        planned.config.method = Method::BLBB;
      } else {
        planned.config = parse_engine(engine_json, path);
      }
      plan.methods.push_back(std::move(planned));
    }
    plan.validate();

    const ExperimentResult result = run_experiment(plan);
    out << experiment_table_csv(result);
    for (const auto& line : result.log) err << line << "\n";

    bool any_short = false, any_data = false;
    for (const auto& cell : result.cells) {
      if (cell.replicates > 0) any_data = true;
      if (cell.replicates < plan.replicates) any_short = true;
    }
    if (!any_data) return 1;
    return any_short ? 2 : 0;
  } catch (const ConfigError& e) {
    err << "config error" << (e.field_path.empty() ? "" : " at " + e.field_path) << ": "
        << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

int cmd_compare(const std::vector<std::string>& summary_paths, const std::string& reference_path,
                const std::optional<std::string>& out_csv, std::ostream& out, std::ostream& err) {
  try {
    const SummaryRecord reference = summary_from_json(load_json(reference_path));
    std::string csv = "method,cil_error,sd_error,mean_abs_error,mean_abs_error_l1\n";
    out << "method            CIL err      SD err     Mean err (per coord / L1)\n";
    for (const auto& path : summary_paths) {
      const SummaryRecord rec = summary_from_json(load_json(path));
      if (rec.dim() != reference.dim()) {
        throw CombineError("dimension mismatch: " + path + " has " + std::to_string(rec.dim()) +
                           " coordinates, reference has " + std::to_string(reference.dim()));
      }
      const double cil = relative_error_cil(rec, reference);
      const double sd = relative_error_sd(rec, reference);
      const ErrorPair mean = absolute_error_mean(rec, reference);
      char line[256];
      std::snprintf(line, sizeof line, "%-16s %9.4f   %9.4f     %9.4f / %.4f\n",
                    rec.provenance.method.c_str(), cil, sd, mean.per_coordinate, mean.raw);
      out << line;
      char row[256];
      std::snprintf(row, sizeof row, "%s,%.10g,%.10g,%.10g,%.10g\n",
                    rec.provenance.method.c_str(), cil, sd, mean.per_coordinate, mean.raw);
      csv += row;
    }
    if (out_csv) {
      std::ofstream f(*out_csv, std::ios::binary);
      if (!f) throw IngestError("cannot open for writing: " + *out_csv);
      f << csv;
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace scalebb
