#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "scalebb/cli.hpp"
#include "scalebb/io.hpp"
#include "scalebb/simlab.hpp"

using namespace scalebb;
namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
  const auto dir = fs::temp_directory_path() / "scalebb_tests" / "cli";
  fs::create_directories(dir);
  return dir;
}

fs::path write_text(const std::string& name, const std::string& content) {
  const auto path = work_dir() / name;
  std::ofstream out(path, std::ios::binary);
  out << content;
  return path;
}

fs::path sample_csv() {
  DgpSpec dgp;
  dgp.model = FunctionalKind::Linear;
  dgp.n = 400;
  dgp.p = 2;
  dgp.seed = 99;
  const auto path = work_dir() / "sample.csv";
  generate_csv(dgp, path.string());
  return path;
}

std::string run_config_json(const fs::path& data, const fs::path& out_dir,
                            const std::string& engines) {
  return std::string(R"({
  "dataset": {
    "path": ")" + data.string() + R"(",
    "schema": [
      {"name": "y", "kind": "numeric"},
      {"name": "x1", "kind": "numeric"},
      {"name": "x2", "kind": "numeric"}
    ]
  },
  "functional": {"kind": "linear", "outcome": "y", "predictors": ["x1", "x2"]},
  )") + engines + R"(,
  "output": {"directory": ")" + out_dir.string() + R"("}
})";
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("valid linear config: exit 0, summary JSON exists and validates") {
  const auto data = sample_csv();
  const auto out_dir = work_dir() / "run1";
  const auto cfg = write_text(
      "run1.json",
      run_config_json(data, out_dir,
                      R"("engine": {"method": "BLBB", "gamma": 0.7, "r": 50, "seed": 21})"));
  std::ostringstream out, err;
  const int code = cmd_run(cfg.string(), {}, out, err);
  CHECK(code == 0);
  REQUIRE(fs::exists(out_dir / "BLBB_summary.json"));
  REQUIRE(fs::exists(out_dir / "BLBB_draws.csv"));
  REQUIRE(fs::exists(out_dir / "report.txt"));

  std::ifstream js(out_dir / "BLBB_summary.json");
  nlohmann::json j;
  js >> j;
  CHECK(j.at("schema") == "scalebb.summary.v1");
  CHECK(j.at("method") == "BLBB");
  CHECK(j.at("n") == 400);
  CHECK(j.at("coefficients").size() == 3);
  // full provenance embedded in the artifact
  CHECK(j.at("seed") == 21);
  CHECK(j.at("version") == kVersion);
  CHECK(j.contains("config_hash"));
  CHECK(j.at("percentile_rule") == kPercentileRule);
  CHECK(j.at("sqrt_n_scaled") == false);
  const auto rec = summary_from_json(j);
  CHECK(rec.dim() == 3);
  CHECK(rec.sd.minCoeff() > 0.0);

  // the draws CSV leads with a provenance comment
  std::ifstream draws(out_dir / "BLBB_draws.csv");
  std::string first_line;
  std::getline(draws, first_line);
  CHECK(first_line.rfind("# method=BLBB", 0) == 0);
  CHECK(first_line.find("config=") != std::string::npos);
}

TEST_CASE("gamma outside (0, 1] fails fast naming engine.gamma") {
  const auto data = sample_csv();
  const auto cfg = write_text(
      "bad_gamma.json",
      run_config_json(data, work_dir() / "never",
                      R"("engine": {"method": "BLBB", "gamma": 1.5, "r": 50})"));
  std::ostringstream out, err;
  const int code = cmd_run(cfg.string(), {}, out, err);
  CHECK(code == 1);
  CHECK(err.str().find("engine.gamma") != std::string::npos);
}

TEST_CASE("unknown keys are rejected with their path") {
  const auto data = sample_csv();
  const auto cfg = write_text(
      "unknown_key.json",
      run_config_json(data, work_dir() / "never",
                      R"("engine": {"method": "BB", "r": 50, "warp_factor": 9})"));
  std::ostringstream out, err;
  CHECK(cmd_run(cfg.string(), {}, out, err) == 1);
  CHECK(err.str().find("engine.warp_factor") != std::string::npos);
}

TEST_CASE("same config and seed: byte-identical summary JSON and draws") {
  const auto data = sample_csv();
  const auto out1 = work_dir() / "det1";
  const auto out2 = work_dir() / "det2";
  const std::string engine = R"("engine": {"method": "SDBB", "gamma": 0.6, "r": 60, "seed": 5})";
  const auto cfg1 = write_text("det1.json", run_config_json(data, out1, engine));
  const auto cfg2 = write_text("det2.json", run_config_json(data, out2, engine));
  std::ostringstream out, err;
  REQUIRE(cmd_run(cfg1.string(), {}, out, err) == 0);
  REQUIRE(cmd_run(cfg2.string(), {}, out, err) == 0);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  CHECK(slurp(out1 / "SDBB_summary.json") == slurp(out2 / "SDBB_summary.json"));
  CHECK(slurp(out1 / "SDBB_draws.csv") == slurp(out2 / "SDBB_draws.csv"));
  CHECK(!slurp(out1 / "SDBB_draws.csv").empty());
}

TEST_CASE("flag overrides replace config leaves") {
  const auto data = sample_csv();
  const auto out_dir = work_dir() / "override";
  const auto cfg = write_text(
      "override.json",
      run_config_json(data, work_dir() / "ignored",
                      R"("engine": {"method": "BLBB", "gamma": 0.7, "r": 40, "seed": 3})"));
  CliOverrides ov;
  ov.method = "BB";
  ov.r = 30;
  ov.out_dir = out_dir.string();
  std::ostringstream out, err;
  REQUIRE(cmd_run(cfg.string(), ov, out, err) == 0);
  CHECK(fs::exists(out_dir / "BB_summary.json"));
}

TEST_CASE("simulate: reference-only plan produces a zero-error table") {
  const auto plan = write_text("plan_ref.json", R"({
    "dgp": {"model": "linear", "n": 300, "p": 2, "seed": 4},
    "replicates": 1,
    "reference_draws": 150,
    "methods": [{"method": "BB", "r": 150}]
  })");
  std::ostringstream out, err;
  const int code = cmd_simulate(plan.string(), {}, out, err);
  CHECK(code == 0);
  std::istringstream table(out.str());
  std::string line;
  std::getline(table, line);
  CHECK(line == "model,summary,gamma,method,error,replicates");
  int rows = 0;
  while (std::getline(table, line)) {
    if (line.empty()) continue;
    CHECK(line.find(",0,") != std::string::npos);
    ++rows;
  }
  CHECK(rows == 4);
}

TEST_CASE("simulate: one-replicate smoke plan completes and writes table1.csv") {
  const auto out_dir = work_dir() / "sim_out";
  const auto plan = write_text("plan_smoke.json", R"({
    "dgp": {"model": "linear", "n": 2000, "p": 5, "seed": 12},
    "replicates": 1,
    "reference_draws": 300,
    "methods": [
      {"method": "BLBB", "gamma": 0.7, "r": 100},
      {"method": "SDBB", "gamma": 0.7, "r": 300},
      {"method": "ANS", "gamma": 0.7},
      {"method": "AN"}
    ],
    "output_directory": ")" + out_dir.string() + R"("
  })");
  std::ostringstream out, err;
  const int code = cmd_simulate(plan.string(), {}, out, err);
  CHECK(code == 0);
  REQUIRE(fs::exists(out_dir / "table1.csv"));
  std::ifstream in(out_dir / "table1.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "model,summary,gamma,method,error,replicates");
}

TEST_CASE("a configured time budget emits a JSONL progress trace") {
  const auto data = sample_csv();
  const auto out_dir = work_dir() / "traced";
  const auto cfg = write_text(
      "traced.json",
      run_config_json(data, out_dir,
                      R"("engine": {"method": "SDBB", "gamma": 0.6, "r": 25, "seed": 8,
                          "time_budget": 1e6})"));
  std::ostringstream out, err;
  REQUIRE(cmd_run(cfg.string(), {}, out, err) == 0);
  const auto trace_path = out_dir / "trace_SDBB.jsonl";
  REQUIRE(fs::exists(trace_path));
  std::ifstream in(trace_path);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("elapsed_s"));
    CHECK(j.at("units_done").get<int>() == lines + 1);
    ++lines;
  }
  CHECK(lines == 25);  // one checkpoint per draw
}

TEST_CASE("compare: a file against itself scores zero everywhere") {
  // build a summary file through the library, then compare
  DgpSpec dgp;
  dgp.model = FunctionalKind::Linear;
  dgp.n = 200;
  dgp.p = 2;
  dgp.seed = 31;
  const auto ds = generate(dgp);
  EngineConfig cfg;
  cfg.method = Method::BB;
  cfg.r = 100;
  cfg.seed = 17;
  const auto rec = summarize(run_bb(ds, dgp.functional(), cfg));
  const auto path = write_text("self.json", summary_to_json(rec).dump());

  std::ostringstream out, err;
  const int code = cmd_compare({path.string()}, path.string(), std::nullopt, out, err);
  CHECK(code == 0);
  CHECK(out.str().find("0.0000") != std::string::npos);
}

TEST_CASE("compare: doubled interval lengths score exactly 1") {
  DgpSpec dgp;
  dgp.model = FunctionalKind::Linear;
  dgp.n = 200;
  dgp.p = 1;
  dgp.seed = 37;
  const auto ds = generate(dgp);
  EngineConfig cfg;
  cfg.method = Method::BB;
  cfg.r = 100;
  cfg.seed = 19;
  const auto rec = summarize(run_bb(ds, dgp.functional(), cfg));
  auto doubled = rec;
  doubled.q025 *= 2.0;
  doubled.q975 *= 2.0;
  const auto ref_path = write_text("ref.json", summary_to_json(rec).dump());
  const auto dbl_path = write_text("dbl.json", summary_to_json(doubled).dump());
  const auto csv_path = (work_dir() / "cmp.csv").string();

  std::ostringstream out, err;
  const int code = cmd_compare({dbl_path.string()}, ref_path.string(), csv_path, out, err);
  CHECK(code == 0);
  std::ifstream csv(csv_path);
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  CHECK(row.find(",1,") != std::string::npos);

  // dimension mismatch is fatal
  DgpSpec other = dgp;
  other.p = 2;
  const auto ds2 = generate(other);
  const auto rec2 = summarize(run_bb(ds2, other.functional(), cfg));
  const auto other_path = write_text("other.json", summary_to_json(rec2).dump());
  std::ostringstream out2, err2;
  CHECK(cmd_compare({other_path.string()}, ref_path.string(), std::nullopt, out2, err2) == 1);
}

TEST_CASE("config hash is stable and changes with the config") {
  CHECK(fnv1a_hex("abc") == fnv1a_hex("abc"));
  CHECK(fnv1a_hex("abc") != fnv1a_hex("abd"));
  CHECK(fnv1a_hex("").size() == 16);
}

}  // TEST_SUITE
