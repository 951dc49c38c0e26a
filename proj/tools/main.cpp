#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "scalebb/cli.hpp"
#include "scalebb/io.hpp"

namespace {

void add_override_flags(CLI::App* cmd, scalebb::CliOverrides& ov) {
  cmd->add_option("--method", ov.method, "Override engine method (BB, BLBB, SDBB, LOSSLESS, BLDP, SDDP)");
  cmd->add_option("--gamma", ov.gamma, "Override subset exponent (b = floor(n^gamma))");
  cmd->add_option("--b", ov.b, "Override subset size b");
  cmd->add_option("--r", ov.r, "Override draw count r");
  cmd->add_option("--s", ov.s, "Override number of subsets processed");
  cmd->add_option("--seed", ov.seed, "Override master seed");
  cmd->add_option("--workers", ov.workers, "Worker threads (0 = all cores)");
  cmd->add_option("--time-budget", ov.time_budget, "Time budget in seconds");
  cmd->add_option("--mixed-weight-matrix", ov.mixed_weight_matrix,
                  "Mixed-model weighting: inverse (GLS convention) or literal");
  cmd->add_option("--out", ov.out_dir, "Output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Memory-bounded Bayesian-bootstrap posterior summaries"};
  app.set_version_flag("--version", std::string(scalebb::kVersion));
  app.require_subcommand(1);

  scalebb::CliOverrides run_ov, sim_ov;
  std::string run_config, sim_plan, compare_reference;
  std::vector<std::string> compare_summaries;
  std::optional<std::string> compare_out;

  auto* run = app.add_subcommand("run", "Run configured engines on a dataset");
  run->add_option("--config", run_config, "Run configuration (JSON)")->required();
  add_override_flags(run, run_ov);

  auto* simulate = app.add_subcommand("simulate", "Regenerate the error table from synthetic data");
  simulate->add_option("--plan", sim_plan, "Experiment plan (JSON)")->required();
  simulate->add_option("--seed", sim_ov.seed, "Override data-generating seed");
  simulate->add_option("--workers", sim_ov.workers, "Worker threads (0 = all cores)");
  simulate->add_option("--out", sim_ov.out_dir, "Output directory for table1.csv and traces");

  auto* compare = app.add_subcommand("compare", "Score summary files against a reference");
  compare->add_option("--reference", compare_reference, "Reference summary JSON")->required();
  compare->add_option("summaries", compare_summaries, "Summary JSON files to score")->required();
  compare->add_option("--out", compare_out, "Also write the error table as CSV");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    return scalebb::cmd_run(run_config, run_ov, std::cout, std::cerr);
  }
  if (simulate->parsed()) {
    return scalebb::cmd_simulate(sim_plan, sim_ov, std::cout, std::cerr);
  }
  if (compare->parsed()) {
    return scalebb::cmd_compare(compare_summaries, compare_reference, compare_out, std::cout,
                                std::cerr);
  }
  return 1;
}
