#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace scalebb {

/// Command-line flags that override leaves of the config document.
struct CliOverrides {
  std::optional<std::string> method;
  std::optional<double> gamma;
  std::optional<std::int64_t> b;
  std::optional<std::int64_t> r;
  std::optional<std::int64_t> s;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<double> time_budget;
  std::optional<std::string> mixed_weight_matrix;  // inverse | literal
  std::optional<std::string> out_dir;
};

/// Exit-code contract, pinned for scripting: 0 success, 1 fatal error
/// (config schema violation, unreadable input), 2 partial failure.
int cmd_run(const std::string& config_path, const CliOverrides& overrides, std::ostream& out,
            std::ostream& err);

int cmd_simulate(const std::string& plan_path, const CliOverrides& overrides, std::ostream& out,
                 std::ostream& err);

int cmd_compare(const std::vector<std::string>& summary_paths, const std::string& reference_path,
                const std::optional<std::string>& out_csv, std::ostream& out, std::ostream& err);

}  // namespace scalebb
