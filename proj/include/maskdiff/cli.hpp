#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include <json.hpp>

namespace maskdiff {

// Exit codes: 0 success, 1 check failure, 2 usage/config error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<double> tolerance;
  std::string out_dir = ".";
};

// Configuration-driven commands. Configs are validated strictly (unknown keys
// rejected) before any computation; outputs are written atomically.
int cmd_sample(const nlohmann::json& config, const CliOverrides& overrides,
               std::ostream& log);
int cmd_oracle(const nlohmann::json& config, const CliOverrides& overrides,
               std::ostream& log);
int cmd_ising(const nlohmann::json& config, const CliOverrides& overrides,
              std::ostream& log);

// Built-in fixture suite: reduction identities, score reconstruction, master
// equation checks, negative control, a short end-to-end run. The sign-flip
// hook corrupts the weight term so the suite must fail (mutation check).
int cmd_selfcheck(bool inject_g_sign_flip, std::ostream& log);

int run_cli(int argc, const char* const* argv);

}  // namespace maskdiff
