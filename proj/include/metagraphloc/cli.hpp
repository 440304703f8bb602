#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "metagraphloc/config.hpp"

namespace mgl::cli {

enum class ExitCode : int { ok = 0, runtime_failure = 1, config_error = 2 };

/// Runs one subcommand against a resolved config and writes its artifacts and
/// manifest.cfg under `out_dir`. Throws ConfigKeyError/ConfigError for
/// configuration problems and other exceptions for runtime failures.
void run_command(const std::string& command, const RunConfig& config, const std::filesystem::path& out_dir,
                 std::size_t jobs);

/// Known subcommands.
bool is_command(const std::string& name);

/// Entry point of the metagraphloc executable. Returns the process exit code.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mgl::cli
