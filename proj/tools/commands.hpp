#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>

namespace sdan::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,
  kDataError = 3,
  kNumericAbort = 4,
};

struct Io {
  std::ostream& out;
  std::ostream& err;
};

// Parses argv, dispatches to a subcommand and maps library exceptions to
// exit codes. Never throws.
int run(int argc, const char* const* argv, Io io);

// The subcommands below throw; run() translates.
int cmd_train(const std::filesystem::path& config, Io io);
int cmd_eval(const std::filesystem::path& model,
             const std::filesystem::path& data_root, int scale, Io io);
int cmd_sr(const std::filesystem::path& model,
           const std::filesystem::path& input,
           const std::filesystem::path& output, Io io);
int cmd_info(const std::optional<std::filesystem::path>& config,
             const std::optional<std::filesystem::path>& model, Io io);
int cmd_degrade(const std::filesystem::path& hr_dir, int scale, Io io);

}  // namespace sdan::cli
