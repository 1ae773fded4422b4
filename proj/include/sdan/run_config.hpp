#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sdan/model.hpp"
#include "sdan/optim.hpp"

namespace sdan {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string data_root;
  std::string out_dir = "run";

  bool operator==(const RunConfig&) const = default;
};

// Every accepted key, in the order render_run_config writes them.
const std::vector<std::string>& run_config_keys();

// Flat "key = value" lines; '#' starts a comment. Unknown or repeated keys
// and unparsable values throw ConfigError naming the key and line. Missing
// keys keep their defaults; distill_channels defaults to channels / 2.
RunConfig parse_run_config(std::string_view text,
                           const std::string& source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

// Fully resolved config; parse_run_config(render_run_config(c)) == c.
std::string render_run_config(const RunConfig& cfg);

}  // namespace sdan
