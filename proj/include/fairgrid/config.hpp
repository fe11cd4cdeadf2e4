#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairgrid/data.hpp"
#include "fairgrid/search.hpp"

namespace fairgrid {

// Generated data in place of a CSV file; see synth_biased.
struct SyntheticSource {
  std::size_t n = 1000;
  double spd = -0.2;
  double base_rate = 0.5;
  std::uint64_t seed = 0;
};

struct DataSource {
  std::filesystem::path path;
  DatasetSchema schema;
  std::optional<SyntheticSource> synthetic;
};

struct RunSection {
  unsigned jobs = 0;
  std::filesystem::path output_dir = "fairgrid_out";
};

struct RunConfig {
  DataSource data;
  GridConfig grid;
  RunSection run;

  // Same layout as the config file; parses back to an equal config.
  nlohmann::json to_json() const;
};

// Parses a YAML (or JSON) document. Relative data paths resolve against
// `base_dir`. Each override is "section.key=value" with a YAML value and is
// applied before validation. A run manifest is accepted as well; its
// echoed config is used. Throws ConfigError, naming the offending key.
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {},
                           const std::vector<std::string>& overrides = {});
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

Dataset load_dataset(const DataSource& source);

}  // namespace fairgrid
