#pragma once

// Flat key=value run configuration with dotted namespaces
// (network.n_cff=3). Later settings win; unknown keys are rejected.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "slbr/synth.hpp"
#include "slbr/train.hpp"

namespace slbr {

using Setting = std::pair<std::string, std::string>;

struct AppConfig {
  SynthConfig synth;
  std::filesystem::path backgrounds_dir;
  std::filesystem::path watermarks_dir;

  std::filesystem::path data_path;
  std::filesystem::path eval_data_path;  // defaults to data_path

  TrainConfig train;
  int checkpoint_every = 0;
  int log_every = 10;
  std::filesystem::path resume_from;

  std::filesystem::path checkpoint;  // eval / infer
  std::string eval_model = "network";  // or "identity"
  std::filesystem::path infer_input;

  std::vector<int> ablate_rows{1, 5, 9, 12};
};

// Lines are `key = value`; blank lines and lines starting with '#' are
// skipped. LoadError for an unreadable file, ConfigError for bad syntax.
std::vector<Setting> read_config_file(const std::filesystem::path& path);
Setting parse_setting(const std::string& text);

// Starts from toy-scale defaults. `network.preset` (toy | default) is
// applied before every other key regardless of order.
AppConfig build_config(const std::vector<Setting>& settings);

std::vector<std::string> config_keys();

}  // namespace slbr
