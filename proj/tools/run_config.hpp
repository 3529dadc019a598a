#pragma once

#include <map>
#include <string>
#include <vector>

#include "swarmloc/eval/pipeline.hpp"
#include "swarmloc/matchnet/params.hpp"
#include "swarmloc/runtime/node.hpp"
#include "swarmloc/sim/scene.hpp"
#include "swarmloc/train/trainer.hpp"

namespace swarmloc::cli {

/// Everything a subcommand can be configured with.
struct RunConfig {
  sim::SceneConfig sim;
  /// max_det 0: taken from the dataset.
  matchnet::MatchNetConfig net;
  train::TrainConfig train;
  eval::EvalConfig eval;
  runtime::RuntimeConfig runtime;

  RunConfig();
};

/// Flat `[section]` / `key = value` text; `#` and `;` start comments.
using IniTable = std::map<std::string, std::map<std::string, std::string>>;
IniTable parse_ini(const std::string& text);

/// Throws ConfigError for unknown section.key names and bad values.
void apply_ini(RunConfig& c, const IniTable& table);
/// "section.key=value".
void apply_override(RunConfig& c, const std::string& assignment);

/// Every key with its current value, in a form parse_ini reads back.
std::string resolved_ini(const RunConfig& c);
std::vector<std::string> known_keys();

/// File (optional) then overrides.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides);

}  // namespace swarmloc::cli
