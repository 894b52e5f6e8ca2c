#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "emt/metrics.hpp"
#include "emt/model.hpp"
#include "emt/train.hpp"

namespace emt::cli {

/// Parse or validation failure in a run config; the message starts with
/// "<file>:<line>:" when a line is to blame.
class ConfigFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a run config file can set.
///
///   # comment
///   [model]     profile = paper|desk|tiny (first), then ModelConfig keys
///   [train]     profile = default|desk (first), TrainConfig keys, out_dir
///   [data]      dataset
///   [analysis]  patches, patch, minibatch, batch, seed
///
/// Relative paths are resolved against the directory holding the file.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::filesystem::path dataset;
  std::filesystem::path out_dir;  // default: <config dir>/run
  CkaOptions analysis;
};

RunConfig parse_run_config(const std::filesystem::path& path);
/// Same grammar from text; `origin` names the source in messages and anchors
/// relative paths.
RunConfig parse_run_config_text(const std::string& text, const std::filesystem::path& origin);

}  // namespace emt::cli
