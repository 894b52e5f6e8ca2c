#include "run_config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "emt/kv.hpp"

namespace emt::cli {

namespace {

void set_analysis(CkaOptions& a, std::string_view key, std::string_view value) {
  if (key == "patches") a.patches = kv::parse_int(key, value);
  else if (key == "patch") a.patch = kv::parse_int(key, value);
  else if (key == "minibatch") a.minibatch = kv::parse_int(key, value);
  else if (key == "batch") a.batch = kv::parse_int(key, value);
  else if (key == "seed") a.seed = kv::parse_u64(key, value);
  else throw ConfigError("unknown analysis key '" + std::string(key) + "'");
  if (a.patches < 2 || a.patch < 1 || a.minibatch < 2 || a.batch < 1) {
    throw ConfigError("analysis needs patches >= 2, patch >= 1, minibatch >= 2, batch >= 1");
  }
}

ModelConfig model_profile(std::string_view name) {
  if (name == "paper") return ModelConfig::paper(4);
  if (name == "desk") return ModelConfig::desk();
  if (name == "tiny") return ModelConfig::tiny();
  throw ConfigError("unknown model profile '" + std::string(name) + "': expected paper|desk|tiny");
}

TrainConfig train_profile(std::string_view name) {
  if (name == "default") return TrainConfig{};
  if (name == "desk") return TrainConfig::desk();
  throw ConfigError("unknown train profile '" + std::string(name) + "': expected default|desk");
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text, const std::filesystem::path& origin) {
  const auto base = origin.parent_path();
  auto resolve = [&](std::string_view v) {
    std::filesystem::path p{std::string(v)};
    return p.is_absolute() ? p : base / p;
  };
  RunConfig rc;
  rc.out_dir = base / "run";
  std::string section;
  std::set<std::string> seen;
  std::istringstream in(text);
  int line_no = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    const std::string where = origin.string() + ":" + std::to_string(line_no) + ": ";
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = kv::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigFileError(where + "malformed section header");
      section = std::string(kv::trim(line.substr(1, line.size() - 2)));
      if (section != "model" && section != "train" && section != "data" && section != "analysis") {
        throw ConfigFileError(where + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigFileError(where + "expected 'key = value'");
    const auto key = kv::trim(line.substr(0, eq)), value = kv::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigFileError(where + "missing key");
    if (section.empty()) throw ConfigFileError(where + "key '" + std::string(key) + "' outside a section");
    const std::string qualified = section + "." + std::string(key);
    if (!seen.insert(qualified).second) {
      throw ConfigFileError(where + "duplicate key '" + std::string(key) + "' in [" + section + "]");
    }
    const bool first_in_section = std::none_of(seen.begin(), seen.end(), [&](const std::string& k) {
      return k != qualified && k.starts_with(section + ".");
    });
    try {
      if (key == "profile" && (section == "model" || section == "train")) {
        if (!first_in_section) throw ConfigError("profile must be the first key of [" + section + "]");
        if (section == "model") rc.model = model_profile(value);
        else rc.train = train_profile(value);
      } else if (section == "model") {
        rc.model.set(key, value);
      } else if (section == "train") {
        if (key == "out_dir") rc.out_dir = resolve(value);
        else rc.train.set(key, value);
      } else if (section == "data") {
        if (key == "dataset") rc.dataset = resolve(value);
        else throw ConfigError("unknown data key '" + std::string(key) + "'");
      } else {
        set_analysis(rc.analysis, key, value);
      }
    } catch (const std::invalid_argument& e) {
      throw ConfigFileError(where + e.what());
    }
  }
  try {
    rc.model.validate();
    rc.train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigFileError(origin.string() + ": " + e.what());
  }
  return rc;
}

RunConfig parse_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigFileError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_run_config_text(ss.str(), std::filesystem::absolute(path));
}

}  // namespace emt::cli
