// SPDX-License-Identifier: GPL-2.0-only
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cv2x/engine.hpp"

namespace cv2x {

/// Bad config text, unknown key or unusable value. what() names the key or line.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Engine configuration plus the source paths of file-backed tables.
struct RunConfig {
  EngineConfig engine;
  std::string pathloss_table;
  std::string bler_pssch_table;
  std::string bler_pscch_table;
  int seeds = 1;
};

/// All settable keys as "section.key", in canonical order.
const std::vector<std::string>& config_keys();

/// Sets one key from text. Throws ConfigError naming the key.
void set_key(RunConfig& cfg, std::string_view key, std::string_view value);
std::string get_key(const RunConfig& cfg, std::string_view key);

/// Applies "section.key=value".
void apply_override(RunConfig& cfg, std::string_view assignment);

/// Applies every key of an INI document on top of `cfg`. `origin` names the
/// source in error messages.
void apply_ini(RunConfig& cfg, std::istream& in, const std::string& origin = "<config>");
void apply_ini_file(RunConfig& cfg, const std::filesystem::path& path);

/// Every key with its current value, INI formatted, in canonical order.
std::string canonical_dump(const RunConfig& cfg);
/// 64-bit hash of the canonical dump and of loaded table contents.
std::uint64_t config_hash(const RunConfig& cfg);
std::string hex64(std::uint64_t v);

/// Named presets: "desk" shrinks the scale. Throws ConfigError for unknown names.
void apply_preset(RunConfig& cfg, std::string_view name);

/// Validates the engine part and the table invariants.
void validate(const RunConfig& cfg);

/// "off", "515" for [5,15], "26" for [2,6], otherwise "a-b".
std::string variant_label(const SpsConfig& sps);

const char* version_string();

}  // namespace cv2x
