// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "ensnet/model.hpp"
#include "ensnet/trainer.hpp"

namespace ensnet {

/// Ordered key/value list; later entries override earlier ones on apply.
using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Everything a run needs. Serialized as flat `section.key=value` text.
struct RunConfig {
  std::uint64_t seed = 1;  // network initialization
  ArchConfig arch;
  Phase1Config phase1;
  Phase2Config phase2;
  // Data paths; empty means "not set". Command-line flags take precedence.
  std::string data_labelled;
  std::string data_val;
  std::string data_unlabelled;
  std::string data_test;

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

/// Parses `key=value` lines. Blank lines and lines starting with '#' are
/// skipped; whitespace around keys and values is trimmed. Errors name
/// `origin:line`.
KeyValues parse_key_values(std::istream& in, const std::string& origin);

/// `key=value` from a `--set` style override.
std::pair<std::string, std::string> parse_override(const std::string& text);

/// Applies entries in order. Unknown keys and malformed values throw
/// ConfigError naming the key (and `where`, if given).
void apply_key_values(RunConfig& config, const KeyValues& kv, const std::string& where = {});

/// Every key with its current value, in a fixed order. Doubles are written
/// in shortest round-trip form, so parsing the output reproduces the config
/// exactly.
KeyValues to_key_values(const RunConfig& config);
void write_run_config(const RunConfig& config, std::ostream& out);
void write_run_config(const RunConfig& config, const std::filesystem::path& path);

/// File (optional, empty path = defaults) then overrides, then validate().
RunConfig load_run_config(const std::filesystem::path& path, const KeyValues& overrides = {});

/// Architecture alone, as stored in checkpoints (keys without `arch.`).
KeyValues arch_to_key_values(const ArchConfig& arch);
ArchConfig arch_from_key_values(const KeyValues& kv);

}  // namespace ensnet
