// SPDX-License-Identifier: Apache-2.0
#include "ensnet/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>

namespace ensnet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError(key + ": expected " + expected + ", got '" + value + "'");
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || v.empty()) bad_value(key, v, "a non-negative integer");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || v.empty()) bad_value(key, v, "a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "true or false");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_u64(key, trim(item)));
  if (out.empty()) bad_value(key, v, "a comma-separated list of integers");
  return out;
}

std::string fmt_double(double x) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, p);
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename Acc>
Field size_field(std::string key, Acc acc) {
  return {key, [acc](const RunConfig& c) { return std::to_string(acc(c)); },
          [acc, key](RunConfig& c, const std::string& v) { acc(c) = parse_u64(key, v); }};
}

template <typename Acc>
Field double_field(std::string key, Acc acc) {
  return {key, [acc](const RunConfig& c) { return fmt_double(acc(c)); },
          [acc, key](RunConfig& c, const std::string& v) { acc(c) = parse_double(key, v); }};
}

template <typename Acc>
Field bool_field(std::string key, Acc acc) {
  return {key, [acc](const RunConfig& c) { return std::string(acc(c) ? "true" : "false"); },
          [acc, key](RunConfig& c, const std::string& v) { acc(c) = parse_bool(key, v); }};
}

template <typename Acc>
Field string_field(std::string key, Acc acc) {
  return {key, [acc](const RunConfig& c) { return acc(c); },
          [acc](RunConfig& c, const std::string& v) { acc(c) = v; }};
}

#define ENSNET_ACC(expr) [](auto& c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(size_field("seed", ENSNET_ACC(seed)));
    f.push_back(size_field("arch.input_channels", ENSNET_ACC(arch.input_channels)));
    f.push_back(size_field("arch.input_size", ENSNET_ACC(arch.input_size)));
    f.push_back({"arch.trunk_filters",
                 [](const RunConfig& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.arch.trunk_filters.size(); ++i)
                     s += (i ? "," : "") + std::to_string(c.arch.trunk_filters[i]);
                   return s;
                 },
                 [](RunConfig& c, const std::string& v) {
                   c.arch.trunk_filters = parse_list("arch.trunk_filters", v);
                 }});
    f.push_back(size_field("arch.kernel", ENSNET_ACC(arch.kernel)));
    f.push_back(size_field("arch.stride", ENSNET_ACC(arch.stride)));
    f.push_back(size_field("arch.branch_filters", ENSNET_ACC(arch.branch_filters)));
    f.push_back(size_field("arch.hidden_units", ENSNET_ACC(arch.hidden_units)));
    f.push_back(size_field("arch.num_classes", ENSNET_ACC(arch.num_classes)));
    f.push_back(size_field("arch.num_branches", ENSNET_ACC(arch.num_branches)));
    f.push_back({"arch.padding",
                 [](const RunConfig& c) {
                   return std::string(c.arch.padding == Padding::Same ? "same" : "valid");
                 },
                 [](RunConfig& c, const std::string& v) {
                   if (v == "same")
                     c.arch.padding = Padding::Same;
                   else if (v == "valid")
                     c.arch.padding = Padding::Valid;
                   else
                     bad_value("arch.padding", v, "same or valid");
                 }});
    f.push_back(double_field("arch.vote_temperature", ENSNET_ACC(arch.vote_temperature)));
    f.push_back(double_field("arch.bn_momentum", ENSNET_ACC(arch.bn_momentum)));
    f.push_back(double_field("arch.bn_epsilon", ENSNET_ACC(arch.bn_epsilon)));

    f.push_back(size_field("phase1.epochs", ENSNET_ACC(phase1.epochs)));
    f.push_back(size_field("phase1.batch_size", ENSNET_ACC(phase1.batch_size)));
    f.push_back(double_field("phase1.portion", ENSNET_ACC(phase1.portion)));
    f.push_back(double_field("phase1.lr", ENSNET_ACC(phase1.sgd.base_lr)));
    f.push_back(double_field("phase1.decay", ENSNET_ACC(phase1.sgd.decay)));
    f.push_back(double_field("phase1.momentum", ENSNET_ACC(phase1.sgd.momentum)));
    f.push_back(bool_field("phase1.augment", ENSNET_ACC(phase1.augment_enabled)));
    f.push_back(size_field("phase1.seed", ENSNET_ACC(phase1.seed)));

    f.push_back(double_field("augment.rescale_range", ENSNET_ACC(phase1.augment.rescale_range)));
    f.push_back(double_field("augment.translate_range", ENSNET_ACC(phase1.augment.translate_range)));
    f.push_back(double_field("augment.rotate_degrees", ENSNET_ACC(phase1.augment.rotate_degrees)));
    f.push_back(double_field("augment.intensity_scale_min", ENSNET_ACC(phase1.augment.intensity_scale_min)));
    f.push_back(double_field("augment.intensity_scale_max", ENSNET_ACC(phase1.augment.intensity_scale_max)));
    f.push_back(double_field("augment.intensity_offset", ENSNET_ACC(phase1.augment.intensity_offset)));
    f.push_back(double_field("augment.blur_sigma_min", ENSNET_ACC(phase1.augment.blur_sigma_min)));
    f.push_back(double_field("augment.blur_sigma_max", ENSNET_ACC(phase1.augment.blur_sigma_max)));
    f.push_back(double_field("augment.probability", ENSNET_ACC(phase1.augment.probability)));

    f.push_back(size_field("phase2.epochs", ENSNET_ACC(phase2.epochs)));
    f.push_back(size_field("phase2.batch_size", ENSNET_ACC(phase2.batch_size)));
    f.push_back(double_field("phase2.lr", ENSNET_ACC(phase2.sgd.base_lr)));
    f.push_back(double_field("phase2.decay", ENSNET_ACC(phase2.sgd.decay)));
    f.push_back(double_field("phase2.momentum", ENSNET_ACC(phase2.sgd.momentum)));
    f.push_back(size_field("phase2.seed", ENSNET_ACC(phase2.seed)));

    f.push_back(string_field("data.labelled", ENSNET_ACC(data_labelled)));
    f.push_back(string_field("data.val", ENSNET_ACC(data_val)));
    f.push_back(string_field("data.unlabelled", ENSNET_ACC(data_unlabelled)));
    f.push_back(string_field("data.test", ENSNET_ACC(data_test)));
    return f;
  }();
  return table;
}

#undef ENSNET_ACC

const Field& find_field(const std::string& key) {
  for (const auto& f : fields())
    if (f.key == key) return f;
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void RunConfig::validate() const {
  try {
    arch.validate();
    phase1.validate();
    phase2.validate();
    Sgd<double>{phase1.sgd};
    Sgd<double>{phase2.sgd};
  } catch (const ShapeError& e) {
    throw ConfigError(e.what());
  }
  // Phase 2 retrains everything, so it must run strictly below phase 1's rate
  // (a zero phase-2 rate is a no-op and always allowed).
  if (phase2.sgd.base_lr > 0.0 && !(phase2.sgd.base_lr < phase1.sgd.base_lr))
    throw ConfigError("phase2.lr (" + fmt_double(phase2.sgd.base_lr) +
                      ") must be smaller than phase1.lr (" + fmt_double(phase1.sgd.base_lr) + ")");
}

KeyValues parse_key_values(std::istream& in, const std::string& origin) {
  KeyValues kv;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(n) + ": expected key=value, got '" + t + "'");
    std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(n) + ": empty key");
    kv.emplace_back(std::move(key), trim(t.substr(eq + 1)));
  }
  return kv;
}

std::pair<std::string, std::string> parse_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + text + "' is not key=value");
  return {trim(text.substr(0, eq)), trim(text.substr(eq + 1))};
}

void apply_key_values(RunConfig& config, const KeyValues& kv, const std::string& where) {
  for (const auto& [key, value] : kv) {
    try {
      find_field(key).set(config, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where.empty() ? e.what() : where + ": " + e.what());
    }
  }
}

KeyValues to_key_values(const RunConfig& config) {
  KeyValues kv;
  for (const auto& f : fields()) kv.emplace_back(f.key, f.get(config));
  return kv;
}

void write_run_config(const RunConfig& config, std::ostream& out) {
  for (const auto& [k, v] : to_key_values(config)) out << k << '=' << v << '\n';
}

void write_run_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_run_config(config, out);
  if (!out) throw DataError("write failed: " + path.string());
}

RunConfig load_run_config(const std::filesystem::path& path, const KeyValues& overrides) {
  RunConfig config;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    apply_key_values(config, parse_key_values(in, path.string()), path.string());
  }
  apply_key_values(config, overrides, "override");
  config.validate();
  return config;
}

KeyValues arch_to_key_values(const ArchConfig& arch) {
  RunConfig c;
  c.arch = arch;
  KeyValues kv;
  for (const auto& f : fields())
    if (f.key.rfind("arch.", 0) == 0) kv.emplace_back(f.key.substr(5), f.get(c));
  return kv;
}

ArchConfig arch_from_key_values(const KeyValues& kv) {
  RunConfig c;
  KeyValues prefixed;
  for (const auto& [k, v] : kv) prefixed.emplace_back("arch." + k, v);
  apply_key_values(c, prefixed);
  c.arch.validate();
  return c.arch;
}

}  // namespace ensnet
