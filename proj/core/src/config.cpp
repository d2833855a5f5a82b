#include "cfd/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace cfd {

namespace {

struct RawConfig {
  // section -> key -> (raw value, line number)
  std::map<std::string, std::map<std::string, std::pair<std::string, int>>> values;
  std::string path;

  bool has(const std::string& section, const std::string& key) const {
    auto s = values.find(section);
    return s != values.end() && s->second.count(key) > 0;
  }

  const std::string& raw(const std::string& section, const std::string& key) const {
    return values.at(section).at(key).first;
  }

  [[noreturn]] void fail(const std::string& section, const std::string& key,
                         const std::string& why) const {
    throw std::runtime_error("config " + path + ": [" + section + "] " + key + ": " + why);
  }
};

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

RawConfig parse_raw(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "config: cannot open " + path);
  RawConfig raw;
  raw.path = path;
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // strip comments outside of quotes
    bool in_quotes = false;
    for (size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_quotes = !in_quotes;
      if (line[i] == '#' && !in_quotes) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      check(line.back() == ']', "config " + path + " line " + std::to_string(line_no) +
                                    ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      check(!section.empty(), "config " + path + " line " + std::to_string(line_no) +
                                  ": empty section name");
      continue;
    }
    const size_t eq = line.find('=');
    check(eq != std::string::npos, "config " + path + " line " + std::to_string(line_no) +
                                       ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    check(!key.empty() && !value.empty(), "config " + path + " line " +
                                              std::to_string(line_no) + ": empty key or value");
    check(!section.empty(), "config " + path + " line " + std::to_string(line_no) +
                                ": key outside of any section");
    check(raw.values[section].count(key) == 0,
          "config " + path + " line " + std::to_string(line_no) + ": duplicate key " + key);
    raw.values[section][key] = {value, line_no};
  }
  return raw;
}

std::string get_string(const RawConfig& raw, const std::string& section,
                       const std::string& key, const std::string& fallback) {
  if (!raw.has(section, key)) return fallback;
  const std::string& v = raw.raw(section, key);
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') {
    return v.substr(1, v.size() - 2);
  }
  raw.fail(section, key, "expected a quoted string");
}

double get_double(const RawConfig& raw, const std::string& section, const std::string& key,
                  double fallback) {
  if (!raw.has(section, key)) return fallback;
  const std::string& v = raw.raw(section, key);
  try {
    size_t used = 0;
    const double parsed = std::stod(v, &used);
    if (used == v.size()) return parsed;
  } catch (const std::exception&) {
  }
  raw.fail(section, key, "expected a number, got '" + v + "'");
}

int get_int(const RawConfig& raw, const std::string& section, const std::string& key,
            int fallback) {
  if (!raw.has(section, key)) return fallback;
  const std::string& v = raw.raw(section, key);
  int parsed = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), parsed);
  if (ec == std::errc() && ptr == v.data() + v.size()) return parsed;
  raw.fail(section, key, "expected an integer, got '" + v + "'");
}

uint64_t get_u64(const RawConfig& raw, const std::string& section, const std::string& key) {
  check(raw.has(section, key), "config " + raw.path + ": missing required key [" + section +
                                   "] " + key);
  const std::string& v = raw.raw(section, key);
  uint64_t parsed = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), parsed);
  if (ec == std::errc() && ptr == v.data() + v.size()) return parsed;
  raw.fail(section, key, "expected a nonnegative integer, got '" + v + "'");
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> kKnown{
      "paths.detect_data",        "paths.span_data",
      "paths.checkpoint_dir",     "paths.report_dir",
      "model.num_layers",         "model.num_heads",
      "model.model_dim",          "model.ffn_dim",
      "model.max_len",            "model.dropout",
      "model.conv1_channels",     "model.conv2_channels",
      "model.attention_embed_dim", "model.feature_dim",
      "vocab.min_freq",           "vocab.max_size",
      "train.learning_rate",      "train.weight_decay",
      "train.beta1",              "train.beta2",
      "train.adam_eps",           "train.batch_size",
      "train.epochs_stage1",      "train.epochs_stage2",
      "train.seed",               "train.split_ratio",
      "train.threshold"};
  return kKnown;
}

}  // namespace

RunConfig parse_run_config(const std::string& path) {
  const RawConfig raw = parse_raw(path);
  for (const auto& [section, entries] : raw.values) {
    for (const auto& [key, value] : entries) {
      const std::string full = section + "." + key;
      check(known_keys().count(full) > 0,
            "config " + path + " line " + std::to_string(value.second) + ": unknown key " +
                full);
    }
  }

  RunConfig cfg;
  cfg.detect_data = get_string(raw, "paths", "detect_data", "");
  cfg.span_data = get_string(raw, "paths", "span_data", "");
  cfg.checkpoint_dir = get_string(raw, "paths", "checkpoint_dir", cfg.checkpoint_dir);
  cfg.report_dir = get_string(raw, "paths", "report_dir", cfg.report_dir);

  cfg.model.num_layers = get_int(raw, "model", "num_layers", cfg.model.num_layers);
  cfg.model.num_heads = get_int(raw, "model", "num_heads", cfg.model.num_heads);
  cfg.model.model_dim = get_int(raw, "model", "model_dim", cfg.model.model_dim);
  cfg.model.ffn_dim = get_int(raw, "model", "ffn_dim", cfg.model.ffn_dim);
  cfg.model.max_len = get_int(raw, "model", "max_len", cfg.model.max_len);
  cfg.model.dropout = get_double(raw, "model", "dropout", cfg.model.dropout);
  cfg.model.conv1_channels = get_int(raw, "model", "conv1_channels", cfg.model.conv1_channels);
  cfg.model.conv2_channels = get_int(raw, "model", "conv2_channels", cfg.model.conv2_channels);
  cfg.model.attention_embed_dim =
      get_int(raw, "model", "attention_embed_dim", cfg.model.attention_embed_dim);
  cfg.model.feature_dim = get_int(raw, "model", "feature_dim", cfg.model.feature_dim);

  cfg.vocab_min_freq = get_int(raw, "vocab", "min_freq", cfg.vocab_min_freq);
  cfg.vocab_max_size = get_int(raw, "vocab", "max_size", cfg.vocab_max_size);

  cfg.train.learning_rate = get_double(raw, "train", "learning_rate", cfg.train.learning_rate);
  cfg.train.weight_decay = get_double(raw, "train", "weight_decay", cfg.train.weight_decay);
  cfg.train.beta1 = get_double(raw, "train", "beta1", cfg.train.beta1);
  cfg.train.beta2 = get_double(raw, "train", "beta2", cfg.train.beta2);
  cfg.train.adam_eps = get_double(raw, "train", "adam_eps", cfg.train.adam_eps);
  cfg.train.batch_size = get_int(raw, "train", "batch_size", cfg.train.batch_size);
  cfg.epochs_stage1 = get_int(raw, "train", "epochs_stage1", cfg.epochs_stage1);
  cfg.epochs_stage2 = get_int(raw, "train", "epochs_stage2", cfg.epochs_stage2);
  cfg.train.seed = get_u64(raw, "train", "seed");  // all randomness flows from here
  cfg.split_ratio = get_double(raw, "train", "split_ratio", cfg.split_ratio);
  cfg.threshold = get_double(raw, "train", "threshold", cfg.threshold);

  // structural validation that does not depend on the vocabulary
  ModelConfig probe = cfg.model;
  probe.vocab_size = 4;
  probe.validate();
  cfg.train.validate();
  check(cfg.epochs_stage1 >= 1 && cfg.epochs_stage2 >= 1, "config: epochs must be >= 1");
  check(cfg.split_ratio > 0.0 && cfg.split_ratio < 1.0,
        "config: split_ratio must be in (0, 1)");
  check(cfg.threshold > 0.0 && cfg.threshold < 1.0, "config: threshold must be in (0, 1)");
  check(cfg.vocab_min_freq >= 1, "config: vocab min_freq must be >= 1");
  check(cfg.vocab_max_size > 3, "config: vocab max_size must exceed the reserved ids");
  return cfg;
}

}  // namespace cfd
