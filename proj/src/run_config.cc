/*
 * Copyright 2026 The EHR Consensus Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Run configuration parsing and the artifact manifest.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "ehrc/io.h"
#include "ehrc/pipeline.h"

namespace ehrc {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T v{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) {
    throw ConfigError("config key '" + key + "': bad number '" + value + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + value + "'");
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream ss;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) ss << ',';
    if constexpr (std::is_floating_point_v<T>) {
      ss << format_double(v[i]);
    } else {
      ss << v[i];
    }
  }
  return ss.str();
}

bool is_path_key(const std::string& key) {
  return key == "events" || key == "labels" || key == "output" || key == "registry";
}

}  // namespace

const std::vector<std::string>& native_model_names() {
  static const std::vector<std::string> kNames = {"logistic", "recurrent", "deep_patient",
                                                  "bow_recurrent"};
  return kNames;
}

void apply_run_setting(RunConfig& c, const std::string& key, const std::string& value) {
  if (key == "events") c.events = value;
  else if (key == "labels") c.labels = value;
  else if (key == "output") c.output_dir = value;
  else if (key == "registry") c.registry = value;
  else if (key == "outcome") c.outcome = parse_outcome(value);
  else if (key == "terminal_prefixes") c.terminal_prefixes = split_list(value);
  else if (key == "models") c.models = split_list(value);
  else if (key == "importance") {
    if (value == "pfi") c.importance = ImportanceSource::kPfi;
    else if (value == "lime") c.importance = ImportanceSource::kLime;
    else throw ConfigError("config key 'importance': expected pfi or lime");
  }
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "folds") c.folds = parse_number<int>(key, value);
  else if (key == "holdout") c.holdout = parse_number<double>(key, value);
  else if (key == "learning_rate") c.train.learning_rate = parse_number<double>(key, value);
  else if (key == "epochs") c.train.epochs = parse_number<int>(key, value);
  else if (key == "batch_size") c.train.batch_size = parse_number<std::size_t>(key, value);
  else if (key == "units" || key == "dae_widths") {
    std::vector<std::size_t> v;
    for (const auto& item : split_list(value)) v.push_back(parse_number<std::size_t>(key, item));
    (key == "units" ? c.train.units : c.train.dae_widths) = v;
  }
  else if (key == "dropout") {
    c.train.dropout.clear();
    for (const auto& item : split_list(value)) {
      c.train.dropout.push_back(parse_number<double>(key, item));
    }
  }
  else if (key == "dae_epochs") c.train.dae_epochs = parse_number<int>(key, value);
  else if (key == "corruption") c.train.corruption = parse_number<double>(key, value);
  else if (key == "balance_classes") c.train.balance_classes = parse_bool(key, value);
  else if (key == "pfi_repeats") c.pfi_repeats = parse_number<int>(key, value);
  else if (key == "lime_samples") c.lime.n_samples = parse_number<std::size_t>(key, value);
  else if (key == "lime_kernel_width") c.lime.kernel_width = parse_number<double>(key, value);
  else if (key == "lime_top_k") c.lime.top_k = parse_number<std::size_t>(key, value);
  else if (key == "rbo_p") c.rbo.p = parse_number<double>(key, value);
  else if (key == "rbo_depth") {
    if (value == "full") c.rbo.depth.reset();
    else c.rbo.depth = parse_number<std::size_t>(key, value);
  }
  else if (key == "k") {
    if (value == "auto") c.k.reset();
    else c.k = parse_number<int>(key, value);
  }
  else if (key == "k_min") c.k_min = parse_number<int>(key, value);
  else if (key == "k_max") c.k_max = parse_number<int>(key, value);
  else if (key == "bootstrap") c.bootstrap = parse_number<int>(key, value);
  else if (key == "connectivity_threshold") {
    c.connectivity_threshold = parse_number<double>(key, value);
  }
  else if (key == "top_k") c.top_k = parse_number<std::size_t>(key, value);
  else if (key == "ablation") c.ablation = parse_bool(key, value);
  else if (key == "ablation_model") c.ablation_model = value;
  else throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (is_path_key(key) && !base_dir.empty() && std::filesystem::path(value).is_relative()) {
      value = (base_dir / value).lexically_normal().string();
    }
    apply_run_setting(config, key, value);
  }
  return config;
}

std::string describe_run_config(const RunConfig& c) {
  std::map<std::string, std::string> kv;
  kv["events"] = c.events.string();
  kv["labels"] = c.labels.string();
  kv["output"] = c.output_dir.string();
  kv["registry"] = c.registry_dir().string();
  kv["outcome"] = std::string(outcome_name(c.outcome));
  kv["terminal_prefixes"] = join(c.terminal_prefixes);
  kv["models"] = join(c.models);
  kv["importance"] = std::string(importance_source_name(c.importance));
  kv["seed"] = std::to_string(c.seed);
  kv["folds"] = std::to_string(c.folds);
  kv["holdout"] = format_double(c.holdout);
  kv["learning_rate"] = format_double(c.train.learning_rate);
  kv["epochs"] = std::to_string(c.train.epochs);
  kv["batch_size"] = std::to_string(c.train.batch_size);
  kv["units"] = join(c.train.units);
  kv["dropout"] = join(c.train.dropout);
  kv["dae_widths"] = join(c.train.dae_widths);
  kv["dae_epochs"] = std::to_string(c.train.dae_epochs);
  kv["corruption"] = format_double(c.train.corruption);
  kv["balance_classes"] = c.train.balance_classes ? "true" : "false";
  kv["pfi_repeats"] = std::to_string(c.pfi_repeats);
  kv["lime_samples"] = std::to_string(c.lime.n_samples);
  kv["lime_kernel_width"] = format_double(c.lime.kernel_width);
  kv["lime_top_k"] = std::to_string(c.lime.top_k);
  kv["rbo_p"] = format_double(c.rbo.p);
  kv["rbo_depth"] = c.rbo.depth ? std::to_string(*c.rbo.depth) : "full";
  kv["k"] = c.k ? std::to_string(*c.k) : "auto";
  kv["k_min"] = std::to_string(c.k_min);
  kv["k_max"] = std::to_string(c.k_max);
  kv["bootstrap"] = std::to_string(c.bootstrap);
  kv["connectivity_threshold"] = format_double(c.connectivity_threshold);
  kv["top_k"] = std::to_string(c.top_k);
  kv["ablation"] = c.ablation ? "true" : "false";
  kv["ablation_model"] = c.ablation_model;
  std::ostringstream out;
  for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
  return out.str();
}

std::filesystem::path RunConfig::registry_dir() const {
  return registry.empty() ? output_dir / "external" : registry;
}

void RunConfig::validate(bool inputs) const {
  if (inputs) {
    if (events.empty()) throw ConfigError("config key 'events' is required");
    if (labels.empty()) throw ConfigError("config key 'labels' is required");
    if (!std::filesystem::is_regular_file(events)) {
      throw ConfigError("config key 'events': no such file " + events.string());
    }
    if (!std::filesystem::is_regular_file(labels)) {
      throw ConfigError("config key 'labels': no such file " + labels.string());
    }
  }
  if (output_dir.empty()) throw ConfigError("config key 'output' is required");
  if (models.empty()) throw ConfigError("config key 'models': at least one model is required");
  const auto& known = native_model_names();
  std::set<std::string> seen;
  for (const auto& m : models) {
    if (std::find(known.begin(), known.end(), m) == known.end()) {
      throw ConfigError("config key 'models': unknown model '" + m + "'");
    }
    if (!seen.insert(m).second) throw ConfigError("config key 'models': '" + m + "' repeated");
  }
  if (outcome == OutcomeKind::kSuddenDeathComposite && terminal_prefixes.empty()) {
    throw ConfigError("config key 'terminal_prefixes' must be non-empty for sudden_death");
  }
  if (folds < 2) throw ConfigError("config key 'folds' must be at least 2");
  if (!(holdout > 0.0 && holdout < 1.0)) throw ConfigError("config key 'holdout' must be in (0, 1)");
  train.validate();
  if (pfi_repeats < 1) throw ConfigError("config key 'pfi_repeats' must be at least 1");
  if (lime.n_samples < 2) throw ConfigError("config key 'lime_samples' must be at least 2");
  if (!(lime.kernel_width > 0.0)) throw ConfigError("config key 'lime_kernel_width' must be > 0");
  if (lime.top_k < 1) throw ConfigError("config key 'lime_top_k' must be at least 1");
  rbo.validate();
  if (k && *k < 1) throw ConfigError("config key 'k' must be at least 1");
  if (k_min < 1 || k_max < k_min) throw ConfigError("config keys 'k_min'/'k_max': need 1 <= k_min <= k_max");
  if (bootstrap < 2) throw ConfigError("config key 'bootstrap' must be at least 2");
  if (!(connectivity_threshold >= -1.0 && connectivity_threshold <= 1.0)) {
    throw ConfigError("config key 'connectivity_threshold' must be in [-1, 1]");
  }
  if (top_k < 1) throw ConfigError("config key 'top_k' must be at least 1");
  if (ablation_model != "logistic" && ablation_model != "recurrent" &&
      ablation_model != "deep_patient") {
    throw ConfigError("config key 'ablation_model' must be a tensor model");
  }
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static const char* kHex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xf]);
  }
  return out;
}

void ArtifactSet::write(const std::string& relative, std::string_view content) {
  write_text_file(root_ / relative, content);
  files_[relative] = Artifact{relative, sha256_hex(content), content.size()};
}

std::vector<Artifact> ArtifactSet::manifest() const {
  std::vector<Artifact> out;
  for (const auto& [path, a] : files_) out.push_back(a);
  return out;
}

}  // namespace ehrc
