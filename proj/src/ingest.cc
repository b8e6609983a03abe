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

#include "ehrc/ingest.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace ehrc {
namespace {

std::string lower_trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out(s.substr(b, e - b));
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

void LabCleaningRule::validate() const {
  if (canonical_name.empty()) throw ConfigError("lab rule without a name");
  if (aliases.empty()) {
    throw ConfigError("lab rule '" + canonical_name + "' has no aliases");
  }
  if (!(bio_min < bio_max)) {
    throw ConfigError("lab rule '" + canonical_name +
                      "' needs min < max for the biological range");
  }
  const auto it = unit_conversions.find(canonical_unit);
  if (it != unit_conversions.end() && it->second != 1.0) {
    throw ConfigError("lab rule '" + canonical_name +
                      "' maps its canonical unit to a factor other than 1");
  }
  for (const auto& [unit, factor] : unit_conversions) {
    if (!(factor > 0.0)) {
      throw ConfigError("lab rule '" + canonical_name + "' unit '" + unit +
                        "' has a non-positive factor");
    }
  }
}

std::vector<LabCleaningRule> parse_lab_rules(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("lab rules: ") + e.what());
  }
  if (!doc.is_array()) throw ConfigError("lab rules must be a JSON array");
  std::vector<LabCleaningRule> rules;
  for (const auto& item : doc) {
    LabCleaningRule rule;
    try {
      rule.canonical_name = item.at("name").get<std::string>();
      rule.canonical_unit = item.value("unit", std::string());
      rule.aliases = item.at("aliases").get<std::vector<std::string>>();
      if (item.contains("units")) {
        rule.unit_conversions =
            item.at("units").get<std::map<std::string, double>>();
      }
      rule.bio_min = item.at("min").get<double>();
      rule.bio_max = item.at("max").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("lab rules: ") + e.what());
    }
    rule.unit_conversions.emplace(rule.canonical_unit, 1.0);
    rule.validate();
    rules.push_back(std::move(rule));
  }
  return rules;
}

std::vector<LabCleaningRule> load_lab_rules(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open lab rules file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_lab_rules(buffer.str());
}

LabCleaningResult clean_lab_rows(const std::vector<RawLabRow>& rows,
                                 const std::vector<LabCleaningRule>& rules) {
  std::unordered_map<std::string, const LabCleaningRule*> lookup;
  for (const auto& rule : rules) {
    rule.validate();
    lookup.emplace(lower_trim(rule.canonical_name), &rule);
    for (const auto& alias : rule.aliases) lookup.emplace(lower_trim(alias), &rule);
  }

  LabCleaningResult result;
  for (const auto& row : rows) {
    EventRecord marker;
    marker.subject_id = row.subject_id;
    marker.event_day = row.day;
    marker.family = Family::kBloodTestMarker;

    const auto hit = lookup.find(lower_trim(row.name));
    if (hit == lookup.end()) {
      marker.code = std::string(kOtherLabName);
      result.events.push_back(std::move(marker));
      ++result.report.unmatched_rows;
      ++result.report.unmatched_names[lower_trim(row.name)];
      continue;
    }

    const LabCleaningRule& rule = *hit->second;
    RuleCounts& counts = result.report.per_rule[rule.canonical_name];
    ++counts.rows;
    marker.code = rule.canonical_name;
    result.events.push_back(marker);

    if (!row.value) {
      ++counts.missing_value;
      continue;
    }
    double factor = 1.0;
    const std::string unit = row.unit.empty() ? rule.canonical_unit : row.unit;
    const auto conv = std::find_if(
        rule.unit_conversions.begin(), rule.unit_conversions.end(),
        [&](const auto& kv) { return lower_trim(kv.first) == lower_trim(unit); });
    if (conv == rule.unit_conversions.end()) {
      ++counts.unknown_unit;
      continue;
    }
    factor = conv->second;
    if (factor != 1.0) ++counts.converted;
    const double value = *row.value * factor;
    if (value == 0.0) ++counts.zero_values;
    if (value < rule.bio_min || value > rule.bio_max) {
      ++counts.out_of_range;
      continue;
    }
    EventRecord reading = marker;
    reading.family = Family::kBloodTestValue;
    reading.value = value;
    reading.unit = rule.canonical_unit;
    result.events.push_back(std::move(reading));
    ++counts.values_kept;
  }
  return result;
}

std::string truncate_icd10(std::string_view code) {
  if (code.empty()) throw ValidationError("empty ICD-10 code");
  std::string compact;
  for (char c : code) {
    if (c != '.') compact.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  if (compact.empty() || !std::isalpha(static_cast<unsigned char>(compact[0]))) {
    throw ValidationError("ICD-10 code '" + std::string(code) +
                          "' must start with a letter");
  }
  for (char c : compact) {
    if (!std::isalnum(static_cast<unsigned char>(c))) {
      throw ValidationError("ICD-10 code '" + std::string(code) +
                            "' contains invalid characters");
    }
  }
  return compact.substr(0, 4);
}

std::string truncate_bnf(std::string_view code, int length) {
  if (code.empty()) throw ValidationError("empty BNF code");
  if (length < 4 || length > 6) {
    throw ValidationError("BNF truncation length must be 4..6");
  }
  for (char c : code) {
    if (!std::isalnum(static_cast<unsigned char>(c))) {
      throw ValidationError("BNF code '" + std::string(code) +
                            "' is not alphanumeric");
    }
  }
  return std::string(code.substr(0, static_cast<std::size_t>(length)));
}

MergeResult merge_transfers(std::vector<AdmissionRow> rows) {
  MergeResult result;
  std::vector<AdmissionRow> valid;
  for (auto& row : rows) {
    if (row.discharge_day < row.admit_day) {
      result.rejected.push_back(std::move(row));
    } else {
      valid.push_back(std::move(row));
    }
  }
  std::stable_sort(valid.begin(), valid.end(), [](const auto& a, const auto& b) {
    if (a.subject_id != b.subject_id) return a.subject_id < b.subject_id;
    if (a.admit_day != b.admit_day) return a.admit_day < b.admit_day;
    return a.discharge_day < b.discharge_day;
  });

  auto keep_two = [](const std::vector<std::string>& dx) {
    return std::vector<std::string>(dx.begin(),
                                    dx.begin() + std::min<std::size_t>(2, dx.size()));
  };
  for (const auto& row : valid) {
    if (!result.stays.empty()) {
      HospitalStay& open = result.stays.back();
      if (open.subject_id == row.subject_id && row.admit_day <= open.discharge_day) {
        // Overlapping rows that end earlier do not move the diagnosis segment.
        if (row.discharge_day >= open.discharge_day) {
          open.discharge_day = row.discharge_day;
          open.diagnoses = keep_two(row.diagnoses);
        }
        continue;
      }
    }
    result.stays.push_back(
        {row.subject_id, row.admit_day, row.discharge_day, keep_two(row.diagnoses)});
  }
  return result;
}

std::int64_t length_of_stay(const HospitalStay& stay) {
  if (stay.discharge_day < stay.admit_day) {
    throw ValidationError("stay for " + stay.subject_id +
                          " has discharge before admission");
  }
  return stay.discharge_day - stay.admit_day;
}

std::vector<EventRecord> stays_to_events(const std::vector<HospitalStay>& stays) {
  std::vector<EventRecord> out;
  for (const auto& stay : stays) {
    for (const auto& dx : stay.diagnoses) {
      EventRecord e;
      e.subject_id = stay.subject_id;
      e.event_day = stay.discharge_day;
      e.family = Family::kHospitalisation;
      e.code = truncate_icd10(dx);
      out.push_back(std::move(e));
    }
  }
  return out;
}

}  // namespace ehrc
