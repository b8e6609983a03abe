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

// Cleaning of raw extracts into EventRecords: blood-test name/unit/range
// normalisation, ICD-10 and BNF truncation, and hospital-transfer merging.

#ifndef EHRC_INGEST_H_
#define EHRC_INGEST_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ehrc/core.h"

namespace ehrc {

struct LabCleaningRule {
  std::string canonical_name;
  std::string canonical_unit;
  std::vector<std::string> aliases;
  // unit -> multiplicative factor into canonical_unit.
  std::map<std::string, double> unit_conversions;
  double bio_min = 0.0;
  double bio_max = 0.0;

  void validate() const;
};

// Reads a JSON array of rules:
//   [{"name": "haemoglobin", "unit": "g/L", "aliases": ["hb", "hgb"],
//     "units": {"g/dL": 10}, "min": 30, "max": 250}, ...]
std::vector<LabCleaningRule> load_lab_rules(const std::string& path);
std::vector<LabCleaningRule> parse_lab_rules(std::string_view json_text);

struct RawLabRow {
  std::string subject_id;
  std::int64_t day = 0;
  std::string name;
  std::optional<double> value;
  std::string unit;
};

struct RuleCounts {
  std::size_t rows = 0;
  std::size_t values_kept = 0;
  std::size_t converted = 0;
  std::size_t out_of_range = 0;
  std::size_t unknown_unit = 0;
  std::size_t missing_value = 0;
  // Zero results kept as-is; they may encode missing data.
  std::size_t zero_values = 0;
};

struct CleaningReport {
  std::map<std::string, RuleCounts> per_rule;
  std::size_t unmatched_rows = 0;
  std::map<std::string, std::size_t> unmatched_names;
};

struct LabCleaningResult {
  std::vector<EventRecord> events;
  CleaningReport report;
};

inline constexpr std::string_view kOtherLabName = "other";

// Every row yields a BloodTestMarker event. Rows whose name matches a rule
// additionally yield a BloodTestValue in canonical units, unless the value is
// absent, the unit unknown, or the converted value outside [bio_min, bio_max].
LabCleaningResult clean_lab_rows(const std::vector<RawLabRow>& rows,
                                 const std::vector<LabCleaningRule>& rules);

// Letter plus the first three digits, dot removed: "I26.02" -> "I260".
std::string truncate_icd10(std::string_view code);
// First `length` characters (4 by default, 4..6 accepted).
std::string truncate_bnf(std::string_view code, int length = 4);

struct AdmissionRow {
  std::string subject_id;
  std::int64_t admit_day = 0;
  std::int64_t discharge_day = 0;
  std::vector<std::string> diagnoses;
};

struct HospitalStay {
  std::string subject_id;
  std::int64_t admit_day = 0;
  std::int64_t discharge_day = 0;
  // Primary and secondary diagnosis of the last segment of a transfer chain.
  std::vector<std::string> diagnoses;
  friend bool operator==(const HospitalStay&, const HospitalStay&) = default;
};

struct MergeResult {
  std::vector<HospitalStay> stays;
  std::vector<AdmissionRow> rejected;
};

// A transfer is an admission on or before the running discharge day of the
// previous stay; chains collapse into one stay.
MergeResult merge_transfers(std::vector<AdmissionRow> rows);

std::int64_t length_of_stay(const HospitalStay& stay);

// Hospitalisation events (truncated ICD-10 tokens) dated at discharge.
std::vector<EventRecord> stays_to_events(const std::vector<HospitalStay>& stays);

}  // namespace ehrc

#endif  // EHRC_INGEST_H_
