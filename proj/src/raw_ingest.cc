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

// Raw extract readers and the ingest stage that turns them into a cohort.

#include <algorithm>
#include <charconv>
#include <istream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ehrc/io.h"
#include "ehrc/pipeline.h"

namespace ehrc {
namespace {

using Rows = std::vector<std::pair<std::size_t, std::vector<std::string>>>;

// Header-checked rows with their line numbers.
Rows read_rows(std::istream& in, std::string_view header, std::string_view what) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(std::string(what) + ": empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) {
    throw ValidationError(std::string(what) + ": header must be '" + std::string(header) + "'");
  }
  const std::size_t width = split_csv_line(header).size();
  Rows out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != width) {
      throw ValidationError(std::string(what) + " line " + std::to_string(lineno) + ": expected " +
                            std::to_string(width) + " fields");
    }
    out.emplace_back(lineno, std::move(f));
  }
  return out;
}

template <typename T>
T number(const std::string& s, std::string_view what, std::size_t lineno) {
  T v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ValidationError("line " + std::to_string(lineno) + ": bad " + std::string(what) +
                          " '" + s + "'");
  }
  return v;
}

}  // namespace

std::vector<RawLabRow> read_lab_rows(std::istream& in) {
  std::vector<RawLabRow> out;
  for (const auto& [n, f] : read_rows(in, "subject_id,day,name,value,unit", "labs")) {
    RawLabRow r;
    r.subject_id = f[0];
    r.day = number<std::int64_t>(f[1], "day", n);
    r.name = f[2];
    if (!f[3].empty()) r.value = number<double>(f[3], "value", n);
    r.unit = f[4];
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<AdmissionRow> read_admission_rows(std::istream& in) {
  std::vector<AdmissionRow> out;
  for (const auto& [n, f] :
       read_rows(in, "subject_id,admit_day,discharge_day,diagnoses", "admissions")) {
    AdmissionRow r;
    r.subject_id = f[0];
    r.admit_day = number<std::int64_t>(f[1], "admit_day", n);
    r.discharge_day = number<std::int64_t>(f[2], "discharge_day", n);
    std::stringstream ss(f[3]);
    std::string code;
    while (std::getline(ss, code, ';')) {
      if (!code.empty()) r.diagnoses.push_back(code);
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RawExtract::Prescription> read_prescription_rows(std::istream& in) {
  std::vector<RawExtract::Prescription> out;
  for (const auto& [n, f] : read_rows(in, "subject_id,day,bnf_code", "prescriptions")) {
    if (f[2].empty()) throw ValidationError("line " + std::to_string(n) + ": empty bnf_code");
    out.push_back({f[0], number<std::int64_t>(f[1], "day", n), f[2]});
  }
  return out;
}

std::vector<RawExtract::Demographic> read_demographic_rows(std::istream& in) {
  std::vector<RawExtract::Demographic> out;
  for (const auto& [n, f] : read_rows(in, "subject_id,day,age,sex", "demographics")) {
    RawExtract::Demographic d;
    d.subject_id = f[0];
    d.day = number<std::int64_t>(f[1], "day", n);
    if (!f[2].empty()) d.age = number<double>(f[2], "age", n);
    d.sex = f[3];
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<RawOutcome> read_outcome_rows(std::istream& in) {
  std::vector<RawOutcome> out;
  for (const auto& [n, f] :
       read_rows(in, "subject_id,status,event_day,observation_start,observation_end",
                 "outcomes")) {
    RawOutcome o;
    o.subject_id = f[0];
    if (f[1] == "event") {
      o.is_event = true;
    } else if (f[1] != "control") {
      throw ValidationError("line " + std::to_string(n) + ": status must be event or control");
    }
    if (!f[2].empty()) o.event_day = number<std::int64_t>(f[2], "event_day", n);
    o.observation_start = number<std::int64_t>(f[3], "observation_start", n);
    o.observation_end = number<std::int64_t>(f[4], "observation_end", n);
    out.push_back(std::move(o));
  }
  return out;
}

DiseaseCodeMap parse_disease_codes(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("disease code map: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("disease code map must be a JSON object");
  DiseaseCodeMap out;
  for (const auto& [disease, prefixes] : j.items()) {
    if (!prefixes.is_array()) {
      throw ConfigError("disease code map: '" + disease + "' must map to a list");
    }
    for (const auto& p : prefixes) {
      if (!p.is_string()) throw ConfigError("disease code map: prefixes must be strings");
      out[disease].push_back(p.get<std::string>());
    }
  }
  return out;
}

IngestResult ingest_raw(const RawExtract& raw, const IngestOptions& options) {
  IngestResult result;
  std::vector<EventRecord> events;

  auto labs = clean_lab_rows(raw.labs, options.lab_rules);
  result.lab_report = std::move(labs.report);
  events = std::move(labs.events);

  auto merged = merge_transfers(raw.admissions);
  result.admissions_in = raw.admissions.size();
  result.stays_out = merged.stays.size();
  result.rejected_admissions = merged.rejected.size();
  for (auto& e : stays_to_events(merged.stays)) events.push_back(std::move(e));

  for (const auto& rx : raw.prescriptions) {
    events.push_back({rx.subject_id, rx.day, Family::kPrescription,
                      truncate_bnf(rx.code, options.bnf_length), std::nullopt, std::nullopt});
  }
  for (const auto& d : raw.demographics) {
    if (d.age) {
      events.push_back({d.subject_id, d.day, Family::kDemographic, "age", d.age, std::nullopt});
    }
    if (!d.sex.empty()) {
      events.push_back(
          {d.subject_id, d.day, Family::kDemographic, "sex_" + d.sex, std::nullopt, std::nullopt});
    }
  }

  auto assigned = assign_index_dates(raw.outcomes, options.outcome, options.seed);
  result.excluded = std::move(assigned.excluded);

  std::set<std::string> with_events;
  for (const auto& e : events) with_events.insert(e.subject_id);
  std::vector<OutcomeLabel> labels;
  std::map<std::string, std::int64_t> index_days;
  for (auto& l : assigned.labels) {
    if (!with_events.contains(l.subject_id)) {
      result.excluded.push_back({l.subject_id, "no events"});
      continue;
    }
    index_days[l.subject_id] = l.index_day;
    labels.push_back(std::move(l));
  }
  if (!options.disease_codes.empty()) {
    for (auto& e : derive_history_flags(events, options.disease_codes, index_days)) {
      events.push_back(std::move(e));
    }
  }
  std::stable_sort(events.begin(), events.end(), [](const EventRecord& a, const EventRecord& b) {
    if (a.subject_id != b.subject_id) return a.subject_id < b.subject_id;
    return a.event_day < b.event_day;
  });

  Cohort cohort(std::move(events), std::move(labels));
  if (options.outcome == OutcomeKind::kSuddenDeathComposite) {
    auto filtered = filter_terminal_illness(cohort, options.outcome, options.terminal_prefixes);
    cohort = std::move(filtered.cohort);
    for (auto& x : filtered.excluded) result.excluded.push_back(std::move(x));
  }
  result.cohort = std::move(cohort);
  return result;
}

std::string ingest_report_json(const IngestResult& r) {
  nlohmann::ordered_json j;
  j["subjects"] = r.cohort.labels().size();
  j["events"] = r.cohort.events().size();
  j["admissions_in"] = r.admissions_in;
  j["stays_out"] = r.stays_out;
  j["rejected_admissions"] = r.rejected_admissions;
  nlohmann::ordered_json labs = nlohmann::ordered_json::object();
  for (const auto& [name, c] : r.lab_report.per_rule) {
    labs[name] = {{"rows", c.rows},
                  {"values_kept", c.values_kept},
                  {"converted", c.converted},
                  {"out_of_range", c.out_of_range},
                  {"unknown_unit", c.unknown_unit},
                  {"missing_value", c.missing_value},
                  {"zero_values", c.zero_values}};
  }
  j["labs"] = labs;
  j["unmatched_lab_rows"] = r.lab_report.unmatched_rows;
  nlohmann::ordered_json ex = nlohmann::ordered_json::array();
  for (const auto& e : r.excluded) ex.push_back({{"subject_id", e.subject_id}, {"reason", e.reason}});
  j["excluded"] = ex;
  return j.dump(2) + "\n";
}

}  // namespace ehrc
