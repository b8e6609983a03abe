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

#include "ehrc/core.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <utility>

#include "ehrc/random.h"

namespace ehrc {

std::string_view family_code(Family family) {
  switch (family) {
    case Family::kHospitalisation: return "HOSP";
    case Family::kPrescription: return "RX";
    case Family::kBloodTestMarker: return "LABM";
    case Family::kBloodTestValue: return "LABV";
    case Family::kDemographic: return "DEMO";
    case Family::kHistoryOfDisease: return "HIST";
  }
  return "";
}

Family parse_family(std::string_view code) {
  for (int f = 0; f < kNumFamilies; ++f) {
    const auto family = static_cast<Family>(f);
    if (family_code(family) == code) return family;
  }
  throw ValidationError("unknown event family '" + std::string(code) + "'");
}

std::string_view family_prefix(Family family) {
  switch (family) {
    case Family::kHospitalisation: return "h_";
    case Family::kPrescription: return "m_";
    case Family::kBloodTestMarker: return "t_";
    case Family::kBloodTestValue: return "v_";
    case Family::kDemographic: return "d_";
    case Family::kHistoryOfDisease: return "hist_";
  }
  return "";
}

void EventRecord::validate() const {
  if (subject_id.empty()) throw ValidationError("event with empty subject_id");
  if (code.empty()) {
    throw ValidationError("event for subject " + subject_id +
                          " has an empty code");
  }
  const bool wants_value = family == Family::kBloodTestValue ||
                           (family == Family::kDemographic && code == "age");
  if (wants_value != value.has_value()) {
    throw ValidationError("event " + subject_id + "/" + code + " (" +
                          std::string(family_code(family)) + ")" +
                          (wants_value ? " requires" : " must not carry") +
                          " a value");
  }
  if (value && !std::isfinite(*value)) {
    throw ValidationError("event " + subject_id + "/" + code +
                          " has a non-finite value");
  }
}

std::string EventRecord::token() const {
  return std::string(family_prefix(family)) + code;
}

std::string_view outcome_name(OutcomeKind kind) {
  return kind == OutcomeKind::kSuddenDeathComposite ? "sudden_death"
                                                    : "all_cause_mortality";
}

OutcomeKind parse_outcome(std::string_view name) {
  if (name == "sudden_death") return OutcomeKind::kSuddenDeathComposite;
  if (name == "all_cause_mortality") return OutcomeKind::kAllCauseMortality;
  throw ValidationError("unknown outcome kind '" + std::string(name) +
                        "' (expected sudden_death or all_cause_mortality)");
}

Cohort::Cohort(std::vector<EventRecord> events,
               std::vector<OutcomeLabel> labels)
    : events_(std::move(events)), labels_(std::move(labels)) {
  std::set<std::string> with_events;
  for (const auto& e : events_) {
    e.validate();
    with_events.insert(e.subject_id);
  }
  std::set<std::pair<std::string, OutcomeKind>> seen;
  for (const auto& l : labels_) {
    if (!seen.emplace(l.subject_id, l.outcome_kind).second) {
      throw ValidationError("duplicate label for subject " + l.subject_id +
                            " and outcome " +
                            std::string(outcome_name(l.outcome_kind)));
    }
    if (!with_events.contains(l.subject_id)) {
      throw ValidationError("labelled subject " + l.subject_id +
                            " has no events");
    }
  }
}

std::vector<OutcomeLabel> Cohort::labels_for(OutcomeKind kind) const {
  std::vector<OutcomeLabel> out;
  for (const auto& l : labels_) {
    if (l.outcome_kind == kind) out.push_back(l);
  }
  return out;
}

std::map<std::string, std::vector<EventRecord>> Cohort::events_by_subject()
    const {
  std::map<std::string, std::vector<EventRecord>> out;
  for (const auto& e : events_) out[e.subject_id].push_back(e);
  return out;
}

const std::vector<std::string>& history_disease_names() {
  static const std::vector<std::string> kNames = {
      "HeartFailure",
      "ChronicIschemicHeartDisease",
      "LiverDisease",
      "Seizures",
      "Stroke",
      "KidneyDisease",
      "PrimaryHypertension",
      "HypertensiveHeartDisease",
      "ChronicKidneyDisease",
      "Type1Diabetes",
      "Type2Diabetes",
  };
  return kNames;
}

bool starts_with_any(std::string_view code,
                     const std::vector<std::string>& prefixes) {
  return std::any_of(prefixes.begin(), prefixes.end(),
                     [&](const std::string& p) { return code.starts_with(p); });
}

std::vector<EventRecord> derive_history_flags(
    const std::vector<EventRecord>& events, const DiseaseCodeMap& disease_codes,
    const std::map<std::string, std::int64_t>& index_days) {
  const auto& known = history_disease_names();
  for (const auto& [disease, prefixes] : disease_codes) {
    if (std::find(known.begin(), known.end(), disease) == known.end()) {
      throw ConfigError("unknown disease key '" + disease + "'");
    }
    if (prefixes.empty()) {
      throw ConfigError("disease '" + disease + "' has no code prefixes");
    }
  }
  for (const auto& disease : known) {
    if (!disease_codes.contains(disease)) {
      throw ConfigError("disease '" + disease + "' missing from code map");
    }
  }

  std::map<std::string, std::set<std::string>> flagged;
  for (const auto& e : events) {
    if (e.family != Family::kHospitalisation) continue;
    const auto it = index_days.find(e.subject_id);
    if (it == index_days.end() || e.event_day > it->second) continue;
    for (const auto& [disease, prefixes] : disease_codes) {
      if (starts_with_any(e.code, prefixes)) {
        flagged[e.subject_id].insert(disease);
      }
    }
  }

  std::vector<EventRecord> out;
  for (const auto& [subject, diseases] : flagged) {
    // Keep the canonical disease order rather than alphabetical.
    for (const auto& disease : known) {
      if (!diseases.contains(disease)) continue;
      EventRecord e;
      e.subject_id = subject;
      e.event_day = index_days.at(subject);
      e.family = Family::kHistoryOfDisease;
      e.code = disease;
      out.push_back(std::move(e));
    }
  }
  return out;
}

std::int64_t event_index_day(std::int64_t event_day, std::int64_t offset) {
  if (offset < 0 || offset > kMaxIndexOffsetDays) {
    throw ValidationError("index offset outside [0, 180]");
  }
  return event_day - offset;
}

IndexAssignment assign_index_dates(const std::vector<RawOutcome>& outcomes,
                                   OutcomeKind kind, std::uint64_t seed) {
  IndexAssignment out;
  for (std::size_t n = 0; n < outcomes.size(); ++n) {
    const RawOutcome& raw = outcomes[n];
    Rng rng = make_rng(seed, {n});
    OutcomeLabel label;
    label.subject_id = raw.subject_id;
    label.outcome_kind = kind;
    if (raw.is_event) {
      if (!raw.event_day) {
        throw ValidationError("event subject " + raw.subject_id +
                              " has no event day");
      }
      label.label = LabelValue::kEvent;
      label.event_day = raw.event_day;
      label.index_day = event_index_day(
          *raw.event_day, uniform_int(rng, 0, kMaxIndexOffsetDays));
      out.labels.push_back(std::move(label));
      continue;
    }

    const std::int64_t lo = raw.observation_start + kLookbackDays;
    const std::int64_t hi = raw.observation_end - kMaxIndexOffsetDays;
    std::vector<std::int64_t> candidates;
    if (lo <= hi) {
      std::vector<std::int64_t> qualifying = raw.qualifying_event_days;
      std::sort(qualifying.begin(), qualifying.end());
      for (std::int64_t day = lo; day <= hi; ++day) {
        // Any qualifying event in (day, day + 180]?
        auto it = std::upper_bound(qualifying.begin(), qualifying.end(), day);
        if (it != qualifying.end() && *it <= day + kMaxIndexOffsetDays) {
          continue;
        }
        candidates.push_back(day);
      }
    }
    if (candidates.empty()) {
      out.excluded.push_back(
          {raw.subject_id, lo > hi ? "observation span shorter than 545 days"
                                   : "no event-free 180-day window"});
      continue;
    }
    label.label = LabelValue::kControl;
    label.index_day = candidates[static_cast<std::size_t>(uniform_int(
        rng, 0, static_cast<std::int64_t>(candidates.size()) - 1))];
    out.labels.push_back(std::move(label));
  }
  return out;
}

FilterResult filter_terminal_illness(const Cohort& cohort, OutcomeKind kind,
                                     const std::vector<std::string>& prefixes) {
  if (kind == OutcomeKind::kAllCauseMortality) return {cohort, {}};
  if (prefixes.empty()) {
    throw ValidationError(
        "terminal illness prefixes are required for sudden death cohorts");
  }

  std::map<std::string, std::int64_t> death_day;
  for (const auto& l : cohort.labels()) {
    if (l.outcome_kind == kind && l.is_event() && l.event_day) {
      death_day[l.subject_id] = *l.event_day;
    }
  }
  std::set<std::string> drop;
  for (const auto& e : cohort.events()) {
    const auto it = death_day.find(e.subject_id);
    if (it == death_day.end() || drop.contains(e.subject_id)) continue;
    if (e.event_day < it->second - kLookbackDays || e.event_day >= it->second) {
      continue;
    }
    if (starts_with_any(e.code, prefixes)) drop.insert(e.subject_id);
  }

  FilterResult result;
  std::vector<OutcomeLabel> labels;
  std::set<std::string> kept_subjects;
  for (const auto& l : cohort.labels()) {
    if (l.outcome_kind == kind && drop.contains(l.subject_id)) continue;
    kept_subjects.insert(l.subject_id);
    labels.push_back(l);
  }
  for (const auto& subject : drop) {
    result.excluded.push_back(
        {subject, "terminal illness code in the year before death"});
  }
  std::vector<EventRecord> events;
  for (const auto& e : cohort.events()) {
    if (!drop.contains(e.subject_id) || kept_subjects.contains(e.subject_id)) {
      events.push_back(e);
    }
  }
  result.cohort = Cohort(std::move(events), std::move(labels));
  return result;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace ehrc
