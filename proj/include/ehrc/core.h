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

// Domain types shared by every stage: clinical events, outcome labels, the
// cohort container, and the outcome-labelling operations (history flags,
// index-date assignment, terminal-illness exclusion).

#ifndef EHRC_CORE_H_
#define EHRC_CORE_H_

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ehrc {

// Bad input data or arguments. The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Bad configuration (unknown keys, infeasible parameters). Exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Family {
  kHospitalisation,
  kPrescription,
  kBloodTestMarker,
  kBloodTestValue,
  kDemographic,
  kHistoryOfDisease,
};

inline constexpr int kNumFamilies = 6;

// Wire names used in the event file: HOSP, RX, LABM, LABV, DEMO, HIST.
std::string_view family_code(Family family);
Family parse_family(std::string_view code);

// Token prefix used by every encoder: h_, m_, t_, v_, d_, hist_.
std::string_view family_prefix(Family family);

// Demographic and history features do not vary over the observation year.
inline bool is_static(Family family) {
  return family == Family::kDemographic ||
         family == Family::kHistoryOfDisease;
}

struct EventRecord {
  std::string subject_id;
  std::int64_t event_day = 0;
  Family family = Family::kHospitalisation;
  std::string code;
  std::optional<double> value;
  std::optional<std::string> unit;

  // Throws ValidationError when an invariant is broken.
  void validate() const;
  std::string token() const;

  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

enum class OutcomeKind { kSuddenDeathComposite, kAllCauseMortality };
enum class LabelValue { kEvent, kControl };

std::string_view outcome_name(OutcomeKind kind);
OutcomeKind parse_outcome(std::string_view name);

struct OutcomeLabel {
  std::string subject_id;
  OutcomeKind outcome_kind = OutcomeKind::kSuddenDeathComposite;
  LabelValue label = LabelValue::kControl;
  std::int64_t index_day = 0;
  // Day of death or qualifying event; set for Event labels.
  std::optional<std::int64_t> event_day;

  bool is_event() const { return label == LabelValue::kEvent; }
  friend bool operator==(const OutcomeLabel&, const OutcomeLabel&) = default;
};

struct Exclusion {
  std::string subject_id;
  std::string reason;
  friend bool operator==(const Exclusion&, const Exclusion&) = default;
};

class Cohort {
 public:
  Cohort() = default;
  // Validates: every labelled subject has an event, no duplicate
  // (subject, outcome) labels, every event valid.
  Cohort(std::vector<EventRecord> events, std::vector<OutcomeLabel> labels);

  const std::vector<EventRecord>& events() const { return events_; }
  const std::vector<OutcomeLabel>& labels() const { return labels_; }

  // Labels of one outcome in stored order.
  std::vector<OutcomeLabel> labels_for(OutcomeKind kind) const;
  // Events grouped by subject, each group in stored order.
  std::map<std::string, std::vector<EventRecord>> events_by_subject() const;

  bool empty() const { return labels_.empty(); }

 private:
  std::vector<EventRecord> events_;
  std::vector<OutcomeLabel> labels_;
};

// The eleven major diseases tracked as history-of-disease flags.
const std::vector<std::string>& history_disease_names();

// disease name -> hospitalisation code prefixes.
using DiseaseCodeMap = std::map<std::string, std::vector<std::string>>;

// Emits one HistoryOfDisease event per (subject, disease) whose flag is set,
// pinned to the subject's index day. A flag is set when any hospitalisation
// on or before the index day starts with one of the disease's prefixes.
// Subjects without an index day are skipped.
std::vector<EventRecord> derive_history_flags(
    const std::vector<EventRecord>& events, const DiseaseCodeMap& disease_codes,
    const std::map<std::string, std::int64_t>& index_days);

// Raw per-subject outcome information prior to index-date assignment.
struct RawOutcome {
  std::string subject_id;
  bool is_event = false;
  std::optional<std::int64_t> event_day;  // required for events
  std::int64_t observation_start = 0;
  std::int64_t observation_end = 0;
  // Qualifying events (for controls): an index day is only valid when none
  // of these falls in (index_day, index_day + 180].
  std::vector<std::int64_t> qualifying_event_days;
};

inline constexpr std::int64_t kMaxIndexOffsetDays = 180;
inline constexpr std::int64_t kLookbackDays = 365;

struct IndexAssignment {
  std::vector<OutcomeLabel> labels;
  std::vector<Exclusion> excluded;
};

// Index day for an Event subject given a drawn offset in [0, 180].
std::int64_t event_index_day(std::int64_t event_day, std::int64_t offset);

// Events: index = event_day - U, U uniform on [0, 180]. Controls: index drawn
// uniformly from days in [start + 365, end - 180] whose following 180 days
// contain no qualifying event. Pure in (outcomes, kind, seed).
IndexAssignment assign_index_dates(const std::vector<RawOutcome>& outcomes,
                                   OutcomeKind kind, std::uint64_t seed);

struct FilterResult {
  Cohort cohort;
  std::vector<Exclusion> excluded;
};

// Drops SuddenDeathComposite event subjects with a terminal-illness code in
// the 365 days before the event day. AllCauseMortality passes through.
FilterResult filter_terminal_illness(const Cohort& cohort, OutcomeKind kind,
                                     const std::vector<std::string>& prefixes);

bool starts_with_any(std::string_view code,
                     const std::vector<std::string>& prefixes);

// Shortest decimal form that reads back to the same double.
std::string format_double(double v);

}  // namespace ehrc

#endif  // EHRC_CORE_H_
