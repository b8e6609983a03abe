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

// Text formats shared by the command line tools: event and label CSVs,
// per-subject score files, cluster assignment files.

#ifndef EHRC_IO_H_
#define EHRC_IO_H_

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ehrc/core.h"

namespace ehrc {

inline constexpr std::string_view kEventHeader = "subject_id,event_day,family,code,value,unit";
inline constexpr std::string_view kLabelHeader = "subject_id,outcome,label,index_day,event_day";

// Fields must not contain commas, quotes or line breaks.
void write_events(std::ostream& out, const std::vector<EventRecord>& events);
std::vector<EventRecord> read_events(std::istream& in);

void write_labels(std::ostream& out, const std::vector<OutcomeLabel>& labels);
std::vector<OutcomeLabel> read_labels(std::istream& in);

// Splits on commas; no quoting. Header rows are checked by the callers.
std::vector<std::string> split_csv_line(std::string_view line);

// "subject_id score" per line.
using SubjectScores = std::map<std::string, double>;
void write_scores(std::ostream& out, const std::vector<std::string>& subjects,
                  const std::vector<double>& scores);
SubjectScores read_scores(std::istream& in);

// "token cluster_id" per line, in vocabulary order.
struct ClusterAssignment {
  std::vector<std::string> tokens;
  std::vector<int> labels;
  std::map<std::string, int> by_token() const;
};
ClusterAssignment read_clusters(std::istream& in);

// Whole-file helpers that name the path in their errors.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);
Cohort load_cohort(const std::filesystem::path& events, const std::filesystem::path& labels);

}  // namespace ehrc

#endif  // EHRC_IO_H_
