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

#include "ehrc/io.h"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace ehrc {
namespace {

std::string where(std::size_t lineno) { return "line " + std::to_string(lineno) + ": "; }

void check_field(std::string_view f, std::string_view what) {
  if (f.find_first_of(",\"\n\r") != std::string_view::npos) {
    throw ValidationError(std::string(what) + " '" + std::string(f) +
                          "' contains a comma, quote or line break");
  }
}

std::int64_t parse_int(std::string_view s, std::string_view what, std::size_t lineno) {
  std::int64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ValidationError(where(lineno) + "bad " + std::string(what) + " '" + std::string(s) + "'");
  }
  return v;
}

double parse_real(std::string_view s, std::string_view what, std::size_t lineno) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ValidationError(where(lineno) + "bad " + std::string(what) + " '" + std::string(s) + "'");
  }
  return v;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

void expect_header(std::istream& in, std::string_view header, std::string_view what) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(std::string(what) + ": empty input");
  strip_cr(line);
  if (line != header) {
    throw ValidationError(std::string(what) + ": header must be '" + std::string(header) +
                          "', got '" + line + "'");
  }
}

}  // namespace

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      return out;
    }
    out.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

void write_events(std::ostream& out, const std::vector<EventRecord>& events) {
  out << kEventHeader << '\n';
  for (const auto& e : events) {
    e.validate();
    check_field(e.subject_id, "subject_id");
    check_field(e.code, "code");
    if (e.unit) check_field(*e.unit, "unit");
    out << e.subject_id << ',' << e.event_day << ',' << family_code(e.family) << ',' << e.code
        << ',' << (e.value ? format_double(*e.value) : "") << ',' << e.unit.value_or("") << '\n';
  }
}

std::vector<EventRecord> read_events(std::istream& in) {
  expect_header(in, kEventHeader, "event file");
  std::vector<EventRecord> out;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) {
      throw ValidationError(where(lineno) + "expected 6 fields, got " + std::to_string(f.size()));
    }
    EventRecord e;
    e.subject_id = f[0];
    e.event_day = parse_int(f[1], "event_day", lineno);
    try {
      e.family = parse_family(f[2]);
      e.code = f[3];
      if (!f[4].empty()) e.value = parse_real(f[4], "value", lineno);
      if (!f[5].empty()) e.unit = f[5];
      e.validate();
    } catch (const ValidationError& err) {
      const std::string msg = err.what();
      if (msg.rfind("line ", 0) == 0) throw;
      throw ValidationError(where(lineno) + msg);
    }
    out.push_back(std::move(e));
  }
  return out;
}

void write_labels(std::ostream& out, const std::vector<OutcomeLabel>& labels) {
  out << kLabelHeader << '\n';
  for (const auto& l : labels) {
    check_field(l.subject_id, "subject_id");
    out << l.subject_id << ',' << outcome_name(l.outcome_kind) << ','
        << (l.is_event() ? "event" : "control") << ',' << l.index_day << ',';
    if (l.event_day) out << *l.event_day;
    out << '\n';
  }
}

std::vector<OutcomeLabel> read_labels(std::istream& in) {
  expect_header(in, kLabelHeader, "label file");
  std::vector<OutcomeLabel> out;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 5) {
      throw ValidationError(where(lineno) + "expected 5 fields, got " + std::to_string(f.size()));
    }
    OutcomeLabel l;
    l.subject_id = f[0];
    if (l.subject_id.empty()) throw ValidationError(where(lineno) + "empty subject_id");
    l.outcome_kind = parse_outcome(f[1]);
    if (f[2] == "event") {
      l.label = LabelValue::kEvent;
    } else if (f[2] == "control") {
      l.label = LabelValue::kControl;
    } else {
      throw ValidationError(where(lineno) + "label must be 'event' or 'control'");
    }
    l.index_day = parse_int(f[3], "index_day", lineno);
    if (!f[4].empty()) l.event_day = parse_int(f[4], "event_day", lineno);
    if (l.is_event() && !l.event_day) {
      throw ValidationError(where(lineno) + "event label without an event_day");
    }
    out.push_back(std::move(l));
  }
  return out;
}

void write_scores(std::ostream& out, const std::vector<std::string>& subjects,
                  const std::vector<double>& scores) {
  if (subjects.size() != scores.size()) throw ValidationError("subject and score counts differ");
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    out << subjects[i] << ' ' << format_double(scores[i]) << '\n';
  }
}

SubjectScores read_scores(std::istream& in) {
  SubjectScores out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string id;
    std::string score;
    std::string extra;
    if (!(ss >> id >> score) || (ss >> extra)) {
      throw ValidationError(where(lineno) + "expected 'subject_id score'");
    }
    const double v = parse_real(score, "score", lineno);
    if (!out.emplace(id, v).second) {
      throw ValidationError(where(lineno) + "duplicate subject " + id);
    }
  }
  return out;
}

std::map<std::string, int> ClusterAssignment::by_token() const {
  std::map<std::string, int> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) out[tokens[i]] = labels[i];
  return out;
}

ClusterAssignment read_clusters(std::istream& in) {
  ClusterAssignment out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string token;
    std::string id;
    std::string extra;
    if (!(ss >> token >> id) || (ss >> extra)) {
      throw ValidationError(where(lineno) + "expected 'token cluster_id'");
    }
    out.tokens.push_back(token);
    out.labels.push_back(static_cast<int>(parse_int(id, "cluster id", lineno)));
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Cohort load_cohort(const std::filesystem::path& events, const std::filesystem::path& labels) {
  auto with_path = [](const std::filesystem::path& p, auto&& fn) {
    std::istringstream in(read_text_file(p));
    try {
      return fn(in);
    } catch (const ValidationError& e) {
      throw ValidationError(p.string() + ": " + e.what());
    }
  };
  auto ev = with_path(events, [](std::istream& in) { return read_events(in); });
  auto lb = with_path(labels, [](std::istream& in) { return read_labels(in); });
  return Cohort(std::move(ev), std::move(lb));
}

}  // namespace ehrc
