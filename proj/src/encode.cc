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

#include "ehrc/encode.h"

#include <algorithm>
#include <charconv>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <tuple>

namespace ehrc {
namespace {

struct StaticValue {
  std::int64_t day = 0;
  double value = 0.0;
};

double static_value(const EventRecord& e) { return e.value.value_or(1.0); }

// Latest static event per token on or before the index day.
std::map<std::string, StaticValue> latest_static(
    const std::vector<EventRecord>& events, std::int64_t index_day) {
  std::map<std::string, StaticValue> out;
  for (const auto& e : events) {
    if (!is_static(e.family) || e.event_day > index_day) continue;
    auto [it, inserted] =
        out.emplace(e.token(), StaticValue{e.event_day, static_value(e)});
    if (!inserted && e.event_day >= it->second.day) {
      it->second = {e.event_day, static_value(e)};
    }
  }
  return out;
}

}  // namespace

std::optional<Family> family_of_token(std::string_view token) {
  if (token.starts_with("hist_")) return Family::kHistoryOfDisease;
  if (token.starts_with("h_")) return Family::kHospitalisation;
  if (token.starts_with("m_")) return Family::kPrescription;
  if (token.starts_with("t_")) return Family::kBloodTestMarker;
  if (token.starts_with("v_")) return Family::kBloodTestValue;
  if (token.starts_with("d_")) return Family::kDemographic;
  return std::nullopt;
}

FeatureVocabulary::FeatureVocabulary(std::vector<std::string> tokens)
    : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) {
      throw ValidationError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
    families_.push_back(family_of_token(tokens_[i]));
    if (tokens_[i] == kUnkToken) {
      if (i + 1 != tokens_.size()) {
        throw ValidationError("[UNK] must be the last vocabulary token");
      }
      unk_ = i;
    }
  }
}

std::optional<std::size_t> FeatureVocabulary::find(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t FeatureVocabulary::unk_index() const {
  if (!unk_) throw ValidationError("vocabulary has no [UNK] slot");
  return *unk_;
}

std::size_t FeatureVocabulary::index_or_unk(std::string_view token) const {
  if (auto i = find(token)) return *i;
  return unk_index();
}

FeatureVocabulary FeatureVocabulary::without_unk() const {
  if (!unk_) return *this;
  return FeatureVocabulary(
      std::vector<std::string>(tokens_.begin(), tokens_.end() - 1));
}

std::optional<int> bin_index(std::int64_t index_day, std::int64_t event_day) {
  const std::int64_t delta = index_day - event_day;
  if (delta < 0 || delta >= kLookbackDays) return std::nullopt;
  return std::min<int>(static_cast<int>(delta / kBinWidthDays), kNumTimeBins - 1);
}

FeatureVocabulary build_vocabulary(const Cohort& cohort, OutcomeKind kind,
                                   bool for_language,
                                   const std::set<std::string>* subjects) {
  std::map<std::string, std::int64_t> index_days;
  for (const auto& l : cohort.labels_for(kind)) {
    if (subjects == nullptr || subjects->contains(l.subject_id)) {
      index_days.emplace(l.subject_id, l.index_day);
    }
  }
  if (index_days.empty()) throw ValidationError("empty training split");

  std::set<std::pair<int, std::string>> ordered;
  for (const auto& e : cohort.events()) {
    const auto it = index_days.find(e.subject_id);
    if (it == index_days.end()) continue;
    const bool encodable = is_static(e.family) ? e.event_day <= it->second
                                               : bin_index(it->second, e.event_day).has_value();
    if (encodable) ordered.emplace(static_cast<int>(e.family), e.token());
  }
  if (ordered.empty()) throw ValidationError("empty training split");

  std::vector<std::string> tokens;
  tokens.reserve(ordered.size() + 1);
  for (const auto& [family, token] : ordered) tokens.push_back(token);
  if (for_language) tokens.emplace_back(kUnkToken);
  return FeatureVocabulary(std::move(tokens));
}

SparseTemporalTensor::SparseTemporalTensor(std::size_t n_subjects,
                                           std::size_t n_features,
                                           std::size_t n_time,
                                           std::vector<TensorEntry> entries)
    : n_subjects_(n_subjects),
      n_features_(n_features),
      n_time_(n_time),
      entries_(std::move(entries)) {
  auto key = [](const TensorEntry& e) { return std::tie(e.i, e.j, e.k); };
  std::sort(entries_.begin(), entries_.end(),
            [&](const auto& a, const auto& b) { return key(a) < key(b); });
  for (std::size_t n = 0; n < entries_.size(); ++n) {
    const auto& e = entries_[n];
    if (e.i < 0 || static_cast<std::size_t>(e.i) >= n_subjects_ || e.j < 0 ||
        static_cast<std::size_t>(e.j) >= n_features_ || e.k < 0 ||
        static_cast<std::size_t>(e.k) >= n_time_) {
      throw ValidationError("tensor entry out of range");
    }
    if (!(e.v >= 0.0)) throw ValidationError("tensor entry with negative value");
    if (n > 0 && key(entries_[n - 1]) == key(e)) {
      throw ValidationError("duplicate tensor entry");
    }
  }
}

double SparseTemporalTensor::sparsity() const {
  const double cells = static_cast<double>(n_subjects_) *
                       static_cast<double>(n_features_) *
                       static_cast<double>(n_time_);
  if (cells == 0.0) return 1.0;
  std::size_t nonzero = 0;
  for (const auto& e : entries_) nonzero += e.v != 0.0;
  return 1.0 - static_cast<double>(nonzero) / cells;
}

void SparseTemporalTensor::write(std::ostream& out) const {
  out << n_subjects_ << ' ' << n_features_ << ' ' << n_time_ << '\n';
  for (const auto& e : entries_) {
    out << e.i << ' ' << e.j << ' ' << e.k << ' ' << format_double(e.v) << '\n';
  }
}

SparseTemporalTensor SparseTemporalTensor::read(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("tensor file: missing header");
  std::istringstream header(line);
  std::size_t n_subjects = 0;
  std::size_t n_features = 0;
  std::size_t n_time = 0;
  if (!(header >> n_subjects >> n_features >> n_time)) {
    throw ValidationError("tensor file: malformed header");
  }
  std::vector<TensorEntry> entries;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    TensorEntry e;
    std::string value;
    if (!(row >> e.i >> e.j >> e.k >> value)) {
      throw ValidationError("tensor file: malformed entry '" + line + "'");
    }
    auto res = std::from_chars(value.data(), value.data() + value.size(), e.v);
    if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
      throw ValidationError("tensor file: bad value '" + value + "'");
    }
    entries.push_back(e);
  }
  return SparseTemporalTensor(n_subjects, n_features, n_time, std::move(entries));
}

EncodedTensor encode_sparse(const Cohort& cohort, OutcomeKind kind,
                            const FeatureVocabulary& vocab) {
  EncodedTensor out;
  const auto labels = cohort.labels_for(kind);
  const auto by_subject = cohort.events_by_subject();
  std::vector<TensorEntry> entries;

  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& label = labels[i];
    out.subject_ids.push_back(label.subject_id);
    const auto it = by_subject.find(label.subject_id);
    if (it == by_subject.end()) continue;

    // (feature, bin) -> (sum, count)
    std::map<std::pair<std::int32_t, std::int32_t>, std::pair<double, int>> cells;
    for (const auto& e : it->second) {
      if (is_static(e.family)) continue;
      const auto bin = bin_index(label.index_day, e.event_day);
      if (!bin) continue;
      const auto j = vocab.find(e.token());
      if (!j || (vocab.has_unk() && *j == vocab.unk_index())) {
        ++out.dropped_tokens;
        continue;
      }
      auto& cell = cells[{static_cast<std::int32_t>(*j), *bin}];
      cell.first += e.family == Family::kBloodTestValue ? *e.value : 1.0;
      cell.second += 1;
    }
    for (const auto& [key, acc] : cells) {
      const auto j = static_cast<std::size_t>(key.first);
      const bool mean = vocab.family(j) == Family::kBloodTestValue;
      const double v = mean ? acc.first / acc.second : acc.first;
      if (v != 0.0) {
        entries.push_back({static_cast<std::int32_t>(i), key.first, key.second, v});
      }
    }
    for (const auto& [token, sv] : latest_static(it->second, label.index_day)) {
      const auto j = vocab.find(token);
      if (!j) {
        ++out.dropped_tokens;
        continue;
      }
      if (sv.value == 0.0) continue;
      for (int k = 0; k < kNumTimeBins; ++k) {
        entries.push_back({static_cast<std::int32_t>(i),
                           static_cast<std::int32_t>(*j), k, sv.value});
      }
    }
  }
  out.tensor = SparseTemporalTensor(labels.size(), vocab.feature_count(),
                                    kNumTimeBins, std::move(entries));
  return out;
}

std::size_t SentenceDoc::event_token_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < suffix_start && i < tokens.size(); ++i) {
    n += !is_segment_token(tokens[i]);
  }
  return n;
}

std::string segment_token(int bin) { return "segment_" + std::to_string(bin); }

bool is_segment_token(std::string_view token) {
  return token.starts_with("segment_");
}

SentenceDoc encode_sentence(const std::vector<EventRecord>& subject_events,
                            std::int64_t index_day) {
  std::vector<std::vector<std::pair<int, std::string>>> bins(kNumTimeBins);
  for (const auto& e : subject_events) {
    if (is_static(e.family) || e.family == Family::kBloodTestValue) continue;
    if (const auto bin = bin_index(index_day, e.event_day)) {
      bins[static_cast<std::size_t>(*bin)].emplace_back(static_cast<int>(e.family),
                                                        e.token());
    }
  }
  SentenceDoc doc;
  for (int k = 0; k < kNumTimeBins; ++k) {
    auto& events = bins[static_cast<std::size_t>(k)];
    if (events.empty()) continue;
    std::sort(events.begin(), events.end());
    doc.tokens.push_back(segment_token(k));
    for (auto& [family, token] : events) doc.tokens.push_back(std::move(token));
  }
  doc.suffix_start = doc.tokens.size();

  std::vector<std::string> sex;
  std::vector<std::string> age;
  std::vector<std::string> history;
  for (const auto& [token, sv] : latest_static(subject_events, index_day)) {
    if (sv.value == 0.0) continue;
    if (token.starts_with("hist_")) {
      history.push_back(token);
    } else if (token == "d_age") {
      age.push_back(token);
    } else {
      sex.push_back(token);
    }
  }
  for (auto* part : {&sex, &age, &history}) {
    doc.tokens.insert(doc.tokens.end(), part->begin(), part->end());
  }
  return doc;
}

std::vector<double> bow_vectorize(const SentenceDoc& doc,
                                  const FeatureVocabulary& vocab,
                                  BowOptions options) {
  std::vector<double> counts(vocab.size(), 0.0);
  for (const auto& token : doc.tokens) {
    if (!options.include_segments && is_segment_token(token)) continue;
    counts[vocab.index_or_unk(token)] += 1.0;
  }
  return counts;
}

std::vector<std::int64_t> int_vectorize(const SentenceDoc& doc,
                                        const FeatureVocabulary& vocab,
                                        std::size_t max_len) {
  if (max_len < 1) throw ValidationError("max_len must be at least 1");
  std::vector<std::int64_t> out(max_len, static_cast<std::int64_t>(vocab.pad_index()));
  const std::size_t n = std::min(max_len, doc.tokens.size());
  for (std::size_t t = 0; t < n; ++t) {
    out[t] = static_cast<std::int64_t>(vocab.index_or_unk(doc.tokens[t]));
  }
  return out;
}

Eigen::MatrixXd collapse_time(const SparseTemporalTensor& tensor,
                              const FeatureVocabulary& vocab) {
  if (vocab.feature_count() != tensor.n_features()) {
    throw ValidationError("vocabulary does not match tensor feature count");
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(tensor.n_subjects()),
      static_cast<Eigen::Index>(tensor.n_features()));
  for (const auto& e : tensor.entries()) {
    const auto family = vocab.family(static_cast<std::size_t>(e.j));
    if (family && is_static(*family)) {
      if (e.k == 0) out(e.i, e.j) = e.v;
    } else {
      out(e.i, e.j) += e.v;
    }
  }
  return out;
}

std::vector<Eigen::MatrixXd> tensor_to_steps(const SparseTemporalTensor& tensor) {
  const auto n_time = tensor.n_time();
  std::vector<Eigen::MatrixXd> steps(
      n_time, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(tensor.n_subjects()),
                                    static_cast<Eigen::Index>(tensor.n_features())));
  for (const auto& e : tensor.entries()) {
    steps[n_time - 1 - static_cast<std::size_t>(e.k)](e.i, e.j) = e.v;
  }
  return steps;
}

void write_vocabulary(std::ostream& out, const FeatureVocabulary& vocab) {
  for (const auto& token : vocab.tokens()) out << token << '\n';
}

FeatureVocabulary read_vocabulary(std::istream& in) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw ValidationError("vocabulary file has an empty line");
    tokens.push_back(line);
  }
  return FeatureVocabulary(std::move(tokens));
}

}  // namespace ehrc
