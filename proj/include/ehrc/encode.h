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

// Vocabularies and the two cohort representations: the sparse temporal
// tensor (subject, feature, time-bin, value) and per-subject sentences with
// their bag-of-words and integer vectorisations.

#ifndef EHRC_ENCODE_H_
#define EHRC_ENCODE_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "ehrc/core.h"

namespace ehrc {

inline constexpr int kNumTimeBins = 7;
inline constexpr int kBinWidthDays = 60;
inline constexpr int kDefaultMaxLen = 209;
inline constexpr std::string_view kUnkToken = "[UNK]";

// Family of a feature token from its prefix; nullopt for [UNK] and
// segment markers.
std::optional<Family> family_of_token(std::string_view token);

class FeatureVocabulary {
 public:
  FeatureVocabulary() = default;
  // Tokens are kept in the given order; duplicates are rejected. [UNK], if
  // present, must be the last token.
  explicit FeatureVocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  // Count of real features, i.e. size() minus the [UNK] slot.
  std::size_t feature_count() const { return tokens_.size() - (has_unk() ? 1 : 0); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(std::size_t i) const { return tokens_[i]; }
  std::optional<Family> family(std::size_t i) const { return families_[i]; }
  std::optional<std::size_t> find(std::string_view token) const;
  bool has_unk() const { return unk_.has_value(); }
  std::size_t unk_index() const;
  // Reserved padding index for integer encoding: one past the last token.
  std::size_t pad_index() const { return tokens_.size(); }
  // Index, falling back to [UNK] for unseen tokens.
  std::size_t index_or_unk(std::string_view token) const;
  // The same vocabulary without the [UNK] slot.
  FeatureVocabulary without_unk() const;

  friend bool operator==(const FeatureVocabulary& a, const FeatureVocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::optional<Family>> families_;
  std::unordered_map<std::string, std::size_t> index_;
  std::optional<std::size_t> unk_;
};

// Time bin for an event relative to the index day: floor(delta / 60) for
// delta in [0, 364]; nullopt for future events or events a year or more back.
std::optional<int> bin_index(std::int64_t index_day, std::int64_t event_day);

// Unique encodable tokens of the labelled subjects (optionally restricted to
// `subjects`), ordered by family then token; [UNK] appended for language use.
FeatureVocabulary build_vocabulary(const Cohort& cohort, OutcomeKind kind,
                                   bool for_language,
                                   const std::set<std::string>* subjects = nullptr);

struct TensorEntry {
  std::int32_t i = 0;
  std::int32_t j = 0;
  std::int32_t k = 0;
  double v = 0.0;
  friend bool operator==(const TensorEntry&, const TensorEntry&) = default;
};

class SparseTemporalTensor {
 public:
  SparseTemporalTensor() = default;
  // Entries are sorted by (i, j, k); duplicates or out-of-range indices throw.
  SparseTemporalTensor(std::size_t n_subjects, std::size_t n_features,
                       std::size_t n_time, std::vector<TensorEntry> entries);

  std::size_t n_subjects() const { return n_subjects_; }
  std::size_t n_features() const { return n_features_; }
  std::size_t n_time() const { return n_time_; }
  const std::vector<TensorEntry>& entries() const { return entries_; }
  double sparsity() const;

  // Header "n_subjects n_features n_time", then "i j k v" per entry with v in
  // shortest round-trip decimal form.
  void write(std::ostream& out) const;
  static SparseTemporalTensor read(std::istream& in);

  friend bool operator==(const SparseTemporalTensor&,
                         const SparseTemporalTensor&) = default;

 private:
  std::size_t n_subjects_ = 0;
  std::size_t n_features_ = 0;
  std::size_t n_time_ = kNumTimeBins;
  std::vector<TensorEntry> entries_;
};

struct EncodedTensor {
  SparseTemporalTensor tensor;
  std::vector<std::string> subject_ids;  // row i -> subject
  std::size_t dropped_tokens = 0;        // events whose token is not in vocab
};

// Dynamic features: event counts per bin (blood-test values: mean value per
// bin). Static features: latest value on or before index, in every bin.
// Rows follow the label order of `kind`.
EncodedTensor encode_sparse(const Cohort& cohort, OutcomeKind kind,
                            const FeatureVocabulary& vocab);

struct SentenceDoc {
  std::vector<std::string> tokens;
  std::size_t suffix_start = 0;

  std::size_t event_token_count() const;
};

std::string segment_token(int bin);
bool is_segment_token(std::string_view token);

// [segment_0 <bin 0 events> segment_1 ...] then sex token(s), d_age, hist_*.
// Blood-test values carry no sentence token. Only bins with events get a
// segment marker.
SentenceDoc encode_sentence(const std::vector<EventRecord>& subject_events,
                            std::int64_t index_day);

struct BowOptions {
  bool include_segments = false;
};

std::vector<double> bow_vectorize(const SentenceDoc& doc,
                                  const FeatureVocabulary& vocab,
                                  BowOptions options = {});

// Keeps the leading (most recent) max_len tokens; right-pads with pad_index().
std::vector<std::int64_t> int_vectorize(const SentenceDoc& doc,
                                        const FeatureVocabulary& vocab,
                                        std::size_t max_len = kDefaultMaxLen);

// subjects x features: dynamic features summed over bins; static features
// take bin 0 (the most recent).
Eigen::MatrixXd collapse_time(const SparseTemporalTensor& tensor,
                              const FeatureVocabulary& vocab);

// Dense time-major view used by the models: steps[t] is subjects x features
// for bin (n_time - 1 - t), so sequences run oldest to most recent.
std::vector<Eigen::MatrixXd> tensor_to_steps(const SparseTemporalTensor& tensor);

// Vocabulary file: one token per line, line number = index.
void write_vocabulary(std::ostream& out, const FeatureVocabulary& vocab);
FeatureVocabulary read_vocabulary(std::istream& in);

}  // namespace ehrc

#endif  // EHRC_ENCODE_H_
