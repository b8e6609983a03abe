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

// Brute-force references and hand-checkable fixtures shared by the unit
// tests and the acceptance binary.

#ifndef EHRC_TESTS_ORACLES_H_
#define EHRC_TESTS_ORACLES_H_

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ehrc/cocluster.h"
#include "ehrc/encode.h"
#include "ehrc/interpret.h"
#include "ehrc/random.h"

namespace ehrc::testing {

inline EventRecord ev(const std::string& s, std::int64_t day, Family f, const std::string& code,
                      std::optional<double> v = std::nullopt) {
  return {s, day, f, code, v, std::nullopt};
}

// Random cohort with every family, values for blood tests and age.
inline Cohort random_cohort(std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<EventRecord> events;
  std::vector<OutcomeLabel> labels;
  for (std::size_t s = 0; s < n; ++s) {
    const std::string id = "s" + std::to_string(s);
    const std::int64_t index = 1000;
    labels.push_back({id, OutcomeKind::kSuddenDeathComposite,
                      s % 3 ? LabelValue::kControl : LabelValue::kEvent, index,
                      s % 3 ? std::nullopt : std::optional<std::int64_t>(1100)});
    const auto n_ev = uniform_int(rng, 1, 40);
    for (int k = 0; k < n_ev; ++k) {
      const auto day = uniform_int(rng, 500, 1100);
      const auto c = std::to_string(uniform_int(rng, 0, 5));
      switch (uniform_int(rng, 0, 4)) {
        case 0: events.push_back(ev(id, day, Family::kHospitalisation, "I5" + c)); break;
        case 1: events.push_back(ev(id, day, Family::kPrescription, "020" + c)); break;
        case 2: events.push_back(ev(id, day, Family::kBloodTestMarker, "lab" + c)); break;
        case 3:
          events.push_back(ev(id, day, Family::kBloodTestValue, "lab" + c,
                              std::round(uniform01(rng) * 100.0) / 4.0));
          break;
        default: events.push_back(ev(id, day, Family::kDemographic, "age", 40.0 + k)); break;
      }
    }
    if (s % 2) events.push_back(ev(id, 10, Family::kDemographic, "sex_M"));
    if (s % 5 == 0) events.push_back(ev(id, index, Family::kHistoryOfDisease, "Stroke"));
  }
  return Cohort(std::move(events), std::move(labels));
}

// Subject x feature matrix counted straight from the event list.
inline Eigen::MatrixXd collapse_oracle(const Cohort& cohort, OutcomeKind kind,
                                       const FeatureVocabulary& vocab) {
  const auto labels = cohort.labels_for(kind);
  Eigen::MatrixXd want = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()),
                                               static_cast<Eigen::Index>(vocab.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& l = labels[i];
    // Dynamic: per (feature, bin) sum and count.
    std::map<std::pair<std::size_t, std::int64_t>, std::pair<double, int>> cell;
    std::map<std::size_t, std::pair<std::int64_t, double>> latest;
    for (const auto& e : cohort.events()) {
      if (e.subject_id != l.subject_id) continue;
      const auto jj = vocab.find(e.token());
      if (!jj) continue;
      const std::size_t j = *jj;
      const std::int64_t delta = l.index_day - e.event_day;
      if (e.family == Family::kDemographic || e.family == Family::kHistoryOfDisease) {
        if (delta < 0) continue;
        const double v = e.value.value_or(1.0);
        auto it = latest.find(j);
        if (it == latest.end() || e.event_day >= it->second.first) latest[j] = {e.event_day, v};
        continue;
      }
      if (delta < 0 || delta > 364) continue;
      const std::int64_t bin = std::min<std::int64_t>(delta / 60, 6);
      auto& c = cell[{j, bin}];
      c.first += e.family == Family::kBloodTestValue ? *e.value : 1.0;
      c.second += 1;
    }
    for (const auto& [key, c] : cell) {
      const bool mean = vocab.family(key.first) == Family::kBloodTestValue;
      want(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(key.first)) +=
          mean ? c.first / c.second : c.first;
    }
    for (const auto& [j, dv] : latest) {
      want(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = dv.second;
    }
  }
  return want;
}

// Block sums recomputed cell by cell.
inline bool block_conditions_oracle(const Eigen::MatrixXd& a, const CoClusterModel& m) {
  Eigen::MatrixXd w = a;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const double r = a.row(i).sum();
      const double c = a.col(j).sum();
      w(i, j) = (r > 0 && c > 0) ? a(i, j) / std::sqrt(r * c) : 0.0;
    }
  }
  for (Eigen::Index f = 0; f < a.cols(); ++f) {
    const int own = m.feature_labels[f];
    if (own == m.k) continue;
    std::vector<double> to(m.k, 0.0);
    for (Eigen::Index p = 0; p < a.rows(); ++p) {
      if (m.patient_labels[p] < m.k) to[m.patient_labels[p]] += w(p, f);
    }
    for (double t : to) {
      if (to[own] < t - 1e-12) return false;
    }
  }
  for (Eigen::Index p = 0; p < a.rows(); ++p) {
    const int own = m.patient_labels[p];
    if (own == m.k) continue;
    std::vector<double> to(m.k, 0.0);
    for (Eigen::Index f = 0; f < a.cols(); ++f) {
      if (m.feature_labels[f] < m.k) to[m.feature_labels[f]] += w(p, f);
    }
    for (double t : to) {
      if (to[own] < t - 1e-12) return false;
    }
  }
  return true;
}

inline std::vector<std::string> names(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("f" + std::to_string(i));
  return out;
}

// Column 0 duplicates the label, column 1 is all zero, the rest are noise.
struct LabelCopyFixture {
  SequenceData data;
  Eigen::VectorXd y;
};

inline LabelCopyFixture label_copy_fixture(std::uint64_t seed, int n = 300, int f = 6) {
  Rng rng = make_rng(seed);
  LabelCopyFixture fx;
  fx.y.resize(n);
  Eigen::MatrixXd x(n, f);
  for (int i = 0; i < n; ++i) {
    fx.y(i) = uniform01(rng) < 0.4 ? 1.0 : 0.0;
    x(i, 0) = fx.y(i);
    x(i, 1) = 0.0;
    for (int j = 2; j < f; ++j) x(i, j) = uniform01(rng);
  }
  fx.y(0) = 0;
  fx.y(1) = 1;
  x(0, 0) = 0;
  x(1, 0) = 1;
  fx.data = SequenceData::single(x);
  return fx;
}

// Label copy blurred with uniform noise so the error is not pinned at zero.
inline LabelCopyFixture noisy_label_copy(std::uint64_t seed, int n = 800, int f = 10) {
  auto fx = label_copy_fixture(seed, n, f);
  Rng rng = make_rng(seed, {1});
  for (int i = 0; i < n; ++i) fx.data.steps[0](i, 0) = fx.y(i) + 1.5 * (uniform01(rng) - 0.5) * 2.0;
  return fx;
}

inline std::unique_ptr<Predictor> linear_black_box(const Eigen::VectorXd& w, double bias) {
  return std::make_unique<FunctionPredictor>(
      static_cast<std::size_t>(w.size()), [w, bias](const SequenceData& d) {
        const Eigen::VectorXd a = (d.summed() * w).array() + bias;
        return Eigen::VectorXd(a.unaryExpr([](double t) { return 1.0 / (1.0 + std::exp(-t)); }));
      });
}

}  // namespace ehrc::testing

#endif  // EHRC_TESTS_ORACLES_H_
