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

#include <cmath>
#include <map>
#include <sstream>

#include "doctest.h"
#include "ehrc/encode.h"
#include "ehrc/io.h"
#include "ehrc/models.h"
#include "ehrc/synth.h"
#include "test_util.h"

using namespace ehrc;

namespace {

SynthConfig five_groups(std::uint64_t seed) {
  SynthConfig c;
  c.n_subjects = 2000;
  c.n_hospitalisation = 40;
  c.n_prescription = 40;
  c.n_blood_marker = 15;
  c.n_blood_value = 14;
  c.n_history = 9;
  c.n_latent_groups = 5;
  c.within_group_corr = 0.9;
  c.sparsity_target = 0.9;
  c.seed = seed;
  return c;
}

std::string serialise(const SyntheticCohort& s) {
  std::ostringstream out;
  write_events(out, s.cohort.events());
  write_labels(out, s.cohort.labels());
  return out.str();
}

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd x = a.array() - a.mean();
  const Eigen::VectorXd y = b.array() - b.mean();
  return x.dot(y) / std::sqrt(x.squaredNorm() * y.squaredNorm());
}

}  // namespace

TEST_CASE("default cohort hits the sparsity target") {
  const SynthConfig c;
  const auto s = generate_cohort(c);
  const auto stats = cohort_stats(s.cohort, c.outcome_kind);
  CHECK(stats.n_subjects == 2000);
  CHECK(stats.n_features == 629);
  CHECK(std::abs(stats.sparsity - 0.989) <= 0.005);
  CHECK(stats.length_mean >= c.sentence_length_min);
  CHECK(stats.length_mean <= c.sentence_length_max);
}

TEST_CASE("generation is byte-identical for one seed") {
  auto c = five_groups(11);
  c.n_subjects = 300;
  const auto a = serialise(generate_cohort(c));
  CHECK(a == serialise(generate_cohort(c)));
  c.seed = 12;
  CHECK(a != serialise(generate_cohort(c)));
}

TEST_CASE("planted groups are correlated within and not between") {
  const auto c = five_groups(3);
  const auto s = generate_cohort(c);
  const auto vocab = build_vocabulary(s.cohort, c.outcome_kind, false);
  const Eigen::MatrixXd x = collapse_time(encode_sparse(s.cohort, c.outcome_kind, vocab).tensor, vocab);
  std::map<std::string, int> group;
  for (std::size_t j = 0; j < s.truth.feature_tokens.size(); ++j) {
    group[s.truth.feature_tokens[j]] = s.truth.feature_group[j];
  }
  // Counts only; blood-test values are means, not activations.
  std::vector<Eigen::Index> cols;
  std::vector<int> g;
  for (std::size_t j = 0; j < vocab.size(); ++j) {
    const auto fam = vocab.family(j);
    if (!fam || is_static(*fam) || *fam == Family::kBloodTestValue) continue;
    cols.push_back(static_cast<Eigen::Index>(j));
    g.push_back(group.at(vocab.token(j)));
  }
  double within = 0.0;
  int n_within = 0;
  double worst_between = 0.0;
  for (std::size_t a = 0; a < cols.size(); ++a) {
    for (std::size_t b = a + 1; b < cols.size(); ++b) {
      const double r = pearson(x.col(cols[a]), x.col(cols[b]));
      if (g[a] == g[b]) {
        within += r;
        ++n_within;
      } else {
        worst_between = std::max(worst_between, std::abs(r));
      }
    }
  }
  within /= n_within;
  MESSAGE("within-group rho ", within, ", largest between-group |rho| ", worst_between);
  CHECK(within >= 0.8);
  CHECK(within <= 0.95);
  CHECK(worst_between < 0.2);
}

TEST_CASE("zero risk weights give no signal") {
  auto c = five_groups(21);
  c.risk_weights = {0, 0, 0, 0, 0};
  const auto s = generate_cohort(c);
  const auto labels = s.cohort.labels_for(c.outcome_kind);
  Eigen::VectorXd y(static_cast<Eigen::Index>(labels.size()));
  Eigen::VectorXd activity(y.size());
  const auto by_subject = s.cohort.events_by_subject();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    y(static_cast<Eigen::Index>(i)) = labels[i].is_event() ? 1.0 : 0.0;
    activity(static_cast<Eigen::Index>(i)) =
        static_cast<double>(by_subject.at(labels[i].subject_id).size());
  }
  CHECK(y.mean() == doctest::Approx(c.event_rate).epsilon(0.1));
  CHECK(std::abs(testing::brute_force_auc(activity, y) - 0.5) <= 0.04);
}

TEST_CASE("raising a group's weight raises the event rate of its members") {
  auto rate_in_group = [](double w) {
    auto c = five_groups(8);
    c.risk_weights = {w, 0, 0, 0, 0};
    const auto s = generate_cohort(c);
    std::map<std::string, bool> event;
    for (const auto& l : s.cohort.labels_for(c.outcome_kind)) event[l.subject_id] = l.is_event();
    double hits = 0.0;
    double n = 0.0;
    for (std::size_t i = 0; i < s.truth.subject_ids.size(); ++i) {
      if (s.truth.subject_group[i] != 0 || !event.contains(s.truth.subject_ids[i])) continue;
      hits += event[s.truth.subject_ids[i]];
      n += 1.0;
    }
    return hits / n;
  };
  const double low = rate_in_group(0.5);
  const double mid = rate_in_group(1.5);
  const double high = rate_in_group(3.0);
  CHECK(low < mid);
  CHECK(mid < high);
}

TEST_CASE("stats on tiny cohorts") {
  const Cohort one({{"a", 995, Family::kHospitalisation, "I50", std::nullopt, std::nullopt}},
                   {{"a", OutcomeKind::kSuddenDeathComposite, LabelValue::kControl, 1000, {}}});
  const auto s = cohort_stats(one, OutcomeKind::kSuddenDeathComposite);
  CHECK(s.length_min == s.length_max);
  CHECK(s.length_sd == 0.0);
  CHECK_THROWS(cohort_stats(Cohort(), OutcomeKind::kSuddenDeathComposite));
}

TEST_CASE("infeasible or invalid configs are rejected") {
  auto c = five_groups(1);
  c.sparsity_target = 0.999;
  CHECK_THROWS_AS(generate_cohort(c), ConfigError);
  c = five_groups(1);
  c.sparsity_target = 0.2;
  CHECK_THROWS_AS(generate_cohort(c), ConfigError);
  c = five_groups(1);
  c.event_rate = 1.0;
  CHECK_THROWS_AS(generate_cohort(c), ConfigError);
  CHECK_THROWS_AS(parse_synth_config("n_subjects = 10\nbogus = 1\n"), ConfigError);
  const auto parsed = parse_synth_config("# x\nn_subjects = 10\nrisk_weights = 1, 2\n");
  CHECK(parsed.n_subjects == 10);
  CHECK(parsed.risk_weights == std::vector<double>{1, 2});
}

TEST_CASE("ground truth covers every feature and subject") {
  auto c = five_groups(2);
  c.n_subjects = 200;
  const auto s = generate_cohort(c);
  CHECK(s.truth.feature_tokens.size() == c.total_feature_count());
  CHECK(s.truth.feature_group.size() == s.truth.feature_tokens.size());
  CHECK(s.truth.subject_ids.size() == c.n_subjects);
  CHECK(s.truth.subject_risk.size() == c.n_subjects);
  CHECK(s.cohort.labels().size() + s.truth.excluded_subjects.size() == c.n_subjects);
}
