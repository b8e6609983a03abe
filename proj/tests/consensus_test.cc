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

#include <numeric>
#include <sstream>

#include "doctest.h"
#include "ehrc/consensus.h"
#include "fixtures.h"
#include "test_util.h"

using namespace ehrc;
using ehrc::testing::rbo_oracle;

namespace {

RankedList shuffled(std::size_t n, Rng& rng) { return random_permutation(n, rng); }

ModelImportance model(const std::string& name, std::vector<std::string> tokens,
                      std::vector<double> scores) {
  ModelImportance m;
  m.name = name;
  m.importance.tokens = std::move(tokens);
  m.importance.scores = std::move(scores);
  return m;
}

std::vector<std::string> tokens(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("h_" + std::to_string(i));
  return out;
}

}  // namespace

TEST_CASE("rbo of identical and disjoint lists") {
  for (double p : {0.1, 0.5, 0.9, 0.99}) {
    for (int n : {1, 2, 7, 50}) {
      std::vector<int> s(n);
      std::iota(s.begin(), s.end(), 0);
      CHECK(std::abs(rbo(s, s, {p}) - 1.0) < 1e-12);
      std::vector<int> t(n);
      std::iota(t.begin(), t.end(), 1000);
      CHECK(rbo(s, t, {p}) == 0.0);
    }
  }
}

TEST_CASE("rbo worked example") {
  const std::vector<std::string> s = {"a", "b", "c"};
  const std::vector<std::string> t = {"b", "a", "c"};
  // d=1: X=0; d=2: X=2; d=3: X=3.
  const double hand = 0.729 + (0.1 / 0.9) * (0.0 + 0.81 * 1.0 + 0.729 * 1.0);
  CHECK(std::abs(hand - 0.9) < 1e-12);
  CHECK(std::abs(rbo(s, t, {0.9}) - 0.9) < 1e-9);
  CHECK(std::abs(rbo_oracle(s, t, 0.9, 3) - 0.9) < 1e-9);
}

TEST_CASE("rbo matches the overlap-counting oracle") {
  Rng rng = make_rng(17);
  for (int c = 0; c < 1000; ++c) {
    const std::size_t universe = static_cast<std::size_t>(uniform_int(rng, 1, 30));
    auto s = shuffled(universe, rng);
    auto t = shuffled(universe, rng);
    s.resize(static_cast<std::size_t>(uniform_int(rng, 1, static_cast<std::int64_t>(universe))));
    t.resize(static_cast<std::size_t>(uniform_int(rng, 1, static_cast<std::int64_t>(universe))));
    const double p = 0.05 + 0.9 * uniform01(rng);
    const std::size_t k = static_cast<std::size_t>(
        uniform_int(rng, 1, static_cast<std::int64_t>(std::min(s.size(), t.size()))));
    RboParams params{p, k};
    const double got = rbo(s, t, params);
    CHECK(std::abs(got - rbo_oracle(s, t, p, k)) < 1e-9);
    CHECK(got >= 0.0);
    CHECK(got <= 1.0 + 1e-12);
    CHECK(got == rbo(t, s, params));
  }
}

TEST_CASE("rbo never drops when both lists gain the same new item") {
  Rng rng = make_rng(23);
  for (int c = 0; c < 300; ++c) {
    const std::size_t n = static_cast<std::size_t>(uniform_int(rng, 1, 20));
    auto s = shuffled(n, rng);
    auto t = shuffled(n, rng);
    const double p = 0.05 + 0.9 * uniform01(rng);
    const double before = rbo(s, t, {p});
    s.push_back(n);
    t.push_back(n);
    CHECK(rbo(s, t, {p}) >= before - 1e-12);
  }
}

TEST_CASE("rbo input errors") {
  const std::vector<int> s = {1, 2, 3};
  CHECK_THROWS_AS(rbo(std::vector<int>{}, s), ValidationError);
  CHECK_THROWS_AS(rbo(s, std::vector<int>{1, 1, 2}), ValidationError);
  CHECK_THROWS_AS(rbo(s, s, {0.9, 4}), ValidationError);
  CHECK_THROWS_AS(rbo(s, s, {1.0}), ConfigError);
  CHECK_THROWS_AS(rbo(s, s, {0.0}), ConfigError);
}

TEST_CASE("cluster_rank keeps first appearances") {
  CHECK(cluster_rank({0, 1, 2}, {0, 0, 1}) == ClusterList{0, 1});
  CHECK(cluster_rank({2, 0, 1}, {5, 5, 5}) == ClusterList{5});
  // 8 features in 3 clusters: A = {0, 3, 5}, B = {1, 6}, C = {2, 4, 7}.
  const std::vector<int> labels = {0, 1, 2, 0, 2, 0, 1, 2};
  CHECK(cluster_rank({4, 7, 0, 2, 6, 3, 1, 5}, labels) == ClusterList{2, 0, 1});
  CHECK(cluster_rank({6, 5, 4, 3, 2, 1, 0, 7}, labels) == ClusterList{1, 0, 2});
  CHECK_THROWS_AS(cluster_rank({0, 8}, labels), ValidationError);
}

TEST_CASE("cluster_rank length equals distinct clusters") {
  Rng rng = make_rng(2);
  for (int c = 0; c < 100; ++c) {
    const std::size_t n = static_cast<std::size_t>(uniform_int(rng, 1, 40));
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(uniform_int(rng, 0, 9));
    auto ranked = shuffled(n, rng);
    ranked.resize(static_cast<std::size_t>(uniform_int(rng, 1, static_cast<std::int64_t>(n))));
    std::set<int> distinct;
    for (auto f : ranked) distinct.insert(labels[f]);
    CHECK(cluster_rank(ranked, labels).size() == distinct.size());
  }
}

TEST_CASE("identity labelling reproduces raw rbo exactly") {
  Rng rng = make_rng(31);
  for (int c = 0; c < 200; ++c) {
    const std::size_t n = static_cast<std::size_t>(uniform_int(rng, 1, 60));
    const auto s = shuffled(n, rng);
    const auto t = shuffled(n, rng);
    std::vector<int> identity(n);
    std::iota(identity.begin(), identity.end(), 0);
    const double p = 0.05 + 0.9 * uniform01(rng);
    CHECK(clustered_rbo(s, t, identity, {p}) == rbo(s, t, {p}));
  }
}

TEST_CASE("within-cluster permutations score exactly 1") {
  // Clusters {0,1,2}, {3,4}, {5,6,7}.
  const std::vector<int> labels = {0, 0, 0, 1, 1, 2, 2, 2};
  const RankedList s = {0, 1, 2, 3, 4, 5, 6, 7};
  const RankedList t = {2, 0, 1, 4, 3, 7, 5, 6};
  CHECK(rbo(s, t) < 1.0);
  CHECK(clustered_rbo(s, t, labels) == 1.0);
  CHECK(clustered_rbo(s, s, labels) == 1.0);
}

TEST_CASE("clustered rbo two-step hand computation") {
  // Model A ranks clusters [x, y, z]; model B ranks [y, x, z].
  const std::vector<int> labels = {0, 1, 0, 2, 1, 2};
  const RankedList a = {0, 2, 1, 4, 3, 5};
  const RankedList b = {4, 0, 1, 2, 5, 3};
  CHECK(cluster_rank(a, labels) == ClusterList{0, 1, 2});
  CHECK(cluster_rank(b, labels) == ClusterList{1, 0, 2});
  CHECK(std::abs(clustered_rbo(a, b, labels) - 0.9) < 1e-12);
}

TEST_CASE("agreement matrix laws") {
  Rng rng = make_rng(4);
  std::vector<ModelImportance> models;
  for (int m = 0; m < 4; ++m) {
    std::vector<double> s(12);
    for (auto& v : s) v = uniform01(rng);
    models.push_back(model("m" + std::to_string(m), tokens(12), s));
  }
  models.push_back(models[1]);
  models.back().name = "copy";
  std::vector<int> labels = {0, 0, 1, 1, 2, 2, 3, 3, 0, 1, 2, 3};
  const auto ag = agreement_matrix(models, &labels);
  REQUIRE(ag.clustered);
  for (const auto* m : {&ag.raw, ag.clustered.operator->()}) {
    CHECK(m->values.rows() == 5);
    CHECK(m->values == m->values.transpose());
    CHECK(m->values.diagonal().isOnes());
    CHECK(m->values(1, 4) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_NOTHROW(m->validate());
  }
  CHECK(ag.raw.values(0, 2) ==
        rbo(rank_features(models[0].importance.scores), rank_features(models[2].importance.scores)));
  const auto serial = agreement_matrix_serial(models, &labels);
  CHECK(serial.raw == ag.raw);
  CHECK(*serial.clustered == *ag.clustered);
  CHECK_FALSE(agreement_matrix(models, nullptr).clustered);

  std::ostringstream out;
  ag.raw.write(out);
  CHECK(out.str().rfind("model\tm0\tm1\tm2\tm3\tcopy\n", 0) == 0);
}

TEST_CASE("vocabulary mismatch names the tokens") {
  auto a = model("a", {"h_1", "h_2", "h_3"}, {1, 2, 3});
  auto b = model("b", {"h_1", "h_2", "m_9"}, {1, 2, 3});
  try {
    agreement_matrix({a, b}, nullptr);
    FAIL("expected a mismatch");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("m_9") != std::string::npos);
    CHECK(msg.find("h_3") != std::string::npos);
  }
  CHECK_THROWS_AS(agreement_matrix({a}, nullptr), ValidationError);
}

TEST_CASE("cross-outcome agreement over shared tokens") {
  auto sd = model("gru", {"h_1", "h_2", "h_3", "m_4"}, {4, 3, 2, 1});
  auto acm = model("gru", {"h_0", "h_1", "h_2", "h_3"}, {9, 4, 3, 2});
  const std::map<std::string, int> labels = {{"h_1", 0}, {"h_2", 1}, {"h_3", 2}};
  const auto rows = cross_outcome_agreement({sd}, {acm}, labels);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].score == 1.0);
  CHECK(rows[0].shared == 3);
  CHECK(rows[0].only_first == std::vector<std::string>{"m_4"});
  CHECK(rows[0].only_second == std::vector<std::string>{"h_0"});

  auto disjoint = model("gru", {"t_x"}, {1});
  CHECK_THROWS_AS(cross_outcome_agreement({sd}, {disjoint}, labels), ValidationError);
  CHECK_THROWS_AS(cross_outcome_agreement({sd}, {acm}, {{"h_1", 0}}), ValidationError);
}

TEST_CASE("twin outcomes agree more than independent ones") {
  // Both outcomes come from one cohort; the twin relabels with the same risk
  // weights, the independent one puts risk on another group.
  auto config = ehrc::testing::small_planted_config(1500, 5);
  config.risk_weights = {4.0, 2.0, 1.0, 0.0, 0.0};
  config.sparsity_target = 0.92;
  auto base = ehrc::testing::encode_synthetic(config);
  auto twin_cfg = config;
  twin_cfg.label_seed = 99;
  auto twin = ehrc::testing::encode_synthetic(twin_cfg);
  auto other_cfg = config;
  other_cfg.risk_weights = {0.0, 0.0, 0.0, 2.0, 4.0};
  auto other = ehrc::testing::encode_synthetic(other_cfg);

  // Importance: |correlation| of each collapsed feature with the label.
  auto importance = [&](const ehrc::testing::EncodedCohort& c) {
    const Eigen::MatrixXd x = collapse_time(c.encoded.tensor, c.vocab);
    std::vector<double> s;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const Eigen::VectorXd xc = x.col(j).array() - x.col(j).mean();
      const Eigen::VectorXd yc = c.y.array() - c.y.mean();
      const double den = xc.norm() * yc.norm();
      s.push_back(den > 0 ? std::abs(xc.dot(yc)) / den : 0.0);
    }
    return model("marginal", c.vocab.tokens(), s);
  };
  std::map<std::string, int> labels;
  for (std::size_t j = 0; j < base.synthetic.truth.feature_tokens.size(); ++j) {
    labels[base.synthetic.truth.feature_tokens[j]] = base.synthetic.truth.feature_group[j] < 0
                                                         ? 100 + static_cast<int>(j)
                                                         : base.synthetic.truth.feature_group[j];
  }
  const auto m0 = importance(base);
  const double twin_score = cross_outcome_agreement({m0}, {importance(twin)}, labels)[0].score;
  const double other_score = cross_outcome_agreement({m0}, {importance(other)}, labels)[0].score;
  MESSAGE("twin " << twin_score << " independent " << other_score);
  CHECK(twin_score - other_score >= 0.2);
}

TEST_CASE("top-k table") {
  auto a = model("a", {"h_I21", "m_0212", "t_hb", "hist_cancer", "d_age"}, {0.1, 0.5, 0.2, 0.9, 0.3});
  auto b = model("b", {"h_I21", "m_0212", "t_hb", "hist_cancer", "d_age"}, {0.6, 0.5, 0.2, 0.1, 0.0});
  const auto one = top_k_table({a, b}, 1);
  REQUIRE(one.size() == 2);
  CHECK(one[0].token == "hist_cancer");
  CHECK(one[0].family == "history");
  CHECK(one[1].token == "h_I21");
  CHECK(one[1].family == "hospitalisation");
  const auto three = top_k_table({a, b}, 3);
  const auto order = rank_features(a.importance.scores);
  for (std::size_t r = 0; r < 3; ++r) CHECK(three[r].token == a.importance.tokens[order[r]]);
  for (const auto& row : top_k_table({a, b}, 5)) {
    CHECK(!row.family.empty());
    CHECK(row.family == family_tag(row.token));
  }
  CHECK(family_tag("v_hb") == "blood test");
  CHECK(family_tag("d_sex_M") == "demographics");
  CHECK(family_tag("m_0212") == "prescription");
  CHECK(family_tag("[UNK]") == "other");
  CHECK_THROWS_AS(top_k_table({a}, 0), ConfigError);
}
