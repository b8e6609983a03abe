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

// End-to-end acceptance checks. Each case prints one line:
//   criterion N: PASS|FAIL (details, runtime)

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "doctest.h"
#include "ehrc/cocluster.h"
#include "ehrc/consensus.h"
#include "ehrc/encode.h"
#include "ehrc/interpret.h"
#include "ehrc/io.h"
#include "ehrc/models.h"
#include "ehrc/nn.h"
#include "ehrc/pipeline.h"
#include "ehrc/synth.h"
#include "fixtures.h"
#include "oracles.h"
#include "test_util.h"

namespace fs = std::filesystem;
using namespace ehrc;
using namespace ehrc::testing;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

namespace {

class Criterion {
 public:
  Criterion(int number, double budget_seconds)
      : number_(number), budget_(budget_seconds), start_(std::chrono::steady_clock::now()) {}

  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass_ = false;
      failed_.push_back(what);
    }
  }
  void note(const std::string& detail) { notes_.push_back(detail); }

  void finish() {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::ostringstream rt;
    rt.precision(3);
    rt << secs << " s";
    expect(secs < budget_, "over the time budget");
    std::ostringstream line;
    line << "criterion " << number_ << ": " << (pass_ ? "PASS" : "FAIL") << " (";
    for (const auto& n : notes_) line << n << ", ";
    for (const auto& f : failed_) line << "failed: " << f << ", ";
    line << rt.str() << ")";
    std::printf("%s\n", line.str().c_str());
    std::fflush(stdout);
    CHECK_MESSAGE(pass_, line.str());
  }

 private:
  int number_;
  double budget_;
  std::chrono::steady_clock::time_point start_;
  bool pass_ = true;
  std::vector<std::string> notes_;
  std::vector<std::string> failed_;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream out;
  out.precision(precision);
  out << v;
  return out.str();
}

Trainer logistic_trainer() {
  return [](const SequenceData& d, const Vec& y, std::uint64_t seed) {
    TrainSpec spec;
    spec.seed = seed;
    return std::unique_ptr<Predictor>(train_logistic(d, y, spec));
  };
}

Mat random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Mat m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = 2.0 * uniform01(rng) - 1.0;
  return m;
}

Vec random_labels(Eigen::Index n, Rng& rng) {
  Vec y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = uniform01(rng) < 0.5 ? 0.0 : 1.0;
  y(0) = 0.0;
  y(1) = 1.0;
  return y;
}

std::string serialise(const SyntheticCohort& s) {
  std::ostringstream out;
  write_events(out, s.cohort.events());
  write_labels(out, s.cohort.labels());
  return out.str();
}

}  // namespace

TEST_CASE("criterion 1: rank-biased overlap exactness") {
  Criterion c(1, 1.0);
  bool identical = true;
  bool disjoint = true;
  for (double p : {0.1, 0.5, 0.9, 0.99}) {
    for (int n : {1, 2, 7, 50}) {
      std::vector<int> s(n);
      std::iota(s.begin(), s.end(), 0);
      std::vector<int> t(n);
      std::iota(t.begin(), t.end(), 1000);
      identical = identical && std::abs(rbo(s, s, {p}) - 1.0) < 1e-12;
      disjoint = disjoint && rbo(s, t, {p}) == 0.0;
    }
  }
  c.expect(identical, "identical lists");
  c.expect(disjoint, "disjoint lists");

  const std::vector<std::string> a = {"a", "b", "c"};
  const std::vector<std::string> b = {"b", "a", "c"};
  const double worked = rbo(a, b, {0.9});
  c.expect(std::abs(worked - 0.9) < 1e-9, "worked example");
  c.expect(std::abs(rbo_oracle(a, b, 0.9, 3) - 0.9) < 1e-9, "worked example oracle");
  c.note("[a,b,c] vs [b,a,c] = " + fmt(worked, 12));

  Rng rng = make_rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto universe = static_cast<std::size_t>(uniform_int(rng, 1, 30));
    auto s = random_permutation(universe, rng);
    auto t = random_permutation(universe, rng);
    s.resize(static_cast<std::size_t>(uniform_int(rng, 1, static_cast<std::int64_t>(universe))));
    t.resize(static_cast<std::size_t>(uniform_int(rng, 1, static_cast<std::int64_t>(universe))));
    const double p = 0.05 + 0.9 * uniform01(rng);
    const auto k = static_cast<std::size_t>(
        uniform_int(rng, 1, static_cast<std::int64_t>(std::min(s.size(), t.size()))));
    worst = std::max(worst, std::abs(rbo(s, t, {p, k}) - rbo_oracle(s, t, p, k)));
  }
  c.expect(worst < 1e-9, "fuzz against the oracle");
  c.note("1000 fuzz cases, max error " + fmt(worst, 3));
  c.finish();
}

TEST_CASE("criterion 2: clustered rank-biased overlap") {
  Criterion c(2, 1.0);
  Rng rng = make_rng(202);
  int identity_mismatch = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<std::size_t>(uniform_int(rng, 1, 60));
    const auto s = random_permutation(n, rng);
    const auto t = random_permutation(n, rng);
    std::vector<int> identity(n);
    std::iota(identity.begin(), identity.end(), 0);
    const double p = 0.05 + 0.9 * uniform01(rng);
    identity_mismatch += clustered_rbo(s, t, identity, {p}) != rbo(s, t, {p});
  }
  c.expect(identity_mismatch == 0, "identity labelling");
  c.note("identity labelling equal to raw in 200/200");

  // Random clusterings; each list shuffled only inside its clusters.
  int within_failures = 0;
  double worst_raw = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto k = static_cast<int>(uniform_int(rng, 2, 8));
    const auto n = static_cast<std::size_t>(uniform_int(rng, 2 * k, 60));
    std::vector<int> labels(n);
    for (std::size_t f = 0; f < n; ++f) labels[f] = static_cast<int>(f % static_cast<std::size_t>(k));
    shuffle_in_place(labels, rng);
    std::vector<RankedList> by_cluster(static_cast<std::size_t>(k));
    for (std::size_t f = 0; f < n; ++f) by_cluster[static_cast<std::size_t>(labels[f])].push_back(f);
    auto order = random_permutation(static_cast<std::size_t>(k), rng);
    RankedList s;
    RankedList t;
    for (auto g : order) {
      auto members = by_cluster[g];
      s.insert(s.end(), members.begin(), members.end());
      shuffle_in_place(members, rng);
      t.insert(t.end(), members.begin(), members.end());
    }
    if (s == t) std::swap(t[0], t[1]);  // clusters hold at least two members
    const double raw = rbo(s, t);
    worst_raw = std::max(worst_raw, raw);
    within_failures += !(clustered_rbo(s, t, labels) == 1.0 && raw < 1.0);
  }
  c.expect(within_failures == 0, "within-cluster permutations");
  c.note("within-cluster permutations give 1 in 200/200, raw at most " + fmt(worst_raw));
  c.finish();
}

TEST_CASE("criterion 3: planted block recovery") {
  Criterion c(3, 10.0);
  double min_rows = 1.0;
  double min_cols = 1.0;
  int conditions = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto fx = planted_blocks(30, 12, 3, 0.05, seed);
    const auto m = spectral_cocluster(fx.a, 3, seed);
    min_rows = std::min(min_rows, adjusted_rand_index(m.patient_labels, fx.row_labels));
    min_cols = std::min(min_cols, adjusted_rand_index(m.feature_labels, fx.col_labels));
    conditions += satisfies_block_conditions(fx.a, m) && block_conditions_oracle(fx.a, m);
  }
  c.expect(min_rows >= 0.95, "patient ARI");
  c.expect(min_cols >= 0.95, "feature ARI");
  c.expect(conditions == 20, "block conditions");
  c.note("20 seeds, min patient ARI " + fmt(min_rows) + ", min feature ARI " + fmt(min_cols) +
         ", block conditions " + std::to_string(conditions) + "/20");
  c.finish();
}

TEST_CASE("criterion 4: choice of k on three planted groups") {
  Criterion c(4, 120.0);
  std::vector<int> ks(9);
  std::iota(ks.begin(), ks.end(), 2);
  int hits = 0;
  std::string picks;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto ec = encode_synthetic(three_group_config(seed));
    const Mat a = collapse_time(ec.encoded.tensor, ec.vocab);
    const auto choice = choose_k(a, ks, seed);
    hits += choice.k == 3;
    picks += std::to_string(choice.k);
  }
  c.expect(hits >= 18, "k = 3 in at least 18 of 20");
  c.note("k = 3 in " + std::to_string(hits) + "/20, picks " + picks);
  c.finish();
}

TEST_CASE("criterion 5: bootstrap stability") {
  Criterion c(5, 120.0);
  const auto clean = planted_blocks(60, 18, 3, 0.0, 1);
  const auto exact = bootstrap_stability(clean.a, 3, 20, 7);
  c.expect(exact.mean == 1.0, "noise-free blocks");

  const auto fx = planted_blocks(200, 60, 3, 0.05, 2);
  const auto planted = bootstrap_stability(fx.a, 3, 20, 2);
  c.expect(planted.mean >= 0.90, "planted blocks at 5% noise");

  const Mat noise = noise_matrix(200, 60, fx.a.mean(), 2);
  CoClusterOptions embedding_only;
  embedding_only.max_sweeps = 0;
  const auto control = bootstrap_stability(noise, 8, 20, 2, 0.9, embedding_only);
  c.expect(planted.mean - control.mean >= 0.2, "noise control gap");
  c.note("noise-free " + fmt(exact.mean) + ", planted " + fmt(planted.mean) + ", noise " +
         fmt(control.mean));
  c.finish();
}

TEST_CASE("criterion 6: permutation importance") {
  Criterion c(6, 60.0);
  int first = 0;
  int zero_exact = 0;
  int within = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto fx = label_copy_fixture(seed);
    TrainSpec spec;
    spec.epochs = 50;
    spec.seed = seed;
    const auto model = train_logistic(fx.data, fx.y, spec);
    const auto result = pfi(*model, fx.data, fx.y, names(6), {5, seed});
    first += rank_features(result.importance.scores).front() == 0;
    zero_exact += result.importance.scores[1] == 0.0;

    const auto train = noisy_label_copy(100 + 2 * seed);
    const auto test = noisy_label_copy(101 + 2 * seed);
    const auto noisy = train_logistic(train.data, train.y, spec);
    const auto r = pfi(*noisy, test.data, test.y, names(10), {5, seed});
    double mean = 0.0;
    double var = 0.0;
    for (std::size_t j = 2; j < 10; ++j) {
      mean += r.importance.scores[j] / 8.0;
      var += r.sd[j] * r.sd[j] / 8.0;
    }
    within += std::abs(mean) <= 2.0 * std::sqrt(var);
  }
  c.expect(first == 20, "label copy ranked first");
  c.expect(zero_exact == 20, "constant column scores zero");
  c.expect(within == 20, "independent features near zero");

  // Whole subject rows move together across time steps.
  Rng rng = make_rng(6);
  SequenceData d;
  for (int t = 0; t < 7; ++t) d.steps.push_back(random_matrix(20, 3, rng).array().round());
  const auto p = permute_feature(d, 1, 0, 4);
  std::multiset<std::vector<double>> before;
  std::multiset<std::vector<double>> after;
  bool others_fixed = true;
  for (int i = 0; i < 20; ++i) {
    std::vector<double> x, y;
    for (int t = 0; t < 7; ++t) {
      x.push_back(d.steps[t](i, 1));
      y.push_back(p.steps[t](i, 1));
      others_fixed = others_fixed && p.steps[t](i, 0) == d.steps[t](i, 0) &&
                     p.steps[t](i, 2) == d.steps[t](i, 2);
    }
    before.insert(x);
    after.insert(y);
  }
  c.expect(before == after && others_fixed, "temporal block permutation");
  c.note("label copy first " + std::to_string(first) + "/20, independent mean within 2 sd " +
         std::to_string(within) + "/20");
  c.finish();
}

TEST_CASE("criterion 7: local surrogate explanations") {
  Criterion c(7, 60.0);
  Vec w(12);
  w << 1.5, -2.0, 0.4, 0.0, -0.7, 2.5, 0.9, -0.2, 0.0, 1.1, -1.3, 0.6;
  const auto model = linear_black_box(w, -0.3);
  Mat x = Mat::Zero(1, 12);
  for (int j : {0, 1, 2, 4, 5, 6, 7, 9}) x(0, j) = 1.0;
  int signs = 0;
  int total = 0;
  double min_rho = 1.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    LimeOptions opt;
    opt.seed = seed;
    const auto e = lime_local(*model, SequenceData::single(x), opt);
    std::vector<double> truth, got;
    for (std::size_t a = 0; a < e.active.size(); ++a) {
      truth.push_back(w(static_cast<Eigen::Index>(e.active[a])));
      got.push_back(e.weights[a]);
      signs += (e.weights[a] > 0) == (truth.back() > 0);
      ++total;
    }
    min_rho = std::min(min_rho, spearman(truth, got));
  }
  c.expect(total == 160 && signs == total, "sign agreement");
  c.expect(min_rho >= 0.9, "rank agreement");

  FunctionPredictor constant(5, [](const SequenceData& d) {
    return Vec::Constant(static_cast<Eigen::Index>(d.n_subjects()), 0.3);
  });
  Mat z(1, 5);
  z << 1, 0, 2, 1, 0;
  const auto e = lime_local(constant, SequenceData::single(z));
  bool zeros = true;
  for (double v : e.weights) zeros = zeros && v == 0.0;
  c.expect(zeros, "constant black box");
  c.note("signs " + std::to_string(signs) + "/" + std::to_string(total) + ", min Spearman " +
         fmt(min_rho));
  c.finish();
}

TEST_CASE("criterion 8: model correctness") {
  Criterion c(8, 600.0);
  double worst = 0.0;
  {
    Rng rng = make_rng(3);
    const Mat z = random_matrix(20, 6, rng);
    const Vec y = random_labels(20, rng);
    Vec wt = Vec::Ones(20);
    wt.head(5).array() = 2.5;
    LogisticModel model(6);
    for (auto* p : model.params()) p->value = random_matrix(p->value.rows(), p->value.cols(), rng);
    auto params = model.params();
    worst = std::max(worst, gradient_check(params, [&] {
      for (auto* p : params) p->zero_grad();
      return model.loss_and_grad(z, y, wt);
    }, 20, 1));
  }
  for (auto act : {nn::Activation::kLinear, nn::Activation::kSigmoid, nn::Activation::kRelu,
                   nn::Activation::kTanh}) {
    Rng rng = make_rng(5);
    nn::DenseLayer layer(4, 3, act, rng);
    const Mat x = random_matrix(4, 7, rng);
    const Mat target = random_matrix(3, 7, rng);
    auto params = layer.params();
    worst = std::max(worst, gradient_check(params, [&] {
      for (auto* p : params) p->zero_grad();
      nn::DenseLayer::Cache cache;
      const Mat out = layer.forward(x, &cache);
      layer.backward(cache, out - target);
      return 0.5 * (out - target).squaredNorm();
    }, 20, 2));
  }
  {
    Rng rng = make_rng(7);
    RecurrentNet net(5, {6, 4}, {0.1, 0.3}, rng);
    std::vector<Mat> xs;
    for (int t = 0; t < 7; ++t) xs.push_back(random_matrix(5, 9, rng));
    const Vec y = random_labels(9, rng);
    const Vec wt = Vec::Ones(9);
    auto params = net.params();
    for (bool dropout : {false, true}) {
      worst = std::max(worst, gradient_check(params, [&] {
        for (auto* p : params) p->zero_grad();
        Rng drop = make_rng(99);
        return net.loss_and_grad(xs, y, wt, dropout ? &drop : nullptr);
      }, 40, 11));
    }
  }
  {
    Rng rng = make_rng(9);
    DenoisingAutoencoder dae(6, {5, 4, 3}, rng);
    const Mat clean = random_matrix(6, 8, rng);
    const Mat noisy = corrupt_mask(clean, 0.3, 4);
    auto params = dae.params();
    worst = std::max(worst, gradient_check(params, [&] {
      for (auto* p : params) p->zero_grad();
      return dae.loss_and_grad(noisy, clean);
    }, 40, 3));
  }
  c.expect(worst < 1e-4, "gradient checks");

  Mat sx(40, 1);
  Vec sy(40);
  for (int i = 0; i < 40; ++i) {
    sx(i, 0) = i < 20 ? -1.0 - 0.1 * i : 1.0 + 0.1 * (i - 20);
    sy(i) = i < 20 ? 0.0 : 1.0;
  }
  const auto sep = SequenceData::single(sx);
  const double sep_auc = auc_score(train_logistic(sep, sy, TrainSpec{})->predict(sep), sy);
  c.expect(sep_auc == 1.0, "separable fixture");

  Rng rng = make_rng(21);
  Vec s(200), y(200);
  for (int i = 0; i < 200; ++i) {
    s(i) = std::round(uniform01(rng) * 40.0) / 40.0;
    y(i) = uniform01(rng) < 0.35 ? 1.0 : 0.0;
  }
  const double auc_err = std::abs(auc_score(s, y) - brute_force_auc(s, y));
  c.expect(auc_err < 1e-12, "auc oracle");

  const auto ec = encode_synthetic(small_planted_config(600, 13));
  const auto a = kfold_evaluate(logistic_trainer(), ec.data, ec.y, 10, 77);
  const auto b = kfold_evaluate_serial(logistic_trainer(), ec.data, ec.y, 10, 77);
  const auto again = kfold_evaluate(logistic_trainer(), ec.data, ec.y, 10, 77);
  c.expect(a == b && a == again, "k-fold determinism");
  c.note("max gradient error " + fmt(worst, 3) + ", separable AUC " + fmt(sep_auc) +
         ", AUC oracle error " + fmt(auc_err, 3) + ", 10-fold AUC " + fmt(a.auc.mean));
  c.finish();
}

TEST_CASE("criterion 9: clustering closes the gap between model rankings") {
  Criterion c(9, 600.0);
  const auto dir = fs::temp_directory_path() / "ehrc_acceptance_consensus";
  fs::remove_all(dir);
  fs::create_directories(dir);
  SynthConfig sc;
  sc.n_subjects = 2000;
  sc.n_hospitalisation = 40;
  sc.n_prescription = 40;
  sc.n_blood_marker = 15;
  sc.n_blood_value = 14;
  sc.n_history = 9;
  sc.n_demographic = 2;
  sc.n_latent_groups = 5;
  sc.sparsity_target = 0.9;
  sc.risk_weights = {3, 2, 0, 0, 0};
  sc.seed = 7;
  const auto cohort = generate_cohort(sc);
  {
    std::ostringstream ev;
    write_events(ev, cohort.cohort.events());
    write_text_file(dir / "events.csv", ev.str());
    std::ostringstream lb;
    write_labels(lb, cohort.cohort.labels());
    write_text_file(dir / "labels.csv", lb.str());
  }
  RunConfig rc = parse_run_config(
      "models = logistic,recurrent,bow_recurrent\n"
      "seed = 3\n"
      "folds = 5\n"
      "k = auto\n");
  rc.events = dir / "events.csv";
  rc.labels = dir / "labels.csv";
  rc.output_dir = dir / "run";
  Pipeline pipeline(rc);
  pipeline.run_all();
  REQUIRE(pipeline.agreement().has_value());
  REQUIRE(pipeline.agreement()->clustered.has_value());
  const double raw = mean_off_diagonal(pipeline.agreement()->raw);
  const double clustered = mean_off_diagonal(*pipeline.agreement()->clustered);
  c.expect(clustered - raw >= 0.15, "clustered minus raw agreement");
  c.note("mean raw " + fmt(raw) + ", mean clustered " + fmt(clustered) + ", k " +
         std::to_string(pipeline.clusters()->model.k));
  c.finish();
}

TEST_CASE("criterion 10: synthetic cohort targets") {
  Criterion c(10, 120.0);
  const SynthConfig config;
  const auto s = generate_cohort(config);
  const auto stats = cohort_stats(s.cohort, config.outcome_kind);
  c.expect(std::abs(stats.sparsity - 0.989) <= 0.005, "sparsity");
  c.expect(stats.length_mean >= config.sentence_length_min &&
               stats.length_mean <= config.sentence_length_max,
           "sentence length");
  c.expect(serialise(s) == serialise(generate_cohort(config)), "byte determinism");
  c.note("sparsity " + fmt(stats.sparsity) + ", mean length " + fmt(stats.length_mean) +
         ", features " + std::to_string(stats.n_features));
  c.finish();
}

TEST_CASE("criterion 11: feature-family ablation") {
  Criterion c(11, 600.0);
  SynthConfig config = small_planted_config(1500, 14);
  config.n_latent_groups = 6;
  config.sparsity_target = 0.86;
  // Put risk only on groups lying wholly inside the prescription block.
  config.risk_weights.assign(6, 0.0);
  const auto probe = generate_cohort(config);
  std::set<int> rx_groups;
  std::set<int> other_groups;
  for (std::size_t j = 0; j < probe.truth.feature_tokens.size(); ++j) {
    const int g = probe.truth.feature_group[j];
    if (g < 0) continue;
    (probe.truth.feature_tokens[j].rfind("m_", 0) == 0 ? rx_groups : other_groups).insert(g);
  }
  for (int g : rx_groups) {
    if (!other_groups.count(g)) config.risk_weights[static_cast<std::size_t>(g)] = 8.0;
  }
  const auto ec = encode_synthetic(config);
  const auto rows = ablation_run(ec.data, ec.vocab, ec.y, logistic_trainer(), 3, 5);
  c.expect(rows.size() == 10, "ten subsets");
  REQUIRE(rows.size() == 10);
  const double demo = rows[0].report.auc.mean;
  const double rx = rows[2].report.auc.mean;
  double best = 0.0;
  for (const auto& r : rows) best = std::max(best, r.report.auc.mean);
  const double all = rows.back().report.auc.mean;
  c.expect(rows[0].subset.name == "Demographics" && rows[2].subset.name == "Prescriptions" &&
               rows.back().subset.name == "All features",
           "subset order");
  c.expect(rx - demo >= 0.1, "prescriptions over demographics");
  c.expect(all >= best - 0.02, "all features near the best subset");
  c.note("demographics " + fmt(demo) + ", prescriptions " + fmt(rx) + ", all " + fmt(all) +
         ", best " + fmt(best));
  c.finish();
}

TEST_CASE("criterion 12: encoding oracles") {
  Criterion c(12, 60.0);
  const auto kind = OutcomeKind::kSuddenDeathComposite;
  const auto cohort = random_cohort(50, 77);
  const auto vocab = build_vocabulary(cohort, kind, false);
  const auto enc = encode_sparse(cohort, kind, vocab);
  const double collapse_err =
      (collapse_time(enc.tensor, vocab) - collapse_oracle(cohort, kind, vocab)).cwiseAbs().maxCoeff();
  c.expect(collapse_err < 1e-12, "collapsed tensor");

  const std::vector<EventRecord> events{
      ev("a", 990, Family::kPrescription, "0201"),
      ev("a", 995, Family::kHospitalisation, "I50"),
      ev("a", 995, Family::kBloodTestMarker, "na"),
      ev("a", 995, Family::kBloodTestValue, "na", 140.0),
      ev("a", 900, Family::kHospitalisation, "I10"),
      ev("a", 100, Family::kHospitalisation, "J18"),
      ev("a", 1001, Family::kHospitalisation, "I21"),
      ev("a", 20, Family::kDemographic, "age", 70.0),
      ev("a", 20, Family::kDemographic, "sex_M"),
      ev("a", 1000, Family::kHistoryOfDisease, "Stroke"),
  };
  const auto doc = encode_sentence(events, 1000);
  c.expect(doc.tokens == std::vector<std::string>{"segment_0", "h_I50", "m_0201", "t_na",
                                                  "segment_1", "h_I10", "d_sex_M", "d_age",
                                                  "hist_Stroke"},
           "sentence fixture");

  SentenceDoc small;
  small.tokens = {"segment_0", "h_I50", "h_I50", "m_0201", "h_X", "d_age"};
  small.suffix_start = 5;
  const FeatureVocabulary v({"h_I50", "m_0201", "d_age", std::string(kUnkToken)});
  c.expect(bow_vectorize(small, v) == std::vector<double>{2, 1, 1, 1}, "bag of words fixture");
  c.expect(int_vectorize(small, v, 8) == std::vector<std::int64_t>{3, 0, 0, 1, 3, 2, 4, 4},
           "integer fixture");

  std::stringstream buf;
  enc.tensor.write(buf);
  c.expect(SparseTemporalTensor::read(buf) == enc.tensor, "tensor round trip");
  c.note("50 subjects, collapse error " + fmt(collapse_err, 3));
  c.finish();
}
