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

#include "ehrc/synth.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>
#include <sstream>

#include "ehrc/encode.h"
#include "ehrc/random.h"

namespace ehrc {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t parse_count(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size() || v < 0) throw std::invalid_argument(value);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("config field '" + key + "': expected a non-negative integer, got '" +
                      value + "'");
  }
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config field '" + key + "': expected a number, got '" + value + "'");
  }
}

struct FeatureSpec {
  Family family;
  std::string code;
  int group = -1;
};

std::vector<FeatureSpec> feature_specs(const SynthConfig& c) {
  std::vector<FeatureSpec> out;
  char buf[32];
  for (std::size_t j = 0; j < c.n_hospitalisation; ++j) {
    std::snprintf(buf, sizeof(buf), "%c%03zu", static_cast<char>('A' + j % 26), j / 26);
    out.push_back({Family::kHospitalisation, buf});
  }
  for (std::size_t j = 0; j < c.n_prescription; ++j) {
    std::snprintf(buf, sizeof(buf), "%04zu", 101 + j);
    out.push_back({Family::kPrescription, buf});
  }
  for (std::size_t j = 0; j < c.n_blood_marker; ++j) {
    // The last marker stands for unmatched tests once values are exhausted.
    if (j == c.n_blood_value && j + 1 == c.n_blood_marker) {
      out.push_back({Family::kBloodTestMarker, "other"});
    } else {
      std::snprintf(buf, sizeof(buf), "lab%02zu", j + 1);
      out.push_back({Family::kBloodTestMarker, buf});
    }
  }
  for (std::size_t j = 0; j < c.n_blood_value; ++j) {
    std::snprintf(buf, sizeof(buf), "lab%02zu", j + 1);
    out.push_back({Family::kBloodTestValue, buf});
  }
  // Contiguous near-equal partition of the dynamic features into groups.
  const std::size_t n_dyn = out.size();
  const std::size_t groups = c.n_latent_groups;
  for (std::size_t j = 0; j < n_dyn; ++j) {
    out[j].group = static_cast<int>(j * groups / n_dyn);
  }
  return out;
}

double membership_rate(double pi, double rho, double beta) {
  // Rate solving rho = 49 mu^2 pi(1-pi) / (7 mu pi + 7 beta + 49 mu^2 pi(1-pi)).
  const double a = 49.0 * pi * (1.0 - pi) * (1.0 - rho);
  const double b = 7.0 * rho * pi;
  const double c = 7.0 * rho * beta;
  if (a <= 0.0) return 0.0;
  return (b + std::sqrt(b * b + 4.0 * a * c)) / (2.0 * a);
}

double cell_density(double pi, double mu, double beta) {
  return pi * (1.0 - std::exp(-(mu + beta))) + (1.0 - pi) * (1.0 - std::exp(-beta));
}

}  // namespace

void SynthConfig::validate() const {
  if (n_subjects == 0) throw ConfigError("n_subjects must be positive");
  if (!(sparsity_target > 0.0 && sparsity_target < 1.0)) {
    throw ConfigError("sparsity_target must lie in (0, 1)");
  }
  if (!(event_rate > 0.0 && event_rate < 1.0)) {
    throw ConfigError("event_rate must lie in (0, 1)");
  }
  if (!(within_group_corr >= 0.0 && within_group_corr < 1.0)) {
    throw ConfigError("within_group_corr must lie in [0, 1)");
  }
  if (background_rate < 0.0) throw ConfigError("background_rate must be >= 0");
  if (n_demographic > 2) throw ConfigError("n_demographic must be 0, 1 or 2");
  if (n_history > history_disease_names().size()) {
    throw ConfigError("n_history exceeds the number of tracked diseases");
  }
  if (n_blood_value > n_blood_marker) {
    throw ConfigError("n_blood_value cannot exceed n_blood_marker");
  }
  if (dynamic_feature_count() == 0) throw ConfigError("no dynamic features configured");
  if (n_latent_groups == 0 || n_latent_groups > dynamic_feature_count()) {
    throw ConfigError("n_latent_groups must lie in [1, dynamic feature count]");
  }
  if (!risk_weights.empty() && risk_weights.size() != n_latent_groups) {
    throw ConfigError("risk_weights needs one entry per latent group");
  }
  if (!(history_rate >= 0.0 && history_rate <= 1.0)) {
    throw ConfigError("history_rate must lie in [0, 1]");
  }
}

std::vector<double> SynthConfig::effective_risk_weights() const {
  if (!risk_weights.empty()) return risk_weights;
  std::vector<double> w(n_latent_groups, 0.0);
  const std::size_t signal = std::max<std::size_t>(1, n_latent_groups / 5);
  for (std::size_t g = 0; g < signal; ++g) w[g] = default_risk_weight;
  return w;
}

void apply_synth_setting(SynthConfig& c, const std::string& key,
                         const std::string& value) {
  if (key == "n_subjects") c.n_subjects = parse_count(key, value);
  else if (key == "n_hospitalisation") c.n_hospitalisation = parse_count(key, value);
  else if (key == "n_prescription") c.n_prescription = parse_count(key, value);
  else if (key == "n_blood_marker") c.n_blood_marker = parse_count(key, value);
  else if (key == "n_blood_value") c.n_blood_value = parse_count(key, value);
  else if (key == "n_history") c.n_history = parse_count(key, value);
  else if (key == "n_demographic") c.n_demographic = parse_count(key, value);
  else if (key == "n_latent_groups") c.n_latent_groups = parse_count(key, value);
  else if (key == "within_group_corr") c.within_group_corr = parse_real(key, value);
  else if (key == "background_rate") c.background_rate = parse_real(key, value);
  else if (key == "event_rate") c.event_rate = parse_real(key, value);
  else if (key == "sparsity_target") c.sparsity_target = parse_real(key, value);
  else if (key == "default_risk_weight") c.default_risk_weight = parse_real(key, value);
  else if (key == "history_rate") c.history_rate = parse_real(key, value);
  else if (key == "sentence_length_min") c.sentence_length_min = parse_real(key, value);
  else if (key == "sentence_length_max") c.sentence_length_max = parse_real(key, value);
  else if (key == "outcome") c.outcome_kind = parse_outcome(value);
  else if (key == "seed") c.seed = parse_count(key, value);
  else if (key == "label_seed") c.label_seed = parse_count(key, value);
  else if (key == "risk_weights") {
    c.risk_weights.clear();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) c.risk_weights.push_back(parse_real(key, trim(item)));
  } else {
    throw ConfigError("unknown synth config key '" + key + "'");
  }
}

SynthConfig parse_synth_config(const std::string& text) {
  SynthConfig config;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    apply_synth_setting(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return config;
}

GeneratorParameters solve_parameters(const SynthConfig& c) {
  c.validate();
  const double bins = kNumTimeBins;
  const double n_dyn = static_cast<double>(c.dynamic_feature_count());
  const double n_all = static_cast<double>(c.total_feature_count());
  double static_cells = 0.0;
  if (c.n_demographic >= 1) static_cells += bins;
  if (c.n_demographic >= 2) static_cells += 0.5 * bins;
  static_cells += bins * static_cast<double>(c.n_history) * c.history_rate;

  const double target_nonzero = (1.0 - c.sparsity_target) * n_all * bins;
  const double density = (target_nonzero - static_cells) / (n_dyn * bins);
  const double beta = c.background_rate;
  const double rho = c.within_group_corr;
  const double max_pi = 1.0 / static_cast<double>(c.n_latent_groups);

  auto sparsity_for = [&](double dyn_density) {
    return 1.0 - (dyn_density * n_dyn * bins + static_cells) / (n_all * bins);
  };
  const double floor_density = 1.0 - std::exp(-beta);
  const double ceil_density = cell_density(max_pi, membership_rate(max_pi, rho, beta), beta);
  if (!(density > floor_density)) {
    std::ostringstream msg;
    msg << "sparsity_target " << c.sparsity_target
        << " is not achievable: background and static features alone give sparsity "
        << sparsity_for(floor_density) << " (target must be below it)";
    throw ConfigError(msg.str());
  }
  if (density > ceil_density) {
    std::ostringstream msg;
    msg << "sparsity_target " << c.sparsity_target
        << " is not achievable with these rates: lowest achievable sparsity is "
        << sparsity_for(ceil_density);
    throw ConfigError(msg.str());
  }

  GeneratorParameters p;
  double lo = 0.0;
  double hi = max_pi;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double d = cell_density(mid, membership_rate(mid, rho, beta), beta);
    (d < density ? lo : hi) = mid;
  }
  p.membership_prob = hi;
  p.group_rate = membership_rate(hi, rho, beta);
  p.expected_sparsity = sparsity_for(cell_density(hi, p.group_rate, beta));

  const auto w = c.effective_risk_weights();
  const double none = 1.0 - p.membership_prob * static_cast<double>(w.size());
  auto rate = [&](double b0) {
    double r = none * sigmoid(b0);
    for (double wg : w) r += p.membership_prob * sigmoid(b0 + wg);
    return r;
  };
  double blo = -40.0;
  double bhi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (blo + bhi);
    (rate(mid) < c.event_rate ? blo : bhi) = mid;
  }
  p.intercept = 0.5 * (blo + bhi);
  return p;
}

void GroundTruth::write(std::ostream& out) const {
  out << "# membership_prob " << parameters.membership_prob << '\n';
  out << "# group_rate " << parameters.group_rate << '\n';
  out << "# intercept " << parameters.intercept << '\n';
  for (std::size_t j = 0; j < feature_tokens.size(); ++j) {
    out << "feature " << feature_tokens[j] << ' ' << feature_group[j] << '\n';
  }
  for (std::size_t i = 0; i < subject_ids.size(); ++i) {
    out << "subject " << subject_ids[i] << ' ' << subject_group[i] << ' '
        << subject_risk[i] << '\n';
  }
  for (const auto& id : excluded_subjects) out << "excluded " << id << '\n';
}

SyntheticCohort generate_cohort(const SynthConfig& c) {
  const GeneratorParameters params = solve_parameters(c);
  const auto specs = feature_specs(c);
  const auto weights = c.effective_risk_weights();
  const std::uint64_t label_seed = c.label_seed.value_or(c.seed);

  std::vector<std::vector<std::size_t>> group_features(c.n_latent_groups);
  for (std::size_t j = 0; j < specs.size(); ++j) {
    group_features[static_cast<std::size_t>(specs[j].group)].push_back(j);
  }

  SyntheticCohort out;
  GroundTruth& truth = out.truth;
  truth.parameters = params;
  for (const auto& s : specs) {
    truth.feature_tokens.push_back(std::string(family_prefix(s.family)) + s.code);
    truth.feature_group.push_back(s.group);
  }
  const auto& diseases = history_disease_names();
  for (std::size_t h = 0; h < c.n_history; ++h) {
    truth.feature_tokens.push_back("hist_" + diseases[h]);
    truth.feature_group.push_back(-1);
  }
  if (c.n_demographic >= 1) {
    truth.feature_tokens.push_back("d_age");
    truth.feature_group.push_back(-1);
  }
  if (c.n_demographic >= 2) {
    truth.feature_tokens.push_back("d_sex_M");
    truth.feature_group.push_back(-1);
  }

  std::vector<EventRecord> events;
  std::vector<OutcomeLabel> labels;
  const double member_mass = params.membership_prob * static_cast<double>(c.n_latent_groups);
  char id_buf[32];

  for (std::size_t i = 0; i < c.n_subjects; ++i) {
    Rng rng = make_rng(c.seed, {i});
    std::snprintf(id_buf, sizeof(id_buf), "S%06zu", i);
    const std::string id = id_buf;
    const std::int64_t index_day = 20000 + uniform_int(rng, 0, 3650);

    int group = -1;
    const double u = uniform01(rng);
    if (u < member_mass) {
      group = std::min<int>(static_cast<int>(u / params.membership_prob),
                            static_cast<int>(c.n_latent_groups) - 1);
    }

    std::vector<EventRecord> mine;
    auto emit = [&](const FeatureSpec& spec, int bin, int count) {
      const std::int64_t lo = static_cast<std::int64_t>(bin) * kBinWidthDays;
      const std::int64_t hi = std::min<std::int64_t>(lo + kBinWidthDays - 1, kLookbackDays - 1);
      if (spec.family == Family::kBloodTestValue) {
        EventRecord e{id, index_day - uniform_int(rng, lo, hi), spec.family, spec.code,
                      static_cast<double>(count), std::nullopt};
        mine.push_back(std::move(e));
        return;
      }
      for (int n = 0; n < count; ++n) {
        mine.push_back({id, index_day - uniform_int(rng, lo, hi), spec.family, spec.code,
                        std::nullopt, std::nullopt});
      }
    };

    if (group >= 0) {
      std::poisson_distribution<int> member(params.group_rate + c.background_rate);
      for (std::size_t j : group_features[static_cast<std::size_t>(group)]) {
        for (int k = 0; k < kNumTimeBins; ++k) {
          if (const int n = member(rng); n > 0) emit(specs[j], k, n);
        }
      }
    }
    if (c.background_rate > 0.0) {
      std::poisson_distribution<int> background(c.background_rate);
      for (std::size_t j = 0; j < specs.size(); ++j) {
        if (specs[j].group == group) continue;
        for (int k = 0; k < kNumTimeBins; ++k) {
          if (const int n = background(rng); n > 0) emit(specs[j], k, n);
        }
      }
    }
    for (std::size_t h = 0; h < c.n_history; ++h) {
      if (uniform01(rng) < c.history_rate) {
        mine.push_back({id, index_day, Family::kHistoryOfDisease, diseases[h],
                        std::nullopt, std::nullopt});
      }
    }
    if (c.n_demographic >= 1) {
      mine.push_back({id, index_day, Family::kDemographic, "age",
                      static_cast<double>(uniform_int(rng, 50, 95)), std::nullopt});
    }
    if (c.n_demographic >= 2 && uniform01(rng) < 0.5) {
      mine.push_back({id, index_day, Family::kDemographic, "sex_M", std::nullopt,
                      std::nullopt});
    }

    const double risk =
        sigmoid(params.intercept + (group >= 0 ? weights[static_cast<std::size_t>(group)] : 0.0));
    Rng label_rng = make_rng(label_seed, {i, 0x1abe1});
    const bool is_event = uniform01(label_rng) < risk;

    if (mine.empty()) {
      truth.excluded_subjects.push_back(id);
      continue;
    }
    std::sort(mine.begin(), mine.end(), [](const EventRecord& a, const EventRecord& b) {
      return a.event_day < b.event_day;
    });
    OutcomeLabel label;
    label.subject_id = id;
    label.outcome_kind = c.outcome_kind;
    label.label = is_event ? LabelValue::kEvent : LabelValue::kControl;
    label.index_day = index_day;
    if (is_event) label.event_day = index_day + uniform_int(label_rng, 0, kMaxIndexOffsetDays);
    labels.push_back(std::move(label));
    truth.subject_ids.push_back(id);
    truth.subject_group.push_back(group);
    truth.subject_risk.push_back(risk);
    events.insert(events.end(), std::make_move_iterator(mine.begin()),
                  std::make_move_iterator(mine.end()));
  }
  out.cohort = Cohort(std::move(events), std::move(labels));
  return out;
}

CohortStats cohort_stats(const Cohort& cohort, OutcomeKind kind) {
  const auto labels = cohort.labels_for(kind);
  if (labels.empty()) throw ValidationError("empty cohort");
  CohortStats stats;
  stats.n_subjects = labels.size();

  const auto vocab = build_vocabulary(cohort, kind, false);
  stats.n_features = vocab.size();
  stats.sparsity = encode_sparse(cohort, kind, vocab).tensor.sparsity();

  const auto by_subject = cohort.events_by_subject();
  std::vector<double> lengths;
  std::size_t n_events = 0;
  for (const auto& l : labels) {
    n_events += l.is_event();
    const auto it = by_subject.find(l.subject_id);
    const auto doc = it == by_subject.end() ? SentenceDoc{}
                                            : encode_sentence(it->second, l.index_day);
    lengths.push_back(static_cast<double>(doc.tokens.size()));
  }
  const double n = static_cast<double>(lengths.size());
  stats.length_min = *std::min_element(lengths.begin(), lengths.end());
  stats.length_max = *std::max_element(lengths.begin(), lengths.end());
  double sum = 0.0;
  for (double x : lengths) sum += x;
  stats.length_mean = sum / n;
  double ss = 0.0;
  for (double x : lengths) ss += (x - stats.length_mean) * (x - stats.length_mean);
  stats.length_sd = std::sqrt(ss / n);
  stats.event_rate = static_cast<double>(n_events) / n;
  return stats;
}

}  // namespace ehrc
