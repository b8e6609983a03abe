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

// ehrc: command line front end. Exit codes: 0 ok, 2 bad input or config,
// 3 runtime failure.

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ehrc/io.h"
#include "ehrc/pipeline.h"
#include "ehrc/synth.h"

namespace {

using namespace ehrc;

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

struct RunOptions {
  std::string config;
  std::vector<std::string> sets;
  std::string events;
  std::string labels;
  std::string output;
  std::string outcome;
  std::optional<std::uint64_t> seed;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("-c,--config", o.config, "Run config file (key = value lines)");
  cmd->add_option("--set", o.sets, "Override one setting, KEY=VALUE; repeatable");
  cmd->add_option("--events", o.events, "Event CSV");
  cmd->add_option("--labels", o.labels, "Label CSV");
  cmd->add_option("-o,--out", o.output, "Output directory");
  cmd->add_option("--outcome", o.outcome, "sudden_death or all_cause_mortality");
  cmd->add_option("--seed", o.seed, "Master seed");
}

std::pair<std::string, std::string> split_setting(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set expects KEY=VALUE, got '" + s + "'");
  }
  return {s.substr(0, eq), s.substr(eq + 1)};
}

// Defaults, then the config file, then --set, then the dedicated flags.
RunConfig build_run_config(const RunOptions& o) {
  RunConfig c;
  if (!o.config.empty()) {
    const std::filesystem::path path(o.config);
    c = parse_run_config(read_text_file(path), path.parent_path());
  }
  for (const auto& s : o.sets) {
    const auto [k, v] = split_setting(s);
    apply_run_setting(c, k, v);
  }
  if (!o.events.empty()) c.events = o.events;
  if (!o.labels.empty()) c.labels = o.labels;
  if (!o.output.empty()) c.output_dir = o.output;
  if (!o.outcome.empty()) c.outcome = parse_outcome(o.outcome);
  if (o.seed) c.seed = *o.seed;
  c.validate(true);
  return c;
}

void print_agreement(const Pipeline& p) {
  if (!p.agreement()) return;
  std::cout << "mean raw agreement " << format_double(mean_off_diagonal(p.agreement()->raw))
            << '\n';
  if (p.agreement()->clustered) {
    std::cout << "mean clustered agreement "
              << format_double(mean_off_diagonal(*p.agreement()->clustered)) << '\n';
  }
}

int run_synth(const std::string& config_path, const std::vector<std::string>& sets,
              const std::string& out, std::optional<std::uint64_t> seed) {
  SynthConfig c;
  if (!config_path.empty()) c = parse_synth_config(read_text_file(config_path));
  for (const auto& s : sets) {
    const auto [k, v] = split_setting(s);
    apply_synth_setting(c, k, v);
  }
  if (seed) c.seed = *seed;
  c.validate();
  const SyntheticCohort sc = generate_cohort(c);
  const std::filesystem::path dir(out);
  std::ostringstream ev;
  write_events(ev, sc.cohort.events());
  write_text_file(dir / "events.csv", ev.str());
  std::ostringstream lb;
  write_labels(lb, sc.cohort.labels());
  write_text_file(dir / "labels.csv", lb.str());
  std::ostringstream truth;
  sc.truth.write(truth);
  write_text_file(dir / "truth.txt", truth.str());
  const CohortStats s = cohort_stats(sc.cohort, c.outcome_kind);
  std::ostringstream stats;
  stats << "n_subjects\t" << s.n_subjects << "\nn_features\t" << s.n_features << "\nsparsity\t"
        << format_double(s.sparsity) << "\nlength_mean\t" << format_double(s.length_mean)
        << "\nlength_sd\t" << format_double(s.length_sd) << "\nevent_rate\t"
        << format_double(s.event_rate) << '\n';
  write_text_file(dir / "stats.tsv", stats.str());
  std::cout << "wrote " << sc.cohort.labels().size() << " subjects, "
            << sc.cohort.events().size() << " events to " << dir.string() << '\n';
  std::cout << "sparsity " << format_double(s.sparsity) << '\n';
  return 0;
}

struct IngestArgs {
  std::string labs, admissions, prescriptions, demographics, outcomes;
  std::string rules, history_codes, outcome = "sudden_death", out;
  std::vector<std::string> terminal_prefixes{"C78", "C79"};
  int bnf_length = 4;
  std::uint64_t seed = 1;
};

template <typename Fn>
auto read_optional(const std::string& path, Fn fn) {
  using T = decltype(fn(std::declval<std::istream&>()));
  if (path.empty()) return T{};
  std::istringstream in(read_text_file(path));
  try {
    return fn(in);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

int run_ingest(const IngestArgs& a) {
  RawExtract raw;
  raw.labs = read_optional(a.labs, [](std::istream& in) { return read_lab_rows(in); });
  raw.admissions =
      read_optional(a.admissions, [](std::istream& in) { return read_admission_rows(in); });
  raw.prescriptions =
      read_optional(a.prescriptions, [](std::istream& in) { return read_prescription_rows(in); });
  raw.demographics =
      read_optional(a.demographics, [](std::istream& in) { return read_demographic_rows(in); });
  raw.outcomes = read_optional(a.outcomes, [](std::istream& in) { return read_outcome_rows(in); });
  IngestOptions opts;
  opts.outcome = parse_outcome(a.outcome);
  if (!a.rules.empty()) opts.lab_rules = load_lab_rules(a.rules);
  if (!a.history_codes.empty()) opts.disease_codes = parse_disease_codes(read_text_file(a.history_codes));
  opts.terminal_prefixes = a.terminal_prefixes;
  opts.bnf_length = a.bnf_length;
  opts.seed = a.seed;
  const IngestResult r = ingest_raw(raw, opts);
  const std::filesystem::path dir(a.out);
  std::ostringstream ev;
  write_events(ev, r.cohort.events());
  write_text_file(dir / "events.csv", ev.str());
  std::ostringstream lb;
  write_labels(lb, r.cohort.labels());
  write_text_file(dir / "labels.csv", lb.str());
  write_text_file(dir / "ingest_report.json", ingest_report_json(r));
  std::cout << "wrote " << r.cohort.labels().size() << " subjects, " << r.cohort.events().size()
            << " events; excluded " << r.excluded.size() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Risk predictors over longitudinal event records and agreement of their "
               "feature rankings"};
  app.require_subcommand(1);

  // synth
  std::string synth_config;
  std::vector<std::string> synth_sets;
  std::string synth_out;
  std::optional<std::uint64_t> synth_seed;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort");
  synth->add_option("-c,--config", synth_config, "Synth config file (key = value lines)");
  synth->add_option("--set", synth_sets, "Override one setting, KEY=VALUE; repeatable");
  synth->add_option("-o,--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Generator seed");

  // ingest
  IngestArgs ingest_args;
  auto* ingest = app.add_subcommand("ingest", "Clean raw extracts into event and label files");
  ingest->add_option("--labs", ingest_args.labs, "subject_id,day,name,value,unit");
  ingest->add_option("--admissions", ingest_args.admissions,
                     "subject_id,admit_day,discharge_day,diagnoses");
  ingest->add_option("--prescriptions", ingest_args.prescriptions, "subject_id,day,bnf_code");
  ingest->add_option("--demographics", ingest_args.demographics, "subject_id,day,age,sex");
  ingest->add_option("--outcomes", ingest_args.outcomes,
                     "subject_id,status,event_day,observation_start,observation_end")
      ->required();
  ingest->add_option("--rules", ingest_args.rules, "Lab cleaning rules (JSON)");
  ingest->add_option("--history-codes", ingest_args.history_codes,
                     "Disease to ICD-10 prefix map (JSON)");
  ingest->add_option("--outcome", ingest_args.outcome, "sudden_death or all_cause_mortality");
  ingest->add_option("--terminal-prefixes", ingest_args.terminal_prefixes,
                     "Terminal illness code prefixes")
      ->delimiter(',');
  ingest->add_option("--bnf-length", ingest_args.bnf_length, "BNF truncation length");
  ingest->add_option("--seed", ingest_args.seed, "Index date seed");
  ingest->add_option("-o,--out", ingest_args.out, "Output directory")->required();

  // Staged commands share the run options.
  RunOptions run_opts;
  std::string compare_dir;
  std::string reg_name;
  std::string reg_scores;
  std::string reg_importance;
  std::vector<CLI::App*> staged;
  for (const auto& [name, help] : std::vector<std::pair<std::string, std::string>>{
           {"encode", "Write vocabularies, the sparse tensor and sentences"},
           {"train", "k-fold evaluation and final fits"},
           {"interpret", "Global feature importance of the trained models"},
           {"cluster", "Co-cluster features and subjects"},
           {"consensus", "Agreement between the models' feature rankings"},
           {"ablate", "Feature-family ablation"},
           {"pipeline", "Every stage plus summary.json"},
           {"register-scores", "Add an external model to the consensus step"}}) {
    auto* cmd = app.add_subcommand(name, help);
    add_run_options(cmd, run_opts);
    staged.push_back(cmd);
  }
  app.get_subcommand("consensus")
      ->add_option("--compare", compare_dir, "Output directory of a run on another outcome");
  auto* reg = app.get_subcommand("register-scores");
  reg->add_option("--name", reg_name, "Model name")->required();
  reg->add_option("--scores", reg_scores, "subject_id score lines")->required();
  reg->add_option("--importance", reg_importance, "token score lines in vocabulary order")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (synth->parsed()) return run_synth(synth_config, synth_sets, synth_out, synth_seed);
    if (ingest->parsed()) return run_ingest(ingest_args);

    const RunConfig config = build_run_config(run_opts);
    if (reg->parsed()) {
      const RegistrationResult r = register_scores(config, reg_name, reg_scores, reg_importance);
      std::cout << "registered " << r.name << " -> " << r.importance_path.string() << '\n';
      if (r.metrics.auc) std::cout << "auc " << format_double(*r.metrics.auc) << '\n';
      return 0;
    }
    Pipeline p(config);
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "pipeline") {
      p.run_all();
      print_agreement(p);
      std::cout << "summary " << (config.output_dir / "summary.json").string() << '\n';
    } else if (cmd == "encode") {
      p.ingest();
      p.encode();
    } else if (cmd == "train") {
      p.train();
    } else if (cmd == "interpret") {
      p.interpret();
    } else if (cmd == "cluster") {
      p.cluster();
    } else if (cmd == "consensus") {
      p.consensus(compare_dir.empty() ? std::nullopt
                                      : std::optional<std::filesystem::path>(compare_dir));
      print_agreement(p);
    } else if (cmd == "ablate") {
      p.ablate();
    }
    for (const auto& a : p.artifacts().manifest()) std::cout << "wrote " << a.path << '\n';
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << '\n';
    return kExitRuntime;
  }
}
