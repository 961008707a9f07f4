#include "ncdetect/errors.hpp"
#include "ncdetect/pipeline.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <algorithm>
#include <fstream>
#include <iostream>

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct SynthArgs {
  std::string config;
  ncdetect::SynthRunConfig run;
  std::string out;
};

struct PoisonArgs {
  std::string config;
  ncdetect::PoisonRunConfig run;
  std::string input, out, manifest, position = "end";
};

struct EvaluateArgs {
  std::string config;
  ncdetect::EvaluateRunConfig run;
  std::string input, labels, out;
};

struct DetectOptions {
  std::string config_file;
  std::string input;
  std::string labels;
  std::string out_dir;
  std::string features = "all";
  ncdetect::DetectConfig config;
};

// CLI11 only reads config files for the top-level app, so each subcommand
// loads its own: flat `key = value` lines naming long options, applied to the
// options the command line left unset.
void apply_config(CLI::App* sub, const std::string& path) {
  if (path.empty()) return;
  std::ifstream in(path);
  if (!in) throw ncdetect::DataError("cannot read config file " + path);
  for (const auto& item : CLI::ConfigINI().from_config(in)) {
    if (item.name == "++" || item.name == "--") continue;
    if (!item.parents.empty()) throw ncdetect::DataError(path + ": sections are not supported (" + item.fullname() + ")");
    std::string name = item.name;
    std::replace(name.begin(), name.end(), '_', '-');
    auto* opt = sub->get_option_no_throw("--" + name);
    if (opt == nullptr || name == "config")
      throw ncdetect::DataError(path + ": unknown key '" + item.name + "' for " + sub->get_name());
    if (opt->count() > 0) continue;
    for (const auto& v : item.inputs) opt->add_result(v);
    opt->run_callback();
  }
}

void add_common(CLI::App* sub, std::uint64_t& seed, std::string& config) {
  sub->add_option("--config", config, "Key-value config file (flags override it)")->check(CLI::ExistingFile);
  sub->add_option("--seed", seed, "Global seed")->capture_default_str();
}

void add_detect(CLI::App& app, DetectOptions& o) {
  auto* sub = app.add_subcommand("detect", "Search for a backdoor cluster in the positive class");
  auto& c = o.config;
  add_common(sub, c.tuner.seed, o.config_file);
  sub->add_option("--input", o.input, "Embeddings (.nceb or id,f0,... CSV)")->required()->check(CLI::ExistingFile);
  sub->add_option("--labels", o.labels, "Labels sidecar (default: <input stem>.labels.csv)");
  sub->add_option("--out-dir", o.out_dir, "Directory for report.json and CSV outputs")->required();
  sub->add_option("--threads", c.tuner.threads, "Worker threads for the grid")->capture_default_str()
      ->check(CLI::PositiveNumber);
  sub->add_option("--q", c.grid.q_values, "Initial neural activity grid")->capture_default_str();
  sub->add_option("--b", c.grid.b_values, "Discrimination threshold grid")->capture_default_str();
  sub->add_option("--epsilon", c.grid.epsilon_values, "Noise intensity grid")->capture_default_str();
  sub->add_option("--max-iters", c.tuner.max_iters, "Iteration cap per neuron")->capture_default_str();
  sub->add_option("--features", o.features, "Neurochaos features: all or a subset of time,rate,energy,entropy")
      ->capture_default_str();
  sub->add_option("--umap-neighbors", c.tuner.umap.n_neighbors)->capture_default_str();
  sub->add_option("--umap-min-dist", c.tuner.umap.min_dist)->capture_default_str();
  sub->add_option("--umap-epochs", c.tuner.umap.n_epochs)->capture_default_str();
  sub->add_option("--umap-negative-samples", c.tuner.umap.negative_samples)->capture_default_str();
  sub->add_option("--dbscan-eps", c.tuner.dbscan.eps)->capture_default_str();
  sub->add_option("--dbscan-min-samples", c.tuner.dbscan.min_samples, "0 = max(5, ceil(0.005 m))")
      ->capture_default_str();
  sub->add_option("--suspicion-ratio", c.suspicion_ratio, "Largest cluster share that can be flagged")
      ->capture_default_str();
  sub->add_option("--alpha", c.pds.alpha, "Graphical lasso penalty")->capture_default_str();
  sub->add_option("--condition-limit", c.pds.condition_limit)->capture_default_str();
  sub->add_option("--variance-floor", c.pds.variance_floor)->capture_default_str();

  sub->callback([&o, sub] {
    apply_config(sub, o.config_file);
    auto& cfg = o.config;
    cfg.tuner.feature_mask = ncdetect::parse_feature_mask(o.features);
    const auto data = o.labels.empty() ? ncdetect::load_embeddings(o.input)
                                       : ncdetect::load_embeddings(o.input, o.labels);
    if (!data.has_labels())
      throw ncdetect::DataError("detect: no labels for " + o.input + " (expected " +
                                ncdetect::labels_sidecar_path(o.input).string() + ")");
    const auto result = ncdetect::run_detect(data, cfg);
    const auto artifacts = ncdetect::render_detect(result, data, cfg, o.input);
    ncdetect::write_detect_artifacts(artifacts, o.out_dir);
    std::cout << "verdict: " << ncdetect::to_string(result.verdict) << "\n"
              << "best: " << result.tune.best.describe() << " chi=" << ncdetect::format_double(result.tune.best_chi)
              << "\nflagged: " << result.flagged_rows.size() << " of " << result.positive_rows.size()
              << " positive samples\n";
    if (result.recall) std::cout << "recall vs flags: " << *result.recall << "\n";
    if (result.precision) std::cout << "precision vs flags: " << *result.precision << "\n";
    std::cout << "wrote " << o.out_dir << "/{report.json,tuning_log.csv,projection.csv,histograms.csv}\n";
  });
}

void add_synth(CLI::App& app, SynthArgs& a) {
  auto* sub = app.add_subcommand("synth", "Write a synthetic labeled embedding set");
  auto& o = a.run;
  add_common(sub, o.spec.seed, a.config);
  sub->add_option("--n-pos", o.spec.n_pos)->capture_default_str();
  sub->add_option("--n-neg", o.spec.n_neg)->capture_default_str();
  sub->add_option("--n-poison", o.spec.n_poison, "Extra shifted negatives labeled positive")->capture_default_str();
  sub->add_option("--dims", o.spec.dims)->capture_default_str();
  sub->add_option("--shift", o.spec.shift, "Trigger shift along axis 1")->capture_default_str();
  sub->add_option("--out", a.out, "Output .nceb (labels sidecar is written next to it)")->required();
  sub->callback([&a, sub] {
    apply_config(sub, a.config);
    auto& o = a.run;
    o.out = a.out;
    ncdetect::run_synth(o);
    std::cout << "wrote " << o.out.string() << " and " << ncdetect::labels_sidecar_path(o.out).string() << "\n";
  });
}

void add_poison(CLI::App& app, PoisonArgs& a) {
  auto* sub = app.add_subcommand("poison", "Plant a static trigger in a fraction of negative samples");
  auto& o = a.run;
  add_common(sub, o.seed, a.config);
  sub->add_option("--input", a.input, "id,text,label CSV or embeddings with labels sidecar")->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--out", a.out, "Poisoned output (.csv for text, .nceb for embeddings)")->required();
  sub->add_option("--manifest", a.manifest, "Manifest path (default: manifest.json next to --out)");
  sub->add_option("--ratio", o.ratio, "Share of the whole dataset to poison")->capture_default_str();
  sub->add_option("--trigger", o.trigger, "Trigger word or phrase (text mode)")->capture_default_str();
  sub->add_option("--position", a.position, "start, end or random")->capture_default_str();
  sub->add_option("--embed-dims", o.embed_dims, "Also hash-embed the poisoned text into this many dimensions")
      ->capture_default_str();
  sub->add_option("--shift", o.shift, "Shift magnitude (embedding mode)")->capture_default_str();
  sub->add_option("--shift-axis", o.shift_axis, "Shift axis (embedding mode)")->capture_default_str();
  sub->callback([&a, sub] {
    apply_config(sub, a.config);
    auto& o = a.run;
    o.input = a.input;
    o.out = a.out;
    o.manifest = a.manifest;
    o.position = ncdetect::parse_trigger_position(a.position);
    const auto m = ncdetect::run_poison(o);
    std::cout << "poisoned " << m.poisoned_ids.size() << " samples; wrote " << o.out.string() << "\n";
  });
}

void add_evaluate(CLI::App& app, EvaluateArgs& a) {
  auto* sub = app.add_subcommand("evaluate", "Train a linear classifier and measure attack success");
  auto& o = a.run;
  add_common(sub, o.seed, a.config);
  sub->add_option("--input", a.input, "Poisoned embeddings")->required()->check(CLI::ExistingFile);
  sub->add_option("--labels", a.labels, "Labels sidecar with a poisoned column");
  sub->add_option("--out", a.out, "AttackReport JSON path");
  sub->add_option("--epochs", o.train.epochs)->capture_default_str();
  sub->add_option("--lr", o.train.learning_rate)->capture_default_str();
  sub->add_option("--holdout", o.holdout, "Held-out share of each group")->capture_default_str();
  sub->callback([&a, sub] {
    apply_config(sub, a.config);
    auto& o = a.run;
    o.input = a.input;
    o.labels = a.labels;
    o.out = a.out;
    o.train.seed = o.seed;
    const auto report = ncdetect::run_evaluate(o);
    std::cout << ncdetect::attack_report_json(report);
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neurochaos backdoor-trigger detection toolkit"};
  app.require_subcommand(1);

  DetectOptions detect;
  SynthArgs synth;
  synth.run.spec = {400, 400, 40, 16, 5.0, 0};
  PoisonArgs poison;
  EvaluateArgs evaluate;
  add_detect(app, detect);
  add_synth(app, synth);
  add_poison(app, poison);
  add_evaluate(app, evaluate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  } catch (const ncdetect::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const ncdetect::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
