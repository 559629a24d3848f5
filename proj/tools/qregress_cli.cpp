// qregress command-line runner.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "qregress/data.hpp"
#include "qregress/experiment.hpp"

namespace {

using namespace qregress;

ExperimentConfig load_config(const std::string& path, const std::optional<std::uint64_t>& seed,
                             const std::optional<std::string>& out) {
  Config raw = Config::load(path);
  if (seed) raw.set("seed", std::to_string(*seed));
  if (out) raw.set("output.dir", *out);
  return experiment_config(raw);
}

std::string default_fixture(const std::string& name) {
  return (std::filesystem::path(QREGRESS_SOURCE_DIR) / "tests" / "fixtures" / name).string();
}

std::uint64_t fnv1a(const RowMatrix& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const auto byte = static_cast<std::uint64_t>(std::lround(m.data()[i] * 255.0));
    h = (h ^ byte) * 0x100000001b3ULL;
  }
  return h;
}

int cmd_train(const std::string& config, const std::optional<std::uint64_t>& seed,
              const std::optional<std::string>& out) {
  const ExperimentConfig cfg = load_config(config, seed, out);
  const RunOutput run = run_experiment(cfg);
  write_run(run, cfg.output_dir);
  const auto& r = run.report;
  std::printf("train_mae %.6f", r.final_train_mae);
  if (r.final_test_mae) std::printf(" test_mae %.6f", *r.final_test_mae);
  std::printf(" epochs %zu params %zu -> %s\n", r.state.history.size(), r.norms.parameter_count,
              cfg.output_dir.c_str());
  if (r.state.aborted) {
    std::fprintf(stderr, "error: training aborted: %s\n", r.state.diagnostic.c_str());
    return 1;
  }
  return 0;
}

int cmd_eval(const std::string& config, const std::string& checkpoint, const std::vector<std::string>& noise,
             const std::optional<std::uint64_t>& seed) {
  ExperimentConfig cfg = load_config(config, seed, std::nullopt);
  if (!noise.empty()) {
    cfg.data.test_conditions.clear();
    for (const auto& n : noise) cfg.data.test_conditions.push_back(parse_condition(n));
  }
  const Model model = load_checkpoint(checkpoint);
  cfg.model = model.config();
  const ExperimentData data = build_data(cfg);
  for (const auto& c : evaluate_conditions(model, cfg, data)) std::printf("%s %.6f\n", c.name.c_str(), c.mae);
  return 0;
}

int cmd_sweep(const std::string& config, const std::string& axis, const std::optional<std::uint64_t>& seed,
              const std::optional<std::string>& out, const std::optional<std::string>& checkpoint) {
  const ExperimentConfig cfg = load_config(config, seed, out);
  const SweepOutput result = run_sweep(cfg, parse_sweep_axis(axis), cfg.output_dir, checkpoint);
  std::fputs(result.csv.c_str(), stdout);
  return 0;
}

int cmd_theory(const std::string& config, const std::string& checkpoint, const std::optional<std::uint64_t>& seed,
               const std::optional<std::string>& out) {
  ExperimentConfig cfg = load_config(config, seed, std::nullopt);
  const Model model = load_checkpoint(checkpoint);
  cfg.model = model.config();
  const ExperimentData data = build_data(cfg);
  const double train_mae = evaluate_mae(model, extract_features(model, data.train.inputs), data.train.targets);
  std::optional<double> test_mae;
  if (!data.tests.empty()) test_mae = evaluate_conditions(model, cfg, data).front().mae;
  const std::string json = theory_report_json(theory_for(model, cfg, data, train_mae, test_mae));
  std::fputs(json.c_str(), stdout);
  if (out) {
    std::filesystem::create_directories(*out);
    std::FILE* f = std::fopen((std::filesystem::path(*out) / "theory.json").c_str(), "wb");
    if (!f) throw IoError("cannot write theory.json in '" + *out + "'");
    std::fputs(json.c_str(), f);
    std::fclose(f);
  }
  return 0;
}

int cmd_fixture(const std::string& images, const std::string& labels) {
  const RegressionDataset d = load_mnist_idx(images, labels.empty() ? std::nullopt : std::optional(labels));
  std::printf("images %zu\npixels %td\nchecksum %016llx\n", d.size(), d.inputs.cols(),
              static_cast<unsigned long long>(fnv1a(d.inputs)));
  if (!d.labels.empty()) {
    std::printf("labels");
    for (auto l : d.labels) std::printf(" %d", l);
    std::printf("\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tensor-train + variational quantum circuit regression toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  std::string config;
  std::string checkpoint;
  std::string axis;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::vector<std::string> noise;
  std::string images = default_fixture("mnist10-images-idx3-ubyte");
  std::string labels = default_fixture("mnist10-labels-idx1-ubyte");

  auto* train = app.add_subcommand("train", "Train one configuration; writes history.csv, report.json, checkpoint.json");
  train->add_option("--config", config, "Config file")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "Override the top-level seed");
  train->add_option("--out", out, "Output directory");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the configured test conditions");
  eval->add_option("--config", config, "Config file (data section)")->required()->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--noise", noise, "Test condition(s): none or kind:snr_db, e.g. gaussian:8");
  eval->add_option("--seed", seed, "Override the top-level seed");

  auto* sweep = app.add_subcommand("sweep", "Run a sweep and write sweep.csv and sweep_summary.json");
  sweep->add_option("--config", config, "Base config file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--axis", axis, "Sweep axis")->required()->check(CLI::IsMember({"qubits", "shots", "train-size", "snr"}));
  sweep->add_option("--seed", seed, "Override the top-level seed");
  sweep->add_option("--out", out, "Output directory");
  std::optional<std::string> sweep_checkpoint;
  sweep->add_option("--checkpoint", sweep_checkpoint, "Checkpoint for the shots axis")->check(CLI::ExistingFile);

  auto* theory = app.add_subcommand("theory-report", "Bound terms for a checkpoint on the configured dataset");
  theory->add_option("--config", config, "Config file (data and theory sections)")->required()->check(CLI::ExistingFile);
  theory->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  theory->add_option("--seed", seed, "Override the top-level seed");
  theory->add_option("--out", out, "Directory for theory.json");

  auto* fixture = app.add_subcommand("fixture-check", "Parse the bundled IDX fixture and print a checksum");
  fixture->add_option("--images", images, "IDX image file");
  fixture->add_option("--labels", labels, "IDX label file (empty to skip)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train) return cmd_train(config, seed, out);
    if (*eval) return cmd_eval(config, checkpoint, noise, seed);
    if (*sweep) return cmd_sweep(config, axis, seed, out, sweep_checkpoint);
    if (*theory) return cmd_theory(config, checkpoint, seed, out);
    if (*fixture) return cmd_fixture(images, labels);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
