#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qregress/config.hpp"
#include "qregress/data.hpp"
#include "qregress/error.hpp"
#include "qregress/model.hpp"
#include "qregress/optim.hpp"
#include "qregress/theory.hpp"

namespace qregress {

/// Failure inside one stage of an experiment (config, data, init, train,
/// evaluate, theory, output).
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

enum class DataSource { Mnist, Synthetic };

struct TestCondition {
  std::string name;  ///< "none", "gaussian:8", ...
  NoiseSpec noise;
};

/// Parses "none" or "<kind>:<snr_db>".
TestCondition parse_condition(const std::string& text);

struct DataConfig {
  DataSource source = DataSource::Mnist;
  std::string images;
  std::optional<std::string> labels;
  std::size_t train_size = 2000;
  std::size_t test_size = 500;
  std::uint64_t seed = 1;
  TestCondition train_noise{"gaussian:15", NoiseSpec::gaussian(15.0, 0)};
  PowerScope power_scope = PowerScope::PerImage;
  std::vector<TestCondition> test_conditions;  ///< the first one feeds the history
  SyntheticTarget synthetic_target = SyntheticTarget::Teacher;
  std::uint64_t synthetic_target_seed = 7;
};

struct PLConfig {
  bool screen = false;
  double mu_target = 0.05;
  std::size_t max_attempts = 50;
  std::size_t kernel_batch = 8;
  double slack = 1.2;
};

struct TheoryConfig {
  std::optional<double> c1 = 1.0;
  std::optional<double> c2 = 1.0;
  std::optional<double> linear_norm;  ///< default 2^(U/2)
  bool zero_training_error = false;
  std::size_t rademacher_draws = 0;  ///< 0 skips the Monte-Carlo estimate
  std::size_t rademacher_steps = 200;
  std::size_t rademacher_samples = 256;
};

struct SweepConfig {
  std::vector<double> values;  ///< empty: axis defaults
  std::size_t trials = 200;
  std::map<std::size_t, std::vector<std::size_t>> channel_out;  ///< per qubit count
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  ModelConfig model;
  OptimizerConfig optimizer;
  DataConfig data;
  std::optional<std::uint64_t> shots;  ///< evaluation only; training is exact
  std::uint64_t measure_seed = 1;
  PLConfig pl;
  TheoryConfig theory;
  SweepConfig sweep;
  std::string output_dir = "runs/default";
  std::string base_dir;  ///< for resolving relative paths
};

/// Every key accepted by experiment_config.
const std::vector<std::string>& config_keys();

/// Resolves defaults and validates. Throws StageError("config", ...).
ExperimentConfig experiment_config(const Config& config);
/// Canonical key/value form of a resolved config (the report echo).
Config to_config(const ExperimentConfig& config);

struct ExperimentData {
  RegressionDataset train;  ///< noisy inputs, clean targets
  std::vector<TestCondition> conditions;
  std::vector<RegressionDataset> tests;  ///< one per condition
};

ExperimentData build_data(const ExperimentConfig& config);
Model build_model(const ExperimentConfig& config, const ExperimentData& data);

struct ConditionResult {
  std::string name;
  double mae = 0.0;
};

struct RunReport {
  ExperimentConfig config;
  TrainState state;
  double final_train_mae = 0.0;
  std::optional<double> final_test_mae;
  std::vector<ConditionResult> conditions;
  ModelNorms norms;
  double linear_norm = 0.0;
  double dataset_power = 0.0;
  std::optional<PLInitReport> pl_init;
  std::optional<EnvelopeVerdict> envelope;
  TheoryReport theory;
  std::string history_file = "history.csv";
  double seconds = 0.0;
};

struct RunOutput {
  RunReport report;
  Model model;
};

/// data -> model (optionally screened) -> training -> evaluation -> theory.
RunOutput run_experiment(const ExperimentConfig& config);

/// JSON report; the `timing` object is the only non-deterministic part.
std::string report_to_json(const RunReport& report);
std::string theory_report_json(const TheoryReport& report);
/// Writes report.json, history.csv and checkpoint.json into `dir`.
void write_run(const RunOutput& run, const std::string& dir);

/// CSV with columns epoch,train_mae,test_mae,grad_norm,pl_ratio,seconds.
void emit_history(const TrainState& state, const std::string& path);
std::string history_to_csv(const std::vector<EpochRecord>& history);
std::vector<EpochRecord> parse_history(const std::string& csv);
std::vector<EpochRecord> load_history(const std::string& path);

/// Evaluates `model` on every test condition of the config.
std::vector<ConditionResult> evaluate_conditions(const Model& model, const ExperimentConfig& config,
                                                 const ExperimentData& data);

/// Bound report for a model on the configured training data.
TheoryReport theory_for(const Model& model, const ExperimentConfig& config, const ExperimentData& data,
                        double train_mae, std::optional<double> test_mae);

enum class SweepAxis { Qubits, Shots, TrainSize, Snr };
SweepAxis parse_sweep_axis(const std::string& s);
std::string to_string(SweepAxis axis);

struct SweepOutput {
  std::string csv;      ///< combined table
  std::string summary;  ///< JSON computed from the parsed table
};

/// Runs the sweep and writes sweep.csv and sweep_summary.json into `dir`.
SweepOutput run_sweep(const ExperimentConfig& base, SweepAxis axis, const std::string& dir,
                      const std::optional<std::string>& checkpoint = std::nullopt);

/// Summary JSON for a sweep table (per-condition series; shot fit).
std::string summarize_sweep(const std::string& csv, std::size_t qubits);

/// Balanced factorisation of U over the channel dims, largest factor on the
/// largest mode.
std::vector<std::size_t> default_channel_out(std::size_t qubits, const std::vector<std::size_t>& dims);

std::string resolve_path(const std::string& path, const std::string& base_dir);

}  // namespace qregress
