#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qregress/linalg.hpp"
#include "qregress/model.hpp"

namespace qregress {

enum class OptimizerKind { GD, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 50;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;

  /// Throws DomainError unless 0 < beta1, beta2 < 1, epsilon > 0, lr >= 0.
  void validate() const;
};

struct OptimizerState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;
};

/// One update. GD: theta - lr * grad. Adam: bias-corrected moment update.
std::vector<double> optimizer_step(std::span<const double> theta, std::span<const double> grad,
                                   OptimizerState& state, const OptimizerConfig& config);

/// Empirical risk over a fixed sample set, differentiable in theta.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual std::size_t parameter_count() const = 0;
  virtual std::size_t sample_count() const = 0;
  virtual BatchGradient loss_and_gradient(std::span<const double> theta,
                                          std::span<const std::size_t> rows) const = 0;
  /// Held-out loss, if the objective has a test set.
  virtual std::optional<double> test_loss(std::span<const double>) const { return std::nullopt; }
};

/// Mean MAE of a model over cached sample features.
class ModelObjective final : public Objective {
 public:
  ModelObjective(Model model, std::vector<SampleFeatures> features, RowMatrix targets,
                 std::vector<SampleFeatures> test_features = {}, RowMatrix test_targets = {});

  std::size_t parameter_count() const override { return model_.parameter_count(); }
  std::size_t sample_count() const override { return features_.size(); }
  BatchGradient loss_and_gradient(std::span<const double> theta,
                                  std::span<const std::size_t> rows) const override;
  std::optional<double> test_loss(std::span<const double> theta) const override;

  const Model& model() const noexcept { return model_; }
  Model model_at(std::span<const double> theta) const;

 private:
  Model model_;
  std::vector<SampleFeatures> features_;
  RowMatrix targets_;
  std::vector<SampleFeatures> test_features_;
  RowMatrix test_targets_;
};

/// L(theta) = 0.5 * ||theta||^2 for every sample; gradient theta.
class QuadraticObjective final : public Objective {
 public:
  QuadraticObjective(std::size_t dimension, std::size_t samples = 1)
      : dimension_(dimension), samples_(samples) {}
  std::size_t parameter_count() const override { return dimension_; }
  std::size_t sample_count() const override { return samples_; }
  BatchGradient loss_and_gradient(std::span<const double> theta,
                                  std::span<const std::size_t> rows) const override;

 private:
  std::size_t dimension_;
  std::size_t samples_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_mae = 0.0;  ///< full-batch training loss after the epoch
  std::optional<double> test_mae;
  double grad_norm = 0.0;  ///< full-batch ||grad L_S||_2
  double pl_ratio = 0.0;   ///< grad_norm^2 / (2 train_mae); 0 when the loss is exactly 0
  double seconds = 0.0;
};

struct TrainState {
  std::vector<double> params;
  std::size_t epoch = 0;
  EpochRecord initial;               ///< measurements at theta_0 (epoch 0)
  std::vector<EpochRecord> history;  ///< one row per completed epoch
  bool aborted = false;
  std::string diagnostic;
};

struct TrainMonitors {
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Mini-batch training with a per-epoch shuffle drawn from config.seed.
/// Stops early with aborted = true if a loss or gradient becomes non-finite.
TrainState train(const Objective& objective, std::vector<double> theta0,
                 const OptimizerConfig& config, const TrainMonitors& monitors = {});

/// Largest mu for which the PL inequality holds at a point with equality.
/// Throws DomainError if loss <= 0.
double pl_ratio(double loss, double grad_norm);

/// Smallest eigenvalue of J J^T. Throws DomainError for more than 512 rows.
double kernel_min_eig(const Matrix& jacobian);

/// lambda_min of the tangent kernel of the stacked model outputs over `rows`.
double tangent_kernel_min_eig(const Model& model, std::span<const SampleFeatures> features,
                              std::span<const std::size_t> rows);

struct PLInitReport {
  std::size_t attempts = 0;
  double lambda_min = 0.0;
  double mu_target = 0.0;
  bool accepted = false;
  double initial_loss = 0.0;
  double ball_radius = 0.0;  ///< 2 sqrt(2 L_S(theta_0)) / mu_target
};

/// Rejection sampling of initialisations: redraws parameters until the
/// tangent kernel on `kernel_rows` has lambda_min >= mu_target or
/// max_attempts is reached, in which case the best draw is kept.
PLInitReport screen_initialization(Model& model, std::span<const SampleFeatures> features,
                                   const RowMatrix& targets, std::span<const std::size_t> kernel_rows,
                                   double mu_target, std::size_t max_attempts, std::uint64_t seed);

struct EnvelopeVerdict {
  double mu_min = 0.0;
  double slack = 1.0;
  std::vector<bool> aggregate_ok;  ///< L_t <= slack exp(-mu_min t) L_0, t = 1..T
  std::vector<bool> step_ok;       ///< L_t <= slack (1 - mu_{t-1}) L_{t-1}, t = 1..T
  bool holds = true;               ///< all aggregate checks pass
  bool per_step_holds = true;
  std::optional<std::size_t> first_failure;  ///< epoch of the first aggregate failure
};

/// `losses` holds L_0..L_T and `pl_ratios` mu_0..mu_{T-1} (or longer).
/// Requires 0 < mu_min <= 1.
EnvelopeVerdict convergence_envelope(std::span<const double> losses, std::span<const double> pl_ratios,
                                     double mu_min, double slack);
EnvelopeVerdict convergence_envelope(const TrainState& state, double mu_min, double slack);

/// min over t < T of the recorded PL ratios with positive loss, capped at 1.
double measured_mu_min(const TrainState& state);

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(const std::string& s);

}  // namespace qregress
