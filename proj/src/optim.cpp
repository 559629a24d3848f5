#include "qregress/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "qregress/error.hpp"
#include "qregress/rng.hpp"

namespace qregress {
namespace {

double l2_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  CounterRng rng(seed, 0x73687566ULL + epoch);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

EpochRecord measure(const Objective& objective, std::span<const double> theta, std::size_t epoch,
                    std::span<const std::size_t> all_rows) {
  const BatchGradient full = objective.loss_and_gradient(theta, all_rows);
  EpochRecord r;
  r.epoch = epoch;
  r.train_mae = full.loss;
  r.grad_norm = l2_norm(full.grad);
  r.pl_ratio = full.loss > 0 ? pl_ratio(full.loss, r.grad_norm) : 0.0;
  r.test_mae = objective.test_loss(theta);
  return r;
}

bool record_finite(const EpochRecord& r) {
  return std::isfinite(r.train_mae) && std::isfinite(r.grad_norm) && std::isfinite(r.pl_ratio) &&
         (!r.test_mae || std::isfinite(*r.test_mae));
}

}  // namespace

void OptimizerConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw DomainError("optimizer: learning rate must be finite and non-negative");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
    throw DomainError("optimizer: Adam betas must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw DomainError("optimizer: epsilon must be positive");
  if (batch_size == 0) throw DomainError("optimizer: batch size must be positive");
}

std::vector<double> optimizer_step(std::span<const double> theta, std::span<const double> grad,
                                   OptimizerState& state, const OptimizerConfig& config) {
  if (theta.size() != grad.size())
    throw ShapeError("optimizer_step: parameter and gradient lengths differ");
  std::vector<double> next(theta.begin(), theta.end());
  ++state.step;
  if (config.kind == OptimizerKind::GD) {
    for (std::size_t i = 0; i < next.size(); ++i) next[i] -= config.learning_rate * grad[i];
    return next;
  }
  if (state.first_moment.size() != theta.size()) {
    state.first_moment.assign(theta.size(), 0.0);
    state.second_moment.assign(theta.size(), 0.0);
  }
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < next.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = config.beta1 * m + (1.0 - config.beta1) * grad[i];
    v = config.beta2 * v + (1.0 - config.beta2) * grad[i] * grad[i];
    next[i] -= config.learning_rate * (m / c1) / (std::sqrt(v / c2) + config.epsilon);
  }
  return next;
}

// ---------------------------------------------------------------------------

ModelObjective::ModelObjective(Model model, std::vector<SampleFeatures> features, RowMatrix targets,
                               std::vector<SampleFeatures> test_features, RowMatrix test_targets)
    : model_(std::move(model)),
      features_(std::move(features)),
      targets_(std::move(targets)),
      test_features_(std::move(test_features)),
      test_targets_(std::move(test_targets)) {
  if (features_.size() != static_cast<std::size_t>(targets_.rows()))
    throw ShapeError("ModelObjective: feature and target counts differ");
  if (test_features_.size() != static_cast<std::size_t>(test_targets_.rows()))
    throw ShapeError("ModelObjective: test feature and target counts differ");
  if (static_cast<std::size_t>(targets_.cols()) != model_.output_dim())
    throw ShapeError("ModelObjective: target width does not match the model output");
}

Model ModelObjective::model_at(std::span<const double> theta) const {
  Model m = model_;
  m.set_parameters(theta);
  return m;
}

BatchGradient ModelObjective::loss_and_gradient(std::span<const double> theta,
                                                std::span<const std::size_t> rows) const {
  return model_gradients(model_at(theta), features_, targets_, rows);
}

std::optional<double> ModelObjective::test_loss(std::span<const double> theta) const {
  if (test_features_.empty()) return std::nullopt;
  return evaluate_mae(model_at(theta), test_features_, test_targets_);
}

BatchGradient QuadraticObjective::loss_and_gradient(std::span<const double> theta,
                                                    std::span<const std::size_t>) const {
  if (theta.size() != dimension_) throw ShapeError("QuadraticObjective: dimension mismatch");
  BatchGradient out;
  out.grad.assign(theta.begin(), theta.end());
  for (double x : theta) out.loss += 0.5 * x * x;
  return out;
}

// ---------------------------------------------------------------------------

TrainState train(const Objective& objective, std::vector<double> theta0, const OptimizerConfig& config,
                 const TrainMonitors& monitors) {
  config.validate();
  if (objective.sample_count() == 0) throw SizeError("train: empty dataset");
  if (theta0.size() != objective.parameter_count())
    throw ShapeError("train: initial parameters do not match the objective");

  std::vector<std::size_t> all_rows(objective.sample_count());
  std::iota(all_rows.begin(), all_rows.end(), 0);

  TrainState state;
  state.params = std::move(theta0);
  state.initial = measure(objective, state.params, 0, all_rows);
  if (!record_finite(state.initial)) {
    state.aborted = true;
    state.diagnostic = "non-finite loss at initialisation";
    return state;
  }

  OptimizerState opt;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const auto order = shuffled(all_rows.size(), config.seed, epoch);
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + begin, end - begin);
      const BatchGradient g = objective.loss_and_gradient(state.params, batch);
      if (!std::isfinite(g.loss) || !all_finite(g.grad)) {
        state.aborted = true;
        state.diagnostic = "non-finite mini-batch loss or gradient in epoch " + std::to_string(epoch);
        return state;
      }
      state.params = optimizer_step(state.params, g.grad, opt, config);
    }
    EpochRecord r = measure(objective, state.params, epoch, all_rows);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!record_finite(r)) {
      state.aborted = true;
      state.diagnostic = "non-finite full-batch loss after epoch " + std::to_string(epoch);
      return state;
    }
    state.history.push_back(r);
    state.epoch = epoch;
    if (monitors.on_epoch) monitors.on_epoch(r);
  }
  return state;
}

double pl_ratio(double loss, double grad_norm) {
  if (!(loss > 0.0)) throw DomainError("pl_ratio: loss must be positive");
  return grad_norm * grad_norm / (2.0 * loss);
}

double kernel_min_eig(const Matrix& jacobian) {
  if (jacobian.rows() > 512)
    throw DomainError("tangent kernel limited to 512 stacked outputs, got " + std::to_string(jacobian.rows()));
  if (jacobian.rows() == 0) throw SizeError("tangent kernel: empty Jacobian");
  const Matrix kernel = jacobian * jacobian.transpose();
  return linalg::symmetric_eigen(kernel).values[0];
}

double tangent_kernel_min_eig(const Model& model, std::span<const SampleFeatures> features,
                              std::span<const std::size_t> rows) {
  if (rows.size() * model.output_dim() > 512)
    throw DomainError("tangent_kernel_min_eig: batch x output dim exceeds 512");
  return kernel_min_eig(model_jacobian(model, features, rows));
}

PLInitReport screen_initialization(Model& model, std::span<const SampleFeatures> features,
                                   const RowMatrix& targets, std::span<const std::size_t> kernel_rows,
                                   double mu_target, std::size_t max_attempts, std::uint64_t seed) {
  if (max_attempts == 0) throw DomainError("screen_initialization: need at least one attempt");
  if (!(mu_target > 0.0)) throw DomainError("screen_initialization: mu_target must be positive");
  PLInitReport report;
  report.mu_target = mu_target;
  report.lambda_min = -std::numeric_limits<double>::infinity();
  std::vector<double> best;
  for (std::size_t a = 0; a < max_attempts; ++a) {
    initialize_parameters(model, mix64(seed + a));
    const double lam = tangent_kernel_min_eig(model, features, kernel_rows);
    report.attempts = a + 1;
    if (lam > report.lambda_min) {
      report.lambda_min = lam;
      best = model.parameters();
    }
    if (lam >= mu_target) {
      report.accepted = true;
      break;
    }
  }
  model.set_parameters(best);
  report.initial_loss = evaluate_mae(model, features, targets);
  report.ball_radius = 2.0 * std::sqrt(2.0 * report.initial_loss) / mu_target;
  return report;
}

EnvelopeVerdict convergence_envelope(std::span<const double> losses, std::span<const double> pl_ratios,
                                     double mu_min, double slack) {
  if (losses.empty()) throw SizeError("convergence_envelope: empty history");
  if (!(mu_min > 0.0 && mu_min <= 1.0)) throw DomainError("convergence_envelope: mu_min must lie in (0, 1]");
  const std::size_t epochs = losses.size() - 1;
  if (pl_ratios.size() < epochs) throw ShapeError("convergence_envelope: missing PL ratios");
  EnvelopeVerdict v;
  v.mu_min = mu_min;
  v.slack = slack;
  const double l0 = losses[0];
  for (std::size_t t = 1; t <= epochs; ++t) {
    const bool agg = losses[t] <= slack * std::exp(-mu_min * static_cast<double>(t)) * l0;
    const bool step = losses[t] <= slack * std::max(0.0, 1.0 - pl_ratios[t - 1]) * losses[t - 1];
    v.aggregate_ok.push_back(agg);
    v.step_ok.push_back(step);
    if (!agg && v.holds) {
      v.holds = false;
      v.first_failure = t;
    }
    if (!step) v.per_step_holds = false;
  }
  return v;
}

EnvelopeVerdict convergence_envelope(const TrainState& state, double mu_min, double slack) {
  std::vector<double> losses{state.initial.train_mae};
  std::vector<double> ratios{state.initial.pl_ratio};
  for (const EpochRecord& r : state.history) {
    losses.push_back(r.train_mae);
    ratios.push_back(r.pl_ratio);
  }
  return convergence_envelope(losses, ratios, mu_min, slack);
}

double measured_mu_min(const TrainState& state) {
  double mu = std::numeric_limits<double>::infinity();
  if (state.initial.train_mae > 0) mu = state.initial.pl_ratio;
  for (std::size_t i = 0; i + 1 < state.history.size(); ++i)
    if (state.history[i].train_mae > 0) mu = std::min(mu, state.history[i].pl_ratio);
  return std::min(mu, 1.0);
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::GD ? "gd" : "adam"; }

OptimizerKind parse_optimizer_kind(const std::string& s) {
  if (s == "gd" || s == "sgd") return OptimizerKind::GD;
  if (s == "adam") return OptimizerKind::Adam;
  throw DomainError("unknown optimizer '" + s + "'");
}

}  // namespace qregress
