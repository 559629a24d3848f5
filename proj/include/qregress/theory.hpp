#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "qregress/linalg.hpp"
#include "qregress/qsim.hpp"

namespace qregress {

/// max_n ||x_n||_2 over the rows of `inputs`. Throws SizeError when empty.
double dataset_power(const Matrix& inputs);
double dataset_power(const RowMatrix& inputs);

/// (2P / sqrt(N)) * sqrt(sum_k Lambda_k^2) + 2 P Lambda' / sqrt(N).
double rademacher_bound(double power, std::span<const double> channel_norms, double linear_norm,
                        std::size_t samples);

enum class ChannelActivation { Identity, CenteredSigmoid };

/// Scalar-output family f(x) = sum_k phi(w_k . x[B_k]) + w' . x with
/// ||w_k|| <= Lambda_k and ||w'|| <= Lambda'. The blocks B_k partition the
/// input coordinates in order; phi is the identity or sigmoid(t) - 1/2.
struct RademacherFamily {
  std::vector<std::size_t> block_sizes;
  std::vector<double> channel_norms;
  double linear_norm = 0.0;
  ChannelActivation activation = ChannelActivation::Identity;
};

struct AscentConfig {
  std::size_t steps = 200;
  double step_size = 0.1;  ///< relative to each ball radius
};

struct RademacherEstimate {
  double mean = 0.0;
  std::vector<double> per_draw;
};

/// Rademacher signs used for draw `draw`; shared with closed-form checks.
std::vector<double> rademacher_signs(std::size_t samples, std::uint64_t seed, std::uint64_t draw);

/// Monte-Carlo estimate of the empirical Rademacher complexity of `family`
/// on the rows of `inputs`. The supremum for each sign vector is approached
/// by projected normalised gradient ascent, so the result is a lower
/// estimate of the true complexity.
RademacherEstimate empirical_rademacher(const RademacherFamily& family, const Matrix& inputs,
                                        std::size_t draws, const AscentConfig& ascent, std::uint64_t seed);

/// Lambda * ||sum_n eps_n x_n||_2 / N.
double linear_family_sup(const Matrix& inputs, std::span<const double> signs, double norm);

inline constexpr std::uint64_t kInfiniteShots = std::numeric_limits<std::uint64_t>::max();

struct ScalingPoint {
  double qubits = 0.0;
  double shots = 0.0;  ///< +infinity for exact measurement
  double error = 0.0;
};

struct ScalingFit {
  double c1 = 0.0;
  double c2 = 0.0;
  double residual = 0.0;  ///< ||observed - fitted||_2
  std::optional<double> shot_slope;  ///< d log(error) / d log(M) at the best-covered U
  std::optional<double> slope_qubits;
};

/// Least squares of error ~ c1 / sqrt(U) + c2 / sqrt(M). Throws DomainError
/// with fewer than three distinct points or a rank-deficient design.
ScalingFit scaling_fit(std::span<const ScalingPoint> points);

struct ShotErrorRow {
  std::uint64_t shots = 0;
  double rmse = 0.0;
};

/// For each M, sqrt(mean over trials of ||z_hat - z||_2^2 / U).
std::vector<ShotErrorRow> shot_error_sweep(const StateVector& psi, std::span<const std::uint64_t> shots,
                                           std::size_t trials, std::uint64_t seed);

struct BoundInputs {
  double power = 0.0;
  std::size_t samples = 1;
  std::vector<double> channel_norms;
  double linear_norm = 0.0;
  std::size_t qubits = 1;
  std::uint64_t shots = kInfiniteShots;
  std::optional<double> c1;
  std::optional<double> c2;
  double training_error = 0.0;
};

/// Observed quantities that stand in for the unobservable error terms.
struct EmpiricalProxies {
  std::optional<double> train_mae;
  std::optional<double> test_mae;
  std::optional<double> generalization_gap;
  std::optional<double> rademacher_estimate;
};

struct TheoryReport {
  double approx_bound = 0.0;
  double estimation_bound = 0.0;
  double training_error = 0.0;
  double aggregate = 0.0;
  EmpiricalProxies empirical;
};

/// approx = c1/sqrt(U) + c2/sqrt(M), estimation = rademacher_bound, plus nu.
/// Throws DomainError when a needed fit constant is missing or an input is
/// negative.
TheoryReport aggregate_bound(const BoundInputs& inputs, const EmpiricalProxies& empirical = {});

}  // namespace qregress
