#pragma once

// Statevector simulation of the variational circuit.
//
// Qubits are numbered 0..U-1 in the API. Qubit 0 is the most significant
// bit of the basis index: index = sum_q b_q * 2^(U-1-q), which matches the
// left-to-right Kronecker order of the product encoding.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "qregress/linalg.hpp"

namespace qregress {

using Complex = std::complex<double>;

inline constexpr std::size_t kMaxQubits = 16;

class StateVector {
 public:
  /// |0...0> on `num_qubits` qubits.
  explicit StateVector(std::size_t num_qubits);
  /// Validates length 2^U and unit norm (within 1e-10).
  StateVector(std::size_t num_qubits, std::vector<Complex> amplitudes);

  static StateVector basis(std::size_t num_qubits, std::uint64_t index);

  std::size_t num_qubits() const noexcept { return num_qubits_; }
  std::size_t dimension() const noexcept { return amplitudes_.size(); }
  std::span<const Complex> amplitudes() const noexcept { return amplitudes_; }
  double norm_squared() const noexcept;

  /// Bypasses the norm check; used by kernels whose output is unitary by construction.
  static StateVector unchecked(std::size_t num_qubits, std::vector<Complex> amplitudes);

 private:
  StateVector() = default;
  std::size_t num_qubits_ = 0;
  std::vector<Complex> amplitudes_;
};

enum class GateKind { RX, RY, RZ, CNOT };

struct Gate {
  GateKind kind = GateKind::RX;
  std::size_t target = 0;
  std::size_t control = 0;  ///< CNOT only
  double angle = 0.0;       ///< rotations only; R_P(angle) = exp(-i angle P / 2)

  static Gate rx(double angle, std::size_t q) { return {GateKind::RX, q, 0, angle}; }
  static Gate ry(double angle, std::size_t q) { return {GateKind::RY, q, 0, angle}; }
  static Gate rz(double angle, std::size_t q) { return {GateKind::RZ, q, 0, angle}; }
  static Gate cnot(std::size_t control, std::size_t target) {
    return {GateKind::CNOT, target, control, 0.0};
  }
};

/// Angles of an L-block PQC: angles[(block * U + qubit) * 3 + r] with
/// r = 0 (alpha, RX), 1 (beta, RY), 2 (gamma, RZ).
class VQCParams {
 public:
  VQCParams(std::size_t num_qubits, std::size_t num_blocks);
  VQCParams(std::size_t num_qubits, std::size_t num_blocks, std::vector<double> angles);

  std::size_t num_qubits() const noexcept { return num_qubits_; }
  std::size_t num_blocks() const noexcept { return num_blocks_; }
  std::size_t size() const noexcept { return angles_.size(); }
  std::span<const double> angles() const noexcept { return angles_; }
  std::span<double> angles() noexcept { return angles_; }
  static std::size_t index(std::size_t num_qubits, std::size_t block, std::size_t qubit,
                           std::size_t rotation) noexcept {
    return (block * num_qubits + qubit) * 3 + rotation;
  }
  double angle(std::size_t block, std::size_t qubit, std::size_t rotation) const {
    return angles_[index(num_qubits_, block, qubit, rotation)];
  }

 private:
  std::size_t num_qubits_;
  std::size_t num_blocks_;
  std::vector<double> angles_;
};

enum class Topology { Chain, Ring };
enum class BlockOrder { EntangleFirst, RotateFirst };

/// Structural choices for each PQC block.
struct CircuitLayout {
  Topology topology = Topology::Chain;
  BlockOrder order = BlockOrder::EntangleFirst;
};

/// A gate of the compiled PQC plus the index of its angle (-1 for CNOT).
struct CompiledGate {
  Gate gate;
  std::ptrdiff_t param = -1;
};

std::vector<CompiledGate> compile_pqc(const VQCParams& params, const CircuitLayout& layout = {});

struct ShotResult {
  std::uint64_t shots = 0;
  std::map<std::uint64_t, std::uint64_t> counts;  ///< basis index -> count
};

struct ShotMeasurement {
  std::vector<double> estimates;
  ShotResult result;
};

/// Bitstring of a basis index, qubit 0 first.
std::string basis_bitstring(std::uint64_t index, std::size_t num_qubits);

/// Product state with per-qubit amplitudes (cos(pi x/2), sin(pi x/2)).
/// Throws DomainError if some x_i is outside [0, 1].
StateVector tpe_encode(std::span<const double> x);

/// Inverse of tpe_encode. Throws DataError if psi is not a product encoding
/// state within 1e-6 (amplitude magnitudes; global phase ignored).
std::vector<double> tpe_decode(const StateVector& psi);

StateVector apply_gate(const StateVector& psi, const Gate& gate);
StateVector apply_gates(const StateVector& psi, std::span<const Gate> gates);

StateVector pqc_forward(const StateVector& psi, const VQCParams& params,
                        const CircuitLayout& layout = {});

/// z_q = <Z_q> for every qubit.
std::vector<double> measure_z_exact(const StateVector& psi);

/// M computational-basis samples by inverse CDF, one uniform draw per shot
/// from the counter-based stream (seed, shot index).
ShotMeasurement measure_z_shots(const StateVector& psi, std::uint64_t shots, std::uint64_t seed);

enum class GradientMethod { Adjoint, ParameterShift };

/// d(upstream . z)/d(angles), shaped like params.angles().
std::vector<double> vqc_gradient(const StateVector& psi_in, const VQCParams& params,
                                 std::span<const double> upstream,
                                 GradientMethod method = GradientMethod::Adjoint,
                                 const CircuitLayout& layout = {});

/// Forward pass from encoded input x plus the adjoint backward pass.
struct VQCBackward {
  std::vector<double> z;           ///< exact Pauli-Z expectations
  std::vector<double> angle_grad;  ///< d(upstream . z)/d angles
  std::vector<double> input_grad;  ///< d(upstream . z)/d x
};

VQCBackward vqc_backward(std::span<const double> x, const VQCParams& params,
                         std::span<const double> upstream, const CircuitLayout& layout = {});

/// Dense 2^U x 2^U unitary of the full PQC (U <= 10).
Eigen::MatrixXcd pqc_unitary(const VQCParams& params, const CircuitLayout& layout = {});

}  // namespace qregress
