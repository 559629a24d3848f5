#include "qregress/qsim.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>
#include <utility>

#include "qregress/error.hpp"
#include "qregress/rng.hpp"

namespace qregress {
namespace {

using Amplitudes = std::vector<Complex>;

std::size_t stride_of(std::size_t num_qubits, std::size_t q) {
  return std::size_t{1} << (num_qubits - 1 - q);
}

void check_qubit(std::size_t num_qubits, std::size_t q, const char* what) {
  if (q >= num_qubits)
    throw BoundsError(std::string(what) + ": qubit " + std::to_string(q) + " out of range for " +
                      std::to_string(num_qubits) + " qubits");
}

// Visits every amplitude pair (i, i + stride) that differs only in the
// bit of the given stride, with the bit clear in i.
template <typename F>
void for_pairs(std::size_t dim, std::size_t stride, F&& f) {
  for (std::size_t base = 0; base < dim; base += 2 * stride)
    for (std::size_t i = base; i < base + stride; ++i) f(i, i + stride);
}

// Rotations use real arithmetic on the components; generic complex products
// go through the slow NaN-aware runtime path.
void apply_in_place(Amplitudes& a, std::size_t num_qubits, const Gate& g) {
  const double c = std::cos(0.5 * g.angle);
  const double s = std::sin(0.5 * g.angle);
  const std::size_t dim = a.size();
  switch (g.kind) {
    case GateKind::RX:
      // [[c, -is], [-is, c]]
      for_pairs(dim, stride_of(num_qubits, g.target), [&](std::size_t i, std::size_t j) {
        const Complex a0 = a[i];
        const Complex a1 = a[j];
        a[i] = {c * a0.real() + s * a1.imag(), c * a0.imag() - s * a1.real()};
        a[j] = {c * a1.real() + s * a0.imag(), c * a1.imag() - s * a0.real()};
      });
      break;
    case GateKind::RY:
      // [[c, -s], [s, c]]
      for_pairs(dim, stride_of(num_qubits, g.target), [&](std::size_t i, std::size_t j) {
        const Complex a0 = a[i];
        const Complex a1 = a[j];
        a[i] = {c * a0.real() - s * a1.real(), c * a0.imag() - s * a1.imag()};
        a[j] = {s * a0.real() + c * a1.real(), s * a0.imag() + c * a1.imag()};
      });
      break;
    case GateKind::RZ:
      // diag(e^{-i theta/2}, e^{i theta/2})
      for_pairs(dim, stride_of(num_qubits, g.target), [&](std::size_t i, std::size_t j) {
        const Complex a0 = a[i];
        const Complex a1 = a[j];
        a[i] = {c * a0.real() + s * a0.imag(), c * a0.imag() - s * a0.real()};
        a[j] = {c * a1.real() - s * a1.imag(), c * a1.imag() + s * a1.real()};
      });
      break;
    case GateKind::CNOT: {
      const std::size_t cs = stride_of(num_qubits, g.control);
      for_pairs(dim, stride_of(num_qubits, g.target), [&](std::size_t i, std::size_t j) {
        if (i & cs) std::swap(a[i], a[j]);
      });
      break;
    }
  }
}

void validate_gate(std::size_t num_qubits, const Gate& g) {
  check_qubit(num_qubits, g.target, "apply_gate");
  if (g.kind == GateKind::CNOT) {
    check_qubit(num_qubits, g.control, "apply_gate");
    if (g.control == g.target) throw BoundsError("apply_gate: CNOT control equals target");
  }
}

// <lambda| P_q |psi> for the Pauli generator P of a rotation gate.
Complex pauli_overlap(const Amplitudes& lambda, const Amplitudes& psi, std::size_t num_qubits,
                      GateKind kind, std::size_t q) {
  // conj(l) * p, expanded into components.
  const auto dot = [](const Complex& l, const Complex& p) {
    return Complex{l.real() * p.real() + l.imag() * p.imag(), l.real() * p.imag() - l.imag() * p.real()};
  };
  const std::size_t stride = stride_of(num_qubits, q);
  Complex acc{0.0, 0.0};
  switch (kind) {
    case GateKind::RX:
      for_pairs(psi.size(), stride, [&](std::size_t i, std::size_t j) {
        acc += dot(lambda[i], psi[j]) + dot(lambda[j], psi[i]);
      });
      break;
    case GateKind::RY:
      // (Y psi)_i = -i psi_j and (Y psi)_j = i psi_i.
      for_pairs(psi.size(), stride, [&](std::size_t i, std::size_t j) {
        acc += dot(lambda[i], Complex{psi[j].imag(), -psi[j].real()}) +
               dot(lambda[j], Complex{-psi[i].imag(), psi[i].real()});
      });
      break;
    case GateKind::RZ:
      for_pairs(psi.size(), stride, [&](std::size_t i, std::size_t j) {
        acc += dot(lambda[i], psi[i]) - dot(lambda[j], psi[j]);
      });
      break;
    case GateKind::CNOT:
      break;
  }
  return acc;
}

std::vector<double> z_expectations(const Amplitudes& a, std::size_t num_qubits) {
  std::vector<double> z(num_qubits, 0.0);
  for (std::size_t q = 0; q < num_qubits; ++q) {
    const std::size_t stride = stride_of(num_qubits, q);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (i & stride) ? -std::norm(a[i]) : std::norm(a[i]);
    z[q] = acc;
  }
  return z;
}

void check_upstream(std::size_t num_qubits, std::span<const double> upstream) {
  if (upstream.size() != num_qubits)
    throw ShapeError("vqc gradient: upstream has " + std::to_string(upstream.size()) +
                     " entries for " + std::to_string(num_qubits) + " qubits");
}

// O psi with O = sum_q w_q Z_q (diagonal).
Amplitudes apply_observable(const Amplitudes& psi, std::size_t num_qubits,
                            std::span<const double> weights) {
  Amplitudes out(psi.size());
  for (std::size_t i = 0; i < psi.size(); ++i) {
    double d = 0.0;
    for (std::size_t q = 0; q < num_qubits; ++q)
      d += (i & stride_of(num_qubits, q)) ? -weights[q] : weights[q];
    out[i] = {d * psi[i].real(), d * psi[i].imag()};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fused execution: runs of CNOTs become one index permutation and runs of
// rotations on one qubit become one 2x2 unitary. Gradients for the rotations
// inside a run are read off a 2x2 cross matrix between lambda and psi.

using Mat2 = std::array<Complex, 4>;  // row-major

Complex cmul(const Complex& a, const Complex& b) {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

Mat2 mat_mul(const Mat2& a, const Mat2& b) {
  return {cmul(a[0], b[0]) + cmul(a[1], b[2]), cmul(a[0], b[1]) + cmul(a[1], b[3]),
          cmul(a[2], b[0]) + cmul(a[3], b[2]), cmul(a[2], b[1]) + cmul(a[3], b[3])};
}

Mat2 mat_adjoint(const Mat2& a) { return {std::conj(a[0]), std::conj(a[2]), std::conj(a[1]), std::conj(a[3])}; }

constexpr Mat2 kIdentity2{Complex{1, 0}, Complex{0, 0}, Complex{0, 0}, Complex{1, 0}};

Mat2 rotation_matrix(const Gate& g) {
  const double c = std::cos(0.5 * g.angle);
  const double s = std::sin(0.5 * g.angle);
  switch (g.kind) {
    case GateKind::RX: return {Complex{c, 0}, Complex{0, -s}, Complex{0, -s}, Complex{c, 0}};
    case GateKind::RY: return {Complex{c, 0}, Complex{-s, 0}, Complex{s, 0}, Complex{c, 0}};
    case GateKind::RZ: return {Complex{c, -s}, Complex{0, 0}, Complex{0, 0}, Complex{c, s}};
    case GateKind::CNOT: break;
  }
  return kIdentity2;
}

Mat2 pauli_matrix(GateKind kind) {
  switch (kind) {
    case GateKind::RX: return {Complex{0, 0}, Complex{1, 0}, Complex{1, 0}, Complex{0, 0}};
    case GateKind::RY: return {Complex{0, 0}, Complex{0, -1}, Complex{0, 1}, Complex{0, 0}};
    case GateKind::RZ: return {Complex{1, 0}, Complex{0, 0}, Complex{0, 0}, Complex{-1, 0}};
    case GateKind::CNOT: break;
  }
  return kIdentity2;
}

void apply_mat2(Amplitudes& a, std::size_t stride, const Mat2& m) {
  for_pairs(a.size(), stride, [&](std::size_t i, std::size_t j) {
    const Complex a0 = a[i];
    const Complex a1 = a[j];
    a[i] = cmul(m[0], a0) + cmul(m[1], a1);
    a[j] = cmul(m[2], a0) + cmul(m[3], a1);
  });
}

// Permutation runs: new[i] = old[forward[i]] applies the run,
// new[i] = old[backward[i]] undoes it.
struct Permutation {
  std::vector<std::uint32_t> forward;
  std::vector<std::uint32_t> backward;
};

struct Segment {
  bool is_permutation = false;
  std::shared_ptr<const Permutation> perm;
  // Rotation runs on one qubit.
  std::size_t qubit = 0;
  std::vector<Gate> gates;
  std::vector<std::ptrdiff_t> params;
};

// The permutation of a CNOT run depends only on the run, so it is built
// once and shared across calls and threads.
std::shared_ptr<const Permutation> cnot_permutation(
    std::size_t num_qubits, const std::vector<std::pair<std::size_t, std::size_t>>& run) {
  using Key = std::pair<std::size_t, std::vector<std::pair<std::size_t, std::size_t>>>;
  static std::mutex mutex;
  static std::map<Key, std::shared_ptr<const Permutation>> cache;
  Key key{num_qubits, run};
  const std::lock_guard lock(mutex);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  const std::size_t dim = std::size_t{1} << num_qubits;
  std::vector<std::uint32_t> image(dim);  // basis |i> maps to |image[i]>
  for (std::size_t i = 0; i < dim; ++i) image[i] = static_cast<std::uint32_t>(i);
  for (const auto& [control, target] : run) {
    const std::size_t cs = stride_of(num_qubits, control);
    const std::size_t ts = stride_of(num_qubits, target);
    for (auto& v : image)
      if (v & cs) v ^= static_cast<std::uint32_t>(ts);
  }
  auto perm = std::make_shared<Permutation>();
  perm->forward.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) perm->forward[image[i]] = static_cast<std::uint32_t>(i);
  perm->backward = std::move(image);
  cache.emplace(std::move(key), perm);
  return perm;
}

std::vector<Segment> fuse(const std::vector<CompiledGate>& gates, std::size_t num_qubits) {
  std::vector<Segment> out;
  std::size_t k = 0;
  while (k < gates.size()) {
    Segment seg;
    if (gates[k].gate.kind == GateKind::CNOT) {
      seg.is_permutation = true;
      std::vector<std::pair<std::size_t, std::size_t>> run;
      for (; k < gates.size() && gates[k].gate.kind == GateKind::CNOT; ++k)
        run.emplace_back(gates[k].gate.control, gates[k].gate.target);
      seg.perm = cnot_permutation(num_qubits, run);
    } else {
      seg.qubit = gates[k].gate.target;
      for (; k < gates.size() && gates[k].gate.kind != GateKind::CNOT && gates[k].gate.target == seg.qubit; ++k) {
        seg.gates.push_back(gates[k].gate);
        seg.params.push_back(gates[k].param);
      }
    }
    out.push_back(std::move(seg));
  }
  return out;
}

void permute(Amplitudes& a, const std::vector<std::uint32_t>& src, Amplitudes& scratch) {
  scratch.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) scratch[i] = a[src[i]];
  a.swap(scratch);
}

Mat2 run_matrix(const Segment& seg) {
  Mat2 m = kIdentity2;
  for (const Gate& g : seg.gates) m = mat_mul(rotation_matrix(g), m);
  return m;
}

void run_forward(Amplitudes& a, std::size_t num_qubits, const std::vector<Segment>& segments) {
  Amplitudes scratch;
  for (const Segment& seg : segments) {
    if (seg.is_permutation) permute(a, seg.perm->forward, scratch);
    else apply_mat2(a, stride_of(num_qubits, seg.qubit), run_matrix(seg));
  }
}

// Reverse sweep writing d(upstream . z)/d angle into grad. On return psi
// holds the circuit input and lambda the back-propagated observable there.
void fused_adjoint_sweep(Amplitudes& psi, Amplitudes& lambda, std::size_t num_qubits,
                         const std::vector<Segment>& segments, std::span<double> grad) {
  Amplitudes scratch;
  for (auto it = segments.rbegin(); it != segments.rend(); ++it) {
    const Segment& seg = *it;
    if (seg.is_permutation) {
      permute(psi, seg.perm->backward, scratch);
      permute(lambda, seg.perm->backward, scratch);
      continue;
    }
    const std::size_t stride = stride_of(num_qubits, seg.qubit);
    // undo_k maps the state after the run back to the state after gate k.
    std::vector<Mat2> undo(seg.gates.size() + 1);
    undo.back() = kIdentity2;
    for (std::size_t k = seg.gates.size(); k-- > 0;)
      undo[k] = mat_mul(mat_adjoint(rotation_matrix(seg.gates[k])), undo[k + 1]);
    // cross[b * 2 + a] = sum over the other qubits of conj(lambda_a) psi_b,
    // accumulated in the same pass that undoes the run on both states.
    const Mat2& m = undo.front();
    Mat2 cross{};
    for_pairs(psi.size(), stride, [&](std::size_t i, std::size_t j) {
      const Complex p0 = psi[i];
      const Complex p1 = psi[j];
      const Complex l0 = lambda[i];
      const Complex l1 = lambda[j];
      const Complex c0 = std::conj(l0);
      const Complex c1 = std::conj(l1);
      cross[0] += cmul(c0, p0);
      cross[1] += cmul(c1, p0);
      cross[2] += cmul(c0, p1);
      cross[3] += cmul(c1, p1);
      psi[i] = cmul(m[0], p0) + cmul(m[1], p1);
      psi[j] = cmul(m[2], p0) + cmul(m[3], p1);
      lambda[i] = cmul(m[0], l0) + cmul(m[1], l1);
      lambda[j] = cmul(m[2], l0) + cmul(m[3], l1);
    });
    for (std::size_t k = 0; k < seg.gates.size(); ++k) {
      if (seg.params[k] < 0) continue;
      const Mat2& u = undo[k + 1];
      const Mat2 a = mat_mul(mat_adjoint(u), mat_mul(pauli_matrix(seg.gates[k].kind), u));
      const Complex overlap = cmul(a[0], cross[0]) + cmul(a[1], cross[2]) + cmul(a[2], cross[1]) +
                              cmul(a[3], cross[3]);
      grad[static_cast<std::size_t>(seg.params[k])] = overlap.imag();
    }
  }
}

}  // namespace

StateVector::StateVector(std::size_t num_qubits) : num_qubits_(num_qubits) {
  if (num_qubits == 0 || num_qubits > kMaxQubits)
    throw DomainError("StateVector: qubit count must be in [1, 16]");
  amplitudes_.assign(std::size_t{1} << num_qubits, Complex{0.0, 0.0});
  amplitudes_[0] = 1.0;
}

StateVector::StateVector(std::size_t num_qubits, std::vector<Complex> amplitudes)
    : num_qubits_(num_qubits), amplitudes_(std::move(amplitudes)) {
  if (num_qubits == 0 || num_qubits > kMaxQubits)
    throw DomainError("StateVector: qubit count must be in [1, 16]");
  if (amplitudes_.size() != (std::size_t{1} << num_qubits))
    throw ShapeError("StateVector: expected 2^" + std::to_string(num_qubits) + " amplitudes");
  const double n2 = norm_squared();
  if (!(std::abs(n2 - 1.0) <= 1e-10))
    throw DomainError("StateVector: amplitudes are not normalized (norm^2 = " +
                      std::to_string(n2) + ")");
}

StateVector StateVector::basis(std::size_t num_qubits, std::uint64_t index) {
  StateVector s(num_qubits);
  if (index >= s.dimension()) throw BoundsError("StateVector::basis: index out of range");
  s.amplitudes_[0] = 0.0;
  s.amplitudes_[index] = 1.0;
  return s;
}

StateVector StateVector::unchecked(std::size_t num_qubits, std::vector<Complex> amplitudes) {
  StateVector s;
  s.num_qubits_ = num_qubits;
  s.amplitudes_ = std::move(amplitudes);
  return s;
}

double StateVector::norm_squared() const noexcept {
  double acc = 0.0;
  for (const Complex& a : amplitudes_) acc += std::norm(a);
  return acc;
}

VQCParams::VQCParams(std::size_t num_qubits, std::size_t num_blocks)
    : VQCParams(num_qubits, num_blocks, std::vector<double>(num_qubits * num_blocks * 3, 0.0)) {}

VQCParams::VQCParams(std::size_t num_qubits, std::size_t num_blocks, std::vector<double> angles)
    : num_qubits_(num_qubits), num_blocks_(num_blocks), angles_(std::move(angles)) {
  if (num_qubits == 0 || num_qubits > kMaxQubits)
    throw DomainError("VQCParams: qubit count must be in [1, 16]");
  if (num_blocks == 0) throw DomainError("VQCParams: at least one block is required");
  if (angles_.size() != num_qubits * num_blocks * 3)
    throw ShapeError("VQCParams: expected " + std::to_string(num_qubits * num_blocks * 3) +
                     " angles, got " + std::to_string(angles_.size()));
  for (double a : angles_)
    if (!std::isfinite(a)) throw DataError("VQCParams: non-finite angle");
}

std::vector<CompiledGate> compile_pqc(const VQCParams& params, const CircuitLayout& layout) {
  const std::size_t n = params.num_qubits();
  std::vector<CompiledGate> gates;
  gates.reserve(params.num_blocks() * (4 * n + 1));
  auto entangle = [&] {
    for (std::size_t q = 0; q + 1 < n; ++q) gates.push_back({Gate::cnot(q, q + 1), -1});
    if (layout.topology == Topology::Ring && n > 2) gates.push_back({Gate::cnot(n - 1, 0), -1});
  };
  for (std::size_t l = 0; l < params.num_blocks(); ++l) {
    if (layout.order == BlockOrder::EntangleFirst) entangle();
    for (std::size_t q = 0; q < n; ++q) {
      const auto base = static_cast<std::ptrdiff_t>(VQCParams::index(n, l, q, 0));
      gates.push_back({Gate::rx(params.angle(l, q, 0), q), base});
      gates.push_back({Gate::ry(params.angle(l, q, 1), q), base + 1});
      gates.push_back({Gate::rz(params.angle(l, q, 2), q), base + 2});
    }
    if (layout.order == BlockOrder::RotateFirst) entangle();
  }
  return gates;
}

std::string basis_bitstring(std::uint64_t index, std::size_t num_qubits) {
  std::string bits(num_qubits, '0');
  for (std::size_t q = 0; q < num_qubits; ++q)
    if (index & stride_of(num_qubits, q)) bits[q] = '1';
  return bits;
}

StateVector tpe_encode(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0 || n > kMaxQubits) throw DomainError("tpe_encode: input length must be in [1, 16]");
  for (std::size_t q = 0; q < n; ++q)
    if (!(x[q] >= 0.0 && x[q] <= 1.0))
      throw DomainError("tpe_encode: x[" + std::to_string(q) + "] = " + std::to_string(x[q]) +
                        " is outside [0, 1]");
  Amplitudes a{Complex{1.0, 0.0}};
  for (std::size_t q = 0; q < n; ++q) {
    const double c = std::cos(0.5 * std::numbers::pi * x[q]);
    const double s = std::sin(0.5 * std::numbers::pi * x[q]);
    Amplitudes next(a.size() * 2);
    for (std::size_t i = 0; i < a.size(); ++i) {
      next[2 * i] = a[i] * c;
      next[2 * i + 1] = a[i] * s;
    }
    a = std::move(next);
  }
  return StateVector::unchecked(n, std::move(a));
}

std::vector<double> tpe_decode(const StateVector& psi) {
  const std::size_t n = psi.num_qubits();
  const auto a = psi.amplitudes();
  std::vector<double> x(n);
  for (std::size_t q = 0; q < n; ++q) {
    const std::size_t stride = stride_of(n, q);
    double p0 = 0.0;
    double p1 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) ((i & stride) ? p1 : p0) += std::norm(a[i]);
    x[q] = 2.0 / std::numbers::pi * std::atan2(std::sqrt(p1), std::sqrt(p0));
  }
  const StateVector expected = tpe_encode(x);
  const auto e = expected.amplitudes();
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(std::abs(a[i]) - e[i].real()));
  if (worst > 1e-6)
    throw DataError("tpe_decode: state is not a product encoding state (deviation " +
                    std::to_string(worst) + ")");
  return x;
}

StateVector apply_gate(const StateVector& psi, const Gate& gate) {
  validate_gate(psi.num_qubits(), gate);
  Amplitudes a(psi.amplitudes().begin(), psi.amplitudes().end());
  apply_in_place(a, psi.num_qubits(), gate);
  return StateVector::unchecked(psi.num_qubits(), std::move(a));
}

StateVector apply_gates(const StateVector& psi, std::span<const Gate> gates) {
  for (const Gate& g : gates) validate_gate(psi.num_qubits(), g);
  Amplitudes a(psi.amplitudes().begin(), psi.amplitudes().end());
  for (const Gate& g : gates) apply_in_place(a, psi.num_qubits(), g);
  return StateVector::unchecked(psi.num_qubits(), std::move(a));
}

StateVector pqc_forward(const StateVector& psi, const VQCParams& params,
                        const CircuitLayout& layout) {
  if (psi.num_qubits() != params.num_qubits())
    throw ShapeError("pqc_forward: state has " + std::to_string(psi.num_qubits()) +
                     " qubits, parameters expect " + std::to_string(params.num_qubits()));
  Amplitudes a(psi.amplitudes().begin(), psi.amplitudes().end());
  run_forward(a, psi.num_qubits(), fuse(compile_pqc(params, layout), psi.num_qubits()));
  return StateVector::unchecked(psi.num_qubits(), std::move(a));
}

std::vector<double> measure_z_exact(const StateVector& psi) {
  const Amplitudes a(psi.amplitudes().begin(), psi.amplitudes().end());
  return z_expectations(a, psi.num_qubits());
}

ShotMeasurement measure_z_shots(const StateVector& psi, std::uint64_t shots, std::uint64_t seed) {
  if (shots == 0) throw DomainError("measure_z_shots: shot count must be positive");
  const auto a = psi.amplitudes();
  std::vector<double> cdf(a.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) cdf[i] = (acc += std::norm(a[i]));
  const double total = acc;

  const CounterRng rng(seed, 0);
  ShotMeasurement out;
  out.result.shots = shots;
  for (std::uint64_t m = 0; m < shots; ++m) {
    const double u = static_cast<double>(rng.bits_at(m) >> 11) * 0x1.0p-53 * total;
    // upper_bound lands past zero-probability entries sharing a cumulative value.
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const auto idx = static_cast<std::uint64_t>(
        std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(a.size()) - 1));
    ++out.result.counts[idx];
  }

  const std::size_t n = psi.num_qubits();
  out.estimates.assign(n, 0.0);
  for (const auto& [idx, count] : out.result.counts)
    for (std::size_t q = 0; q < n; ++q)
      out.estimates[q] += (idx & stride_of(n, q)) ? -static_cast<double>(count) : static_cast<double>(count);
  for (double& z : out.estimates) z /= static_cast<double>(shots);
  return out;
}

std::vector<double> vqc_gradient(const StateVector& psi_in, const VQCParams& params,
                                 std::span<const double> upstream, GradientMethod method,
                                 const CircuitLayout& layout) {
  const std::size_t n = params.num_qubits();
  if (psi_in.num_qubits() != n) throw ShapeError("vqc_gradient: qubit count mismatch");
  check_upstream(n, upstream);
  std::vector<double> grad(params.size(), 0.0);

  if (method == GradientMethod::ParameterShift) {
    auto objective = [&](const VQCParams& p) {
      const auto z = measure_z_exact(pqc_forward(psi_in, p, layout));
      double f = 0.0;
      for (std::size_t q = 0; q < n; ++q) f += upstream[q] * z[q];
      return f;
    };
    for (std::size_t j = 0; j < params.size(); ++j) {
      VQCParams plus = params;
      VQCParams minus = params;
      plus.angles()[j] += 0.5 * std::numbers::pi;
      minus.angles()[j] -= 0.5 * std::numbers::pi;
      grad[j] = 0.5 * (objective(plus) - objective(minus));
    }
    return grad;
  }

  const auto gates = compile_pqc(params, layout);
  Amplitudes psi(psi_in.amplitudes().begin(), psi_in.amplitudes().end());
  const auto segments = fuse(gates, n);
  run_forward(psi, n, segments);
  Amplitudes lambda = apply_observable(psi, n, upstream);
  fused_adjoint_sweep(psi, lambda, n, segments, grad);
  return grad;
}

VQCBackward vqc_backward(std::span<const double> x, const VQCParams& params,
                         std::span<const double> upstream, const CircuitLayout& layout) {
  const std::size_t n = params.num_qubits();
  if (x.size() != n) throw ShapeError("vqc_backward: input length does not match qubit count");
  check_upstream(n, upstream);
  const StateVector encoded = tpe_encode(x);
  const auto gates = compile_pqc(params, layout);

  Amplitudes psi(encoded.amplitudes().begin(), encoded.amplitudes().end());
  const auto segments = fuse(gates, n);
  run_forward(psi, n, segments);

  VQCBackward out;
  out.z = z_expectations(psi, n);
  out.angle_grad.assign(params.size(), 0.0);
  Amplitudes lambda = apply_observable(psi, n, upstream);
  fused_adjoint_sweep(psi, lambda, n, segments, out.angle_grad);

  // The encoding is RY(pi x_q) on |0>, so d/dx_q = pi * Im<lambda| Y_q |psi_in>.
  out.input_grad.assign(n, 0.0);
  for (std::size_t q = 0; q < n; ++q)
    out.input_grad[q] = std::numbers::pi * pauli_overlap(lambda, psi, n, GateKind::RY, q).imag();
  return out;
}

Eigen::MatrixXcd pqc_unitary(const VQCParams& params, const CircuitLayout& layout) {
  const std::size_t n = params.num_qubits();
  if (n > 10) throw DomainError("pqc_unitary: dense unitary limited to 10 qubits");
  const std::size_t dim = std::size_t{1} << n;
  const auto segments = fuse(compile_pqc(params, layout), n);
  Eigen::MatrixXcd u(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  for (std::size_t col = 0; col < dim; ++col) {
    Amplitudes a(dim, Complex{0.0, 0.0});
    a[col] = 1.0;
    run_forward(a, n, segments);
    for (std::size_t row = 0; row < dim; ++row)
      u(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) = a[row];
  }
  return u;
}

}  // namespace qregress
