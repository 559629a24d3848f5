#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "qregress/error.hpp"
#include "qregress/qsim.hpp"
#include "qregress/rng.hpp"

using namespace qregress;

namespace {

oracle::CVec to_eigen(const StateVector& psi) {
  oracle::CVec v(static_cast<Eigen::Index>(psi.dimension()));
  for (std::size_t i = 0; i < psi.dimension(); ++i) v(static_cast<Eigen::Index>(i)) = psi.amplitudes()[i];
  return v;
}

StateVector random_state(std::mt19937_64& gen, std::size_t n) {
  std::normal_distribution<double> d;
  std::vector<Complex> a(std::size_t{1} << n);
  double norm = 0.0;
  for (auto& z : a) {
    z = {d(gen), d(gen)};
    norm += std::norm(z);
  }
  for (auto& z : a) z /= std::sqrt(norm);
  return StateVector(n, std::move(a));
}

VQCParams random_params(std::mt19937_64& gen, std::size_t n, std::size_t blocks) {
  return VQCParams(n, blocks, oracle::uniform_vector(gen, n * blocks * 3, -std::numbers::pi, std::numbers::pi));
}

double max_diff(const oracle::CVec& a, const oracle::CVec& b) { return (a - b).cwiseAbs().maxCoeff(); }

double linear_objective(const StateVector& psi, const VQCParams& p, std::span<const double> upstream,
                        const CircuitLayout& layout) {
  const auto z = measure_z_exact(pqc_forward(psi, p, layout));
  double f = 0.0;
  for (std::size_t q = 0; q < z.size(); ++q) f += upstream[q] * z[q];
  return f;
}

}  // namespace

TEST(Tpe, Examples) {
  const std::vector<double> zeros{0, 0};
  const auto a = tpe_encode(zeros);
  EXPECT_NEAR(std::abs(a.amplitudes()[0] - Complex(1, 0)), 0, 1e-15);
  for (std::size_t i = 1; i < 4; ++i) EXPECT_NEAR(std::abs(a.amplitudes()[i]), 0, 1e-15);
  const std::vector<double> halves{0.5, 0.5};
  const auto h = tpe_encode(halves);
  for (const Complex& z : h.amplitudes()) EXPECT_NEAR(z.real(), 0.5, 1e-15);
  const auto back = tpe_decode(StateVector(2, {0.5, 0.5, 0.5, 0.5}));
  EXPECT_NEAR(back[0], 0.5, 1e-12);
  EXPECT_NEAR(back[1], 0.5, 1e-12);
  const auto origin = tpe_decode(StateVector::basis(2, 0));
  EXPECT_NEAR(origin[0], 0.0, 1e-12);
  EXPECT_NEAR(origin[1], 0.0, 1e-12);
}

TEST(Tpe, MatchesKroneckerOracle) {
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = oracle::uniform_vector(gen, 3, 0.0, 1.0);
    EXPECT_LT(max_diff(to_eigen(tpe_encode(x)), oracle::product_state(x)), 1e-14);
  }
}

TEST(Tpe, RoundTrip) {
  std::mt19937_64 gen(2);
  for (std::size_t n : {2u, 4u, 8u}) {
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      const auto x = oracle::uniform_vector(gen, n, 0.0, 1.0);
      const auto y = tpe_decode(tpe_encode(x));
      for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(y[i] - x[i]));
    }
    EXPECT_LT(worst, 1e-9) << "U = " << n;
  }
}

TEST(Tpe, InjectiveAtSmallGaps) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 100; ++trial) {
    auto x = oracle::uniform_vector(gen, 4, 0.1, 0.9);
    auto y = x;
    y[static_cast<std::size_t>(trial % 4)] += 1e-6;
    const auto dx = tpe_decode(tpe_encode(x));
    const auto dy = tpe_decode(tpe_encode(y));
    EXPECT_NE(dx, dy);
    EXPECT_GT(max_diff(to_eigen(tpe_encode(x)), to_eigen(tpe_encode(y))), 1e-8);
  }
}

TEST(Tpe, Errors) {
  const std::vector<double> bad{0.5, 1.2};
  EXPECT_THROW(tpe_encode(bad), DomainError);
  const std::vector<double> neg{-0.1};
  EXPECT_THROW(tpe_encode(neg), DomainError);
  // Bell state: marginals are 1/2 but the state is entangled.
  const double h = std::sqrt(0.5);
  EXPECT_THROW(tpe_decode(StateVector(2, {h, 0, 0, h})), DataError);
}

TEST(Gates, Examples) {
  const auto s = apply_gate(StateVector::basis(2, 2), Gate::cnot(0, 1));
  EXPECT_NEAR(std::abs(s.amplitudes()[3]), 1.0, 1e-15);
  const auto t = apply_gate(StateVector(1), Gate::ry(std::numbers::pi, 0));
  EXPECT_NEAR(std::abs(t.amplitudes()[0]), 0.0, 1e-15);
  EXPECT_NEAR(t.amplitudes()[1].real(), 1.0, 1e-15);
  EXPECT_THROW(apply_gate(StateVector(2), Gate::rx(0.1, 2)), BoundsError);
  EXPECT_THROW(apply_gate(StateVector(2), Gate::cnot(1, 1)), BoundsError);
}

TEST(Gates, RandomSequencesMatchDenseOracle) {
  std::mt19937_64 gen(4);
  std::uniform_int_distribution<int> kind(0, 3);
  std::uniform_real_distribution<double> angle(-4, 4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 3;
    std::uniform_int_distribution<std::size_t> qubit(0, n - 1);
    const auto psi = random_state(gen, n);
    std::vector<Gate> gates;
    oracle::CMat u = oracle::CMat::Identity(8, 8);
    for (int g = 0; g < 3; ++g) {
      const std::size_t q = qubit(gen);
      const double th = angle(gen);
      switch (kind(gen)) {
        case 0: gates.push_back(Gate::rx(th, q)); u = oracle::on_qubit(oracle::rx(th), q, n) * u; break;
        case 1: gates.push_back(Gate::ry(th, q)); u = oracle::on_qubit(oracle::ry(th), q, n) * u; break;
        case 2: gates.push_back(Gate::rz(th, q)); u = oracle::on_qubit(oracle::rz(th), q, n) * u; break;
        default: {
          const std::size_t t = (q + 1 + qubit(gen) % (n - 1)) % n;
          gates.push_back(Gate::cnot(q, t));
          u = oracle::cnot(q, t, n) * u;
        }
      }
    }
    EXPECT_LT(max_diff(to_eigen(apply_gates(psi, gates)), u * to_eigen(psi)), 1e-12);
  }
}

TEST(Pqc, ZeroAnglesFixAllZeroState) {
  const auto out = pqc_forward(StateVector(4), VQCParams(4, 3));
  EXPECT_NEAR(std::abs(out.amplitudes()[0]), 1.0, 1e-15);
}

TEST(Pqc, SingleQubitIsRotationProduct) {
  std::mt19937_64 gen(5);
  const auto p = random_params(gen, 1, 1);
  const auto a = p.angles();
  const oracle::CMat u = oracle::rz(a[2]) * oracle::ry(a[1]) * oracle::rx(a[0]);
  const auto psi = random_state(gen, 1);
  EXPECT_LT(max_diff(to_eigen(pqc_forward(psi, p)), u * to_eigen(psi)), 1e-14);
}

TEST(Pqc, MatchesDenseOracleForAllLayouts) {
  std::mt19937_64 gen(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial % 3);
    const std::size_t blocks = 1 + static_cast<std::size_t>((trial / 3) % 3);
    const bool ring = trial % 2 == 1;
    const bool rotate_first = (trial / 2) % 2 == 1;
    const CircuitLayout layout{ring ? Topology::Ring : Topology::Chain,
                               rotate_first ? BlockOrder::RotateFirst : BlockOrder::EntangleFirst};
    const auto p = random_params(gen, n, blocks);
    const std::vector<double> angles(p.angles().begin(), p.angles().end());
    const auto dense = oracle::pqc(angles, n, blocks, ring, rotate_first);
    const auto psi = random_state(gen, n);
    EXPECT_LT(max_diff(to_eigen(pqc_forward(psi, p, layout)), dense * to_eigen(psi)), 1e-10);
    EXPECT_LT((pqc_unitary(p, layout) - dense).cwiseAbs().maxCoeff(), 1e-10);
  }
  EXPECT_THROW(pqc_forward(StateVector(2), VQCParams(3, 1)), ShapeError);
}

TEST(Pqc, UnitaryFrobeniusNorm) {
  std::mt19937_64 gen(7);
  for (std::size_t n : {1u, 3u, 5u}) {
    const auto u = pqc_unitary(random_params(gen, n, 2));
    EXPECT_NEAR(u.norm(), std::pow(2.0, n / 2.0), 1e-9);
  }
}

TEST(Pqc, NormDriftAtTwelveQubitsDepthHundred) {
  std::mt19937_64 gen(8);
  std::vector<Gate> gates;
  std::uniform_int_distribution<std::size_t> q(0, 11);
  std::uniform_real_distribution<double> angle(-3, 3);
  for (int i = 0; i < 100; ++i) {
    const std::size_t a = q(gen);
    switch (i % 4) {
      case 0: gates.push_back(Gate::rx(angle(gen), a)); break;
      case 1: gates.push_back(Gate::ry(angle(gen), a)); break;
      case 2: gates.push_back(Gate::rz(angle(gen), a)); break;
      default: gates.push_back(Gate::cnot(a, (a + 1) % 12));
    }
  }
  const auto out = apply_gates(random_state(gen, 12), gates);
  EXPECT_LT(std::abs(out.norm_squared() - 1.0), 1e-10);
  const auto deep = pqc_forward(random_state(gen, 12), random_params(gen, 12, 8));
  EXPECT_LT(std::abs(deep.norm_squared() - 1.0), 1e-10);
}

TEST(Measure, ExactExamples) {
  for (double z : measure_z_exact(StateVector(3))) EXPECT_EQ(z, 1.0);
  const auto z = measure_z_exact(StateVector::basis(3, 0b010));
  EXPECT_EQ(z[0], 1.0);
  EXPECT_EQ(z[1], -1.0);
  EXPECT_EQ(z[2], 1.0);
  const std::vector<double> x{0.5, 0.2, 0.9};
  const auto ze = measure_z_exact(tpe_encode(x));
  EXPECT_NEAR(ze[0], 0.0, 1e-15);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(ze[i], std::cos(std::numbers::pi * x[i]), 1e-14);
}

TEST(Measure, ExactMatchesBruteForce) {
  std::mt19937_64 gen(9);
  for (std::size_t n : {1u, 2u, 5u, 8u}) {
    const auto psi = random_state(gen, n);
    const auto want = oracle::z_brute(to_eigen(psi), n);
    const auto got = measure_z_exact(psi);
    for (std::size_t q = 0; q < n; ++q) EXPECT_NEAR(got[q], want[q], 1e-13);
  }
}

TEST(Measure, ShotsOnBasisStateAreExact) {
  const auto m = measure_z_shots(StateVector(3), 17, 5);
  for (double z : m.estimates) EXPECT_EQ(z, 1.0);
  EXPECT_EQ(m.result.counts.at(0), 17u);
  EXPECT_THROW(measure_z_shots(StateVector(1), 0, 1), DomainError);
}

TEST(Measure, ShotsAreDeterministicAndCountsSumToM) {
  std::mt19937_64 gen(10);
  const auto psi = random_state(gen, 4);
  const auto a = measure_z_shots(psi, 1000, 3);
  const auto b = measure_z_shots(psi, 1000, 3);
  EXPECT_EQ(a.result.counts, b.result.counts);
  EXPECT_EQ(a.estimates, b.estimates);
  std::uint64_t total = 0;
  for (const auto& [idx, c] : a.result.counts) total += c;
  EXPECT_EQ(total, 1000u);
  EXPECT_EQ(basis_bitstring(0b0110, 4), "0110");
}

TEST(Measure, ShotsAgreeWithBinomialModel) {
  // Single qubit at x = 0.5: z = 0, each shot is a fair +-1 coin.
  const std::vector<double> half{0.5};
  const auto psi = tpe_encode(half);
  const std::uint64_t m = 10000;
  std::size_t within = 0;
  std::vector<double> est;
  for (std::uint64_t t = 0; t < 200; ++t) {
    const double z = measure_z_shots(psi, m, 1000 + t).estimates[0];
    est.push_back(z);
    if (std::abs(z) <= 5.0 / std::sqrt(static_cast<double>(m))) ++within;
  }
  EXPECT_EQ(within, 200u);  // 5 sigma
  // Binomial oracle: std of (2 B(M, 1/2) - M) / M is 1/sqrt(M).
  double mean = 0, var = 0;
  for (double z : est) mean += z;
  mean /= static_cast<double>(est.size());
  for (double z : est) var += (z - mean) * (z - mean);
  var /= static_cast<double>(est.size() - 1);
  EXPECT_NEAR(std::sqrt(var), 1.0 / std::sqrt(static_cast<double>(m)), 0.2 / std::sqrt(static_cast<double>(m)));
}

TEST(Measure, ShotEstimatorUnbiasedWithClosedFormSpread) {
  std::mt19937_64 gen(11);
  const auto psi = pqc_forward(tpe_encode(oracle::uniform_vector(gen, 3, 0, 1)), random_params(gen, 3, 2));
  const auto z = measure_z_exact(psi);
  for (std::uint64_t m : {100u, 400u, 1600u}) {
    const std::size_t trials = 400;
    std::vector<double> mean(3, 0.0), sq(3, 0.0);
    for (std::size_t t = 0; t < trials; ++t) {
      const auto e = measure_z_shots(psi, m, mix64(t + 77 * m)).estimates;
      for (std::size_t q = 0; q < 3; ++q) {
        mean[q] += e[q] / trials;
        sq[q] += (e[q] - z[q]) * (e[q] - z[q]) / trials;
      }
    }
    for (std::size_t q = 0; q < 3; ++q) {
      const double sd = std::sqrt((1 - z[q] * z[q]) / static_cast<double>(m));
      EXPECT_NEAR(mean[q], z[q], 4 * sd / std::sqrt(static_cast<double>(trials)));
      EXPECT_NEAR(std::sqrt(sq[q]), sd, 0.2 * sd);
    }
  }
}

TEST(Gradient, SingleQubitAnalytic) {
  VQCParams p(1, 1);
  const std::vector<double> up{1.0};
  p.angles()[1] = std::numbers::pi / 3;
  for (auto method : {GradientMethod::Adjoint, GradientMethod::ParameterShift}) {
    const auto g = vqc_gradient(StateVector(1), p, up, method);
    EXPECT_NEAR(g[1], -std::sqrt(3.0) / 2, 1e-12);
  }
  p.angles()[1] = 0.0;
  EXPECT_NEAR(vqc_gradient(StateVector(1), p, up)[1], 0.0, 1e-10);
}

TEST(Gradient, AdjointParameterShiftAndFiniteDifferencesAgree) {
  std::mt19937_64 gen(12);
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t n = 4, blocks = 2;
    const CircuitLayout layout{trial % 2 ? Topology::Ring : Topology::Chain,
                               trial % 3 == 2 ? BlockOrder::RotateFirst : BlockOrder::EntangleFirst};
    const auto p = random_params(gen, n, blocks);
    const auto psi = tpe_encode(oracle::uniform_vector(gen, n, 0, 1));
    const auto up = oracle::uniform_vector(gen, n, -1, 1);
    const auto adj = vqc_gradient(psi, p, up, GradientMethod::Adjoint, layout);
    const auto ps = vqc_gradient(psi, p, up, GradientMethod::ParameterShift, layout);
    const auto fd = oracle::finite_difference(
        [&](const std::vector<double>& a) { return linear_objective(psi, VQCParams(n, blocks, a), up, layout); },
        std::vector<double>(p.angles().begin(), p.angles().end()));
    for (std::size_t i = 0; i < adj.size(); ++i) {
      EXPECT_NEAR(adj[i], ps[i], 1e-8);
      EXPECT_LE(std::abs(adj[i] - fd[i]), 1e-5 * std::max(1.0, std::abs(fd[i])));
    }
  }
}

TEST(Gradient, BackwardInputGradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(13);
  const std::size_t n = 3;
  const auto p = random_params(gen, n, 2);
  const auto x = oracle::uniform_vector(gen, n, 0.2, 0.8);
  const auto up = oracle::uniform_vector(gen, n, -1, 1);
  const auto back = vqc_backward(x, p, up);
  const auto z = measure_z_exact(pqc_forward(tpe_encode(x), p));
  for (std::size_t q = 0; q < n; ++q) EXPECT_NEAR(back.z[q], z[q], 1e-13);
  const auto fd = oracle::finite_difference(
      [&](const std::vector<double>& xv) { return linear_objective(tpe_encode(xv), p, up, {}); }, x);
  for (std::size_t q = 0; q < n; ++q) EXPECT_NEAR(back.input_grad[q], fd[q], 1e-7);
  const auto adj = vqc_gradient(tpe_encode(x), p, up);
  for (std::size_t i = 0; i < adj.size(); ++i) EXPECT_NEAR(back.angle_grad[i], adj[i], 1e-12);
}

TEST(Gradient, ShapeErrors) {
  const std::vector<double> up{1.0, 2.0};
  EXPECT_THROW(vqc_gradient(StateVector(3), VQCParams(3, 1), up), ShapeError);
  EXPECT_THROW(vqc_gradient(StateVector(2), VQCParams(3, 1), up), ShapeError);
}
