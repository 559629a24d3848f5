#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "qregress/error.hpp"
#include "qregress/model.hpp"

using namespace qregress;

namespace {

ModelConfig small_config(std::uint64_t seed) {
  ModelConfig c;
  c.kind = FrontKind::TTN;
  c.dims = {2, 4, 2};
  c.ranks = {1, 2, 2, 1};
  c.channel_out_dims = {2, 2, 1};
  c.qubits = 4;
  c.blocks = 2;
  c.output_dim = 5;
  c.seed = seed;
  c.readout_seed = seed + 100;
  return c;
}

RowMatrix random_rows(std::mt19937_64& gen, Eigen::Index n, Eigen::Index q, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  RowMatrix m(n, q);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < q; ++j) m(i, j) = d(gen);
  return m;
}

std::span<const double> row_span(const RowMatrix& m, Eigen::Index i) {
  return {m.row(i).data(), static_cast<std::size_t>(m.cols())};
}

double sample_mae(const Model& m, const SampleFeatures& f, std::span<const double> target) {
  return mae_loss(model_forward(m, f), target).mae;
}

void expect_gradient_matches_fd(Model model, const SampleFeatures& f, std::span<const double> target) {
  const auto g = sample_gradient(model, f, target);
  const auto theta = model.parameters();
  const auto fd = oracle::finite_difference(
      [&](const std::vector<double>& t) {
        Model m = model;
        m.set_parameters(t);
        return sample_mae(m, f, target);
      },
      theta);
  ASSERT_EQ(g.grad.size(), fd.size());
  for (std::size_t i = 0; i < fd.size(); ++i)
    EXPECT_LE(std::abs(g.grad[i] - fd[i]), 1e-4 * std::abs(fd[i]) + 1e-8) << "parameter " << i;
}

}  // namespace

TEST(Ttn, ZeroWeightsGiveHalfToTheK) {
  const TensorLayout layout({7, 16, 7}, {1, 3, 3, 1});
  const auto layer = TTNLayer::zeros(layout, {2, 2, 2});
  std::mt19937_64 gen(1);
  const auto x = oracle::uniform_vector(gen, 784, 0, 1);
  for (double y : ttn_forward(x, layer)) EXPECT_DOUBLE_EQ(y, 0.125);
}

TEST(Ttn, MnistShapesAndParameterCount) {
  ModelConfig c;
  const Model m = make_ttn_model(c);
  const auto& w = m.ttn().weights();
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w[0].rows(), 2);
  EXPECT_EQ(w[0].cols(), 21);
  EXPECT_EQ(w[1].cols(), 144);
  EXPECT_EQ(w[2].cols(), 21);
  EXPECT_EQ(m.ttn().parameter_count(), 372u);
  EXPECT_EQ(m.parameter_count(), 468u);
  EXPECT_EQ(model_norms(m).parameter_count, 468u);
  EXPECT_EQ(m.ttn().output_size(), 8u);
}

TEST(Ttn, SingleChannelIsDenseSigmoidLayer) {
  std::mt19937_64 gen(2);
  const TensorLayout layout({6}, {1, 1});
  Matrix w(3, 6);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = std::normal_distribution<double>()(gen);
  const TTNLayer layer(layout, {3}, {w});
  const auto x = oracle::uniform_vector(gen, 6, -1, 1);
  const auto y = ttn_forward(x, layer);
  for (Eigen::Index i = 0; i < 3; ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < 6; ++j) s += w(i, j) * x[static_cast<std::size_t>(j)];
    EXPECT_NEAR(y[static_cast<std::size_t>(i)], 1.0 / (1.0 + std::exp(-s)), 1e-14);
  }
}

TEST(Ttn, OuterProductOfChannelSigmoids) {
  std::mt19937_64 gen(3);
  Model m = make_ttn_model(small_config(3));
  const auto x = oracle::uniform_vector(gen, 16, 0, 1);
  const auto f = ttn_features(x, m.ttn().layout());
  const auto y = ttn_forward(x, m.ttn());
  // Channel activations by hand, then row-major outer product.
  std::vector<std::vector<double>> z;
  for (std::size_t k = 0; k < 3; ++k) {
    const Vector a = m.ttn().weights()[k] * f.channels[k];
    std::vector<double> zk;
    for (Eigen::Index i = 0; i < a.size(); ++i) zk.push_back(1.0 / (1.0 + std::exp(-a[i])));
    z.push_back(zk);
  }
  std::size_t idx = 0;
  for (double a : z[0])
    for (double b : z[1])
      for (double c : z[2]) EXPECT_NEAR(y[idx++], a * b * c, 1e-15);
  EXPECT_EQ(y, ttn_forward(x, m.ttn()));
}

TEST(Ttn, OutputStrictlyInsideUnitInterval) {
  std::mt19937_64 gen(4);
  Model m = make_ttn_model(small_config(4));
  for (int t = 0; t < 200; ++t) {
    const auto x = oracle::uniform_vector(gen, 16, -5, 5);
    for (double y : ttn_forward(x, m.ttn())) {
      EXPECT_GT(y, 0.0);
      EXPECT_LT(y, 1.0);
    }
  }
  EXPECT_THROW(ttn_forward(std::vector<double>(15, 0.0), m.ttn()), ShapeError);
}

TEST(Pca, RecoversAxesWithDistinctVariances) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> d;
  const std::vector<double> sd{1.0, 5.0, 0.2, 3.0};
  RowMatrix x(2000, 4);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < 4; ++j) x(i, j) = sd[static_cast<std::size_t>(j)] * d(gen);
  const auto pca = pca_fit(x, 2);
  EXPECT_NEAR(std::abs(pca.projection(0, 1)), 1.0, 1e-2);
  EXPECT_NEAR(std::abs(pca.projection(1, 3)), 1.0, 1e-2);
  // Oracle: Eigen's dense solver on the sample covariance.
  const Matrix c = x.rowwise() - x.colwise().mean();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(c.transpose() * c);
  EXPECT_NEAR(std::abs(pca.projection.row(0).dot(eig.eigenvectors().col(3))), 1.0, 1e-10);
  EXPECT_NEAR(std::abs(pca.projection.row(1).dot(eig.eigenvectors().col(2))), 1.0, 1e-10);
}

TEST(Pca, FullBasisIsOrthogonalAndLossless) {
  std::mt19937_64 gen(6);
  const RowMatrix x = random_rows(gen, 50, 5);
  const auto pca = pca_fit(x, 5);
  EXPECT_LT((pca.projection * pca.projection.transpose() - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-8);
  const Matrix centered = x.rowwise() - pca.mean.transpose();
  const Matrix back = centered * pca.projection.transpose() * pca.projection;
  EXPECT_LT((back - centered).cwiseAbs().maxCoeff(), 1e-8);
  const Matrix proj = centered * pca.projection.transpose();
  Matrix cov = proj.transpose() * proj / 49.0;
  cov.diagonal().setZero();
  EXPECT_LT(cov.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Pca, ConstantColumnNeverSelectedFirst) {
  std::mt19937_64 gen(7);
  RowMatrix x = random_rows(gen, 40, 4);
  x.col(2).setConstant(0.3);
  const auto pca = pca_fit(x, 3);
  for (Eigen::Index j = 0; j < 3; ++j) EXPECT_LT(std::abs(pca.projection(j, 2)), 1e-8);
  const auto full = pca_fit(x, 4);
  EXPECT_FALSE(full.warnings.empty());
  EXPECT_TRUE(full.constant[3]);
  EXPECT_THROW(pca_fit(x, 0), DomainError);
  EXPECT_THROW(pca_fit(x.topRows(3), 3), SizeError);
}

TEST(Pca, ProjectionScalesAndClips) {
  std::mt19937_64 gen(8);
  const RowMatrix x = random_rows(gen, 30, 3);
  const auto pca = pca_fit(x, 2);
  const Matrix proj = (x.rowwise() - pca.mean.transpose()) * pca.projection.transpose();
  Eigen::Index argmin;
  proj.col(0).minCoeff(&argmin);
  EXPECT_NEAR(pca_project(row_span(x, argmin), pca)[0], 0.0, 1e-12);
  // A point far along the first direction clips to 1.
  Vector far = pca.mean + 100.0 * pca.projection.row(0).transpose();
  EXPECT_EQ(pca_project(std::vector<double>(far.data(), far.data() + 3), pca)[0], 1.0);
  const auto y = pca_project(row_span(x, 4), pca);
  for (Eigen::Index j = 0; j < 2; ++j) {
    const double want = (proj(4, j) - pca.scale_min[j]) / (pca.scale_max[j] - pca.scale_min[j]);
    EXPECT_NEAR(y[static_cast<std::size_t>(j)], want, 1e-12);
  }
}

TEST(ModelForward, IdentityReadoutReturnsZ) {
  ModelConfig c = small_config(9);
  c.readout = ReadoutKind::Identity;
  c.output_dim = 4;
  const Model m = make_ttn_model(c);
  std::mt19937_64 gen(9);
  const auto x = oracle::uniform_vector(gen, 16, 0, 1);
  const auto f = extract_features(m, x);
  EXPECT_EQ(model_forward(m, f), measure_z_exact(model_state(m, f)));
}

TEST(ModelForward, ZeroParametersMatchDenseCircuitOracle) {
  ModelConfig c = small_config(10);
  c.readout = ReadoutKind::Identity;
  c.output_dim = 4;
  Model m = make_ttn_model(c);
  m.set_parameters(std::vector<double>(m.parameter_count(), 0.0));
  std::mt19937_64 gen(10);
  const auto x = oracle::uniform_vector(gen, 16, 0, 1);
  const double y = std::pow(0.5, 3);
  const oracle::CVec psi = oracle::pqc(std::vector<double>(24, 0.0), 4, 2) * oracle::product_state(std::vector<double>(4, y));
  const auto want = oracle::z_brute(psi, 4);
  const auto got = model_forward(m, x);
  for (std::size_t q = 0; q < 4; ++q) EXPECT_NEAR(got[q], want[q], 1e-12);
}

TEST(ModelForward, ManyShotsApproachExact) {
  const Model m = make_ttn_model(small_config(11));
  std::mt19937_64 gen(11);
  const auto x = oracle::uniform_vector(gen, 16, 0, 1);
  const auto exact = model_forward(m, x);
  const auto shots = model_forward(m, x, MeasureMode::sampled(1000000, 3));
  for (std::size_t j = 0; j < exact.size(); ++j) EXPECT_NEAR(shots[j], exact[j], 0.01);
}

TEST(ModelForward, FiniteOverManyRandomInputs) {
  const Model m = make_ttn_model(small_config(12));
  std::mt19937_64 gen(12);
  for (int t = 0; t < 10000; ++t) {
    const auto x = oracle::uniform_vector(gen, 16, -10, 10);
    for (double v : model_forward(m, x)) ASSERT_TRUE(std::isfinite(v));
  }
}

TEST(Mae, Examples) {
  const std::vector<double> a{0, 1}, b{1, 0};
  EXPECT_EQ(mae_loss(a, a).mae, 0.0);
  EXPECT_EQ(mae_loss(a, b).mae, 1.0);
  std::mt19937_64 gen(13);
  const auto p = oracle::uniform_vector(gen, 37, -1, 1);
  const auto q = oracle::uniform_vector(gen, 37, -1, 1);
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  EXPECT_NEAR(mae_loss(p, q).mae, s / 37.0, 1e-15);
  const auto r = mae_loss(p, q);
  if (r.per_sample) {
    double m = 0;
    for (double v : *r.per_sample) m += v;
    EXPECT_NEAR(m / static_cast<double>(r.per_sample->size()), r.mae, 1e-15);
  }
  EXPECT_THROW(mae_loss(a, std::vector<double>{1.0}), ShapeError);
}

TEST(Gradients, TtnModelsMatchFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Model m = make_ttn_model(small_config(seed));
    std::mt19937_64 gen(seed);
    const auto x = oracle::uniform_vector(gen, 16, 0, 1);
    const auto target = oracle::uniform_vector(gen, 5, -1, 1);
    expect_gradient_matches_fd(m, extract_features(m, x), target);
  }
}

TEST(Gradients, PcaModelMatchesFiniteDifferences) {
  std::mt19937_64 gen(14);
  ModelConfig c = small_config(14);
  c.kind = FrontKind::PCA;
  c.qubits = 3;
  const RowMatrix train = random_rows(gen, 30, 16);
  const Model m = make_pca_model(c, train);
  const auto target = oracle::uniform_vector(gen, 5, -1, 1);
  expect_gradient_matches_fd(m, extract_features(m, row_span(train, 0)), target);
}

TEST(Gradients, ZeroUpstreamAndTiesGiveZero) {
  const Model m = make_ttn_model(small_config(15));
  std::mt19937_64 gen(15);
  const auto f = extract_features(m, oracle::uniform_vector(gen, 16, 0, 1));
  for (double g : backprop_from_z(m, f, std::vector<double>(4, 0.0))) EXPECT_EQ(g, 0.0);
  const auto pred = model_forward(m, f);
  const auto s = sample_gradient(m, f, pred);
  EXPECT_EQ(s.loss, 0.0);
  for (double g : s.grad) EXPECT_EQ(g, 0.0);
}

TEST(Gradients, BatchIsMeanOfSamplesAndRejectsShots) {
  const Model m = make_ttn_model(small_config(16));
  std::mt19937_64 gen(16);
  const RowMatrix x = random_rows(gen, 6, 16);
  const RowMatrix y = random_rows(gen, 6, 5);
  const auto feats = extract_features(m, x);
  const std::vector<std::size_t> rows{0, 2, 5};
  const auto batch = model_gradients(m, feats, y, rows);
  std::vector<double> mean(m.parameter_count(), 0.0);
  double loss = 0;
  for (std::size_t r : rows) {
    const auto s = sample_gradient(m, feats[r], row_span(y, static_cast<Eigen::Index>(r)));
    loss += s.loss / 3;
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += s.grad[i] / 3;
  }
  EXPECT_NEAR(batch.loss, loss, 1e-14);
  for (std::size_t i = 0; i < mean.size(); ++i) EXPECT_NEAR(batch.grad[i], mean[i], 1e-14);
  EXPECT_THROW(model_gradients(m, feats, y, rows, MeasureMode::sampled(10, 1)), UnsupportedError);
}

TEST(Gradients, JacobianRowsMatchFiniteDifferences) {
  Model m = make_ttn_model(small_config(17));
  std::mt19937_64 gen(17);
  const RowMatrix x = random_rows(gen, 2, 16);
  const auto feats = extract_features(m, x);
  const std::vector<std::size_t> rows{1};
  const Matrix jac = model_jacobian(m, feats, rows);
  const auto theta = m.parameters();
  for (std::size_t j = 0; j < m.output_dim(); ++j) {
    const auto fd = oracle::finite_difference(
        [&](const std::vector<double>& t) {
          Model mm = m;
          mm.set_parameters(t);
          return model_forward(mm, feats[1])[j];
        },
        theta);
    for (std::size_t i = 0; i < fd.size(); ++i)
      EXPECT_NEAR(jac(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)), fd[i], 1e-8);
  }
}

TEST(Norms, FrobeniusValues) {
  Model m = make_ttn_model(small_config(18));
  m.set_parameters(std::vector<double>(m.parameter_count(), 0.0));
  for (double l : model_norms(m).channel) EXPECT_EQ(l, 0.0);
  ModelConfig c = small_config(19);
  c.channel_out_dims = {1, 3, 1};
  c.qubits = 3;
  const Model m3 = make_ttn_model(c);
  EXPECT_NEAR(model_norms(m3).circuit, std::pow(2.0, 1.5), 1e-9);
  EXPECT_NEAR(pqc_unitary(m3.vqc()).norm(), model_norms(m3).circuit, 1e-9);
  const auto n = model_norms(make_ttn_model(small_config(20)));
  const auto w = make_ttn_model(small_config(20)).ttn().weights();
  for (std::size_t k = 0; k < w.size(); ++k) EXPECT_NEAR(n.channel[k], w[k].norm(), 1e-15);
}

TEST(Readout, RandomEntriesBoundedAndPrincipalScaled) {
  ModelConfig c = small_config(21);
  c.output_dim = 30;
  const Matrix r = make_readout(c);
  EXPECT_LE(r.cwiseAbs().maxCoeff(), 0.5);
  EXPECT_EQ(r, make_readout(c));
  std::mt19937_64 gen(21);
  const RowMatrix y = random_rows(gen, 40, 30);
  const Matrix p = principal_readout(y, 4);
  // Columns are orthogonal; each target's coefficient on a normalized
  // column scaled by the column norm squared lies in [-1, 1].
  for (Eigen::Index a = 0; a < 4; ++a)
    for (Eigen::Index b = a + 1; b < 4; ++b) EXPECT_NEAR(p.col(a).dot(p.col(b)), 0.0, 1e-8);
  for (Eigen::Index a = 0; a < 4; ++a) {
    const double n2 = p.col(a).squaredNorm();
    const Vector coeff = y * p.col(a) / n2;
    EXPECT_LE(coeff.cwiseAbs().maxCoeff(), 1.0 + 1e-12);
    EXPECT_NEAR(coeff.cwiseAbs().maxCoeff(), 1.0, 1e-12);
  }
  c.readout = ReadoutKind::Principal;
  EXPECT_THROW(make_ttn_model(c), DomainError);
}

TEST(Checkpoint, RoundTripPreservesOutputs) {
  const Model m = make_ttn_model(small_config(22));
  const Model back = checkpoint_from_string(checkpoint_to_string(m));
  EXPECT_EQ(back.parameters(), m.parameters());
  EXPECT_EQ(back.readout(), m.readout());
  std::mt19937_64 gen(22);
  const auto x = oracle::uniform_vector(gen, 16, 0, 1);
  EXPECT_EQ(model_forward(back, x), model_forward(m, x));
  EXPECT_EQ(checkpoint_to_string(back), checkpoint_to_string(m));

  ModelConfig c = small_config(23);
  c.kind = FrontKind::PCA;
  c.qubits = 3;
  const Model p = make_pca_model(c, random_rows(gen, 20, 16));
  const Model pb = checkpoint_from_string(checkpoint_to_string(p));
  EXPECT_EQ(model_forward(pb, x), model_forward(p, x));

  EXPECT_THROW(checkpoint_from_string("{}"), FormatError);
  EXPECT_THROW(checkpoint_from_string("not json"), FormatError);
}

TEST(Parameters, SetRejectsWrongLengthAndNonFinite) {
  Model m = make_ttn_model(small_config(24));
  EXPECT_THROW(m.set_parameters(std::vector<double>(3, 0.0)), ShapeError);
  auto t = m.parameters();
  t[0] = std::nan("");
  EXPECT_THROW(m.set_parameters(t), DataError);
  ModelConfig bad = small_config(24);
  bad.channel_out_dims = {2, 2, 2};
  EXPECT_THROW(make_ttn_model(bad), ShapeError);
}

TEST(Parameters, InitializationIsSeededAndBounded) {
  const Model a = make_ttn_model(small_config(25));
  const Model b = make_ttn_model(small_config(25));
  EXPECT_EQ(a.parameters(), b.parameters());
  for (double v : a.vqc().angles()) EXPECT_LE(std::abs(v), 0.1);
  EXPECT_NE(a.parameters(), make_ttn_model(small_config(26)).parameters());
}
