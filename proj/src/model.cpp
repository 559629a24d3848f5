#include "qregress/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "qregress/error.hpp"
#include "qregress/parallel.hpp"
#include "qregress/rng.hpp"

namespace qregress {
namespace {

using nlohmann::json;

constexpr int kCheckpointVersion = 1;

std::size_t product(const std::vector<std::size_t>& v) {
  return std::accumulate(v.begin(), v.end(), std::size_t{1}, std::multiplies<>());
}

// Per-channel sigmoid activations for a TTN layer.
std::vector<Vector> channel_activations(const SampleFeatures& f, const TTNLayer& layer) {
  std::vector<Vector> z;
  z.reserve(layer.weights().size());
  for (std::size_t k = 0; k < layer.weights().size(); ++k) {
    Vector a = layer.weights()[k] * f.channels[k];
    z.emplace_back(a.unaryExpr([](double t) { return sigmoid(t); }));
  }
  return z;
}

// Row-major outer product of the channel activation vectors.
std::vector<double> outer_product(const std::vector<Vector>& z, const std::vector<std::size_t>& dims) {
  const std::size_t total = product(dims);
  std::vector<double> y(total);
  std::vector<std::size_t> idx(dims.size(), 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    double v = 1.0;
    for (std::size_t k = 0; k < dims.size(); ++k) v *= z[k][static_cast<Eigen::Index>(idx[k])];
    y[flat] = v;
    for (std::size_t k = dims.size(); k-- > 0;) {
      if (++idx[k] < dims[k]) break;
      idx[k] = 0;
    }
  }
  return y;
}

void check_features(const Model& model, const SampleFeatures& f) {
  if (model.is_ttn()) {
    const auto& w = model.ttn().weights();
    if (f.channels.size() != w.size()) throw ShapeError("features: channel count mismatch");
    for (std::size_t k = 0; k < w.size(); ++k)
      if (f.channels[k].size() != w[k].cols()) throw ShapeError("features: channel length mismatch");
  } else if (f.channels.size() != 1 ||
             static_cast<std::size_t>(f.channels[0].size()) != model.qubits()) {
    throw ShapeError("features: PCA features must be one vector of length U");
  }
}

json matrix_to_json(const Matrix& m) {
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) values.push_back(m(i, j));
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"values", values}};
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto values = j.at("values").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(values.size()) != rows * cols)
    throw FormatError("checkpoint: matrix value count does not match shape");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = values[static_cast<std::size_t>(i * cols + c)];
  return m;
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }
Vector to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

// ---------------------------------------------------------------------------
// TTNLayer

TTNLayer::TTNLayer(TensorLayout layout, std::vector<std::size_t> channel_out_dims,
                   std::vector<Matrix> weights)
    : layout_(std::move(layout)), out_dims_(std::move(channel_out_dims)), weights_(std::move(weights)) {
  const std::size_t order = layout_.order();
  if (out_dims_.size() != order)
    throw ShapeError("TTNLayer: need one output dim per tensor mode");
  if (weights_.size() != order) throw ShapeError("TTNLayer: need one weight matrix per channel");
  for (std::size_t k = 0; k < order; ++k) {
    if (out_dims_[k] == 0) throw ShapeError("TTNLayer: output dims must be positive");
    if (static_cast<std::size_t>(weights_[k].rows()) != out_dims_[k] ||
        static_cast<std::size_t>(weights_[k].cols()) != layout_.core_size(k))
      throw ShapeError("TTNLayer: weight " + std::to_string(k) + " must be " +
                       std::to_string(out_dims_[k]) + "x" + std::to_string(layout_.core_size(k)));
  }
}

TTNLayer TTNLayer::zeros(TensorLayout layout, std::vector<std::size_t> channel_out_dims) {
  std::vector<Matrix> w;
  for (std::size_t k = 0; k < layout.order() && k < channel_out_dims.size(); ++k)
    w.push_back(Matrix::Zero(static_cast<Eigen::Index>(channel_out_dims[k]),
                             static_cast<Eigen::Index>(layout.core_size(k))));
  return TTNLayer(std::move(layout), std::move(channel_out_dims), std::move(w));
}

std::size_t TTNLayer::output_size() const noexcept { return product(out_dims_); }

std::size_t TTNLayer::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const Matrix& w : weights_) n += static_cast<std::size_t>(w.size());
  return n;
}

// ---------------------------------------------------------------------------
// Model

Model::Model(ModelConfig config, Front front, VQCParams vqc, Matrix readout)
    : config_(std::move(config)), front_(std::move(front)), vqc_(std::move(vqc)), readout_(std::move(readout)) {
  const std::size_t u = vqc_.num_qubits();
  if (static_cast<std::size_t>(readout_.cols()) != u)
    throw ShapeError("Model: readout has " + std::to_string(readout_.cols()) + " columns for " +
                     std::to_string(u) + " qubits");
  if (const auto* t = std::get_if<TTNLayer>(&front_)) {
    if (t->output_size() != u)
      throw ShapeError("Model: TTN output size " + std::to_string(t->output_size()) +
                       " != qubit count " + std::to_string(u));
  } else {
    const auto& p = std::get<PCAFrontEnd>(front_);
    if (static_cast<std::size_t>(p.projection.rows()) != u)
      throw ShapeError("Model: PCA projection rows != qubit count");
  }
}

std::size_t Model::input_dim() const {
  if (is_ttn()) return ttn().layout().size();
  return static_cast<std::size_t>(pca().projection.cols());
}

std::size_t Model::parameter_count() const noexcept {
  std::size_t n = vqc_.size();
  if (const auto* t = std::get_if<TTNLayer>(&front_)) n += t->parameter_count();
  return n;
}

std::vector<double> Model::parameters() const {
  std::vector<double> theta;
  theta.reserve(parameter_count());
  if (const auto* t = std::get_if<TTNLayer>(&front_)) {
    for (const Matrix& w : t->weights())
      for (Eigen::Index i = 0; i < w.rows(); ++i)
        for (Eigen::Index j = 0; j < w.cols(); ++j) theta.push_back(w(i, j));
  }
  theta.insert(theta.end(), vqc_.angles().begin(), vqc_.angles().end());
  return theta;
}

void Model::set_parameters(std::span<const double> theta) {
  if (theta.size() != parameter_count())
    throw ShapeError("Model::set_parameters: expected " + std::to_string(parameter_count()) +
                     " values, got " + std::to_string(theta.size()));
  for (double v : theta)
    if (!std::isfinite(v)) throw DataError("Model::set_parameters: non-finite parameter");
  std::size_t pos = 0;
  if (auto* t = std::get_if<TTNLayer>(&front_)) {
    for (Matrix& w : t->weights())
      for (Eigen::Index i = 0; i < w.rows(); ++i)
        for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = theta[pos++];
  }
  std::copy(theta.begin() + static_cast<std::ptrdiff_t>(pos), theta.end(), vqc_.angles().begin());
}

// ---------------------------------------------------------------------------
// Front ends

SampleFeatures ttn_features(std::span<const double> x, const TensorLayout& layout) {
  const TTVector tt = tt_svd(reshape_to_tensor(x, layout.dims()), layout.ranks());
  SampleFeatures f;
  for (const TTCore& core : tt.cores()) f.channels.push_back(to_eigen(core.data));
  return f;
}

std::vector<double> ttn_forward_features(const SampleFeatures& features, const TTNLayer& layer) {
  return outer_product(channel_activations(features, layer), layer.channel_out_dims());
}

std::vector<double> ttn_forward(std::span<const double> x, const TTNLayer& layer) {
  if (x.size() != layer.layout().size())
    throw ShapeError("ttn_forward: input length " + std::to_string(x.size()) + " != " +
                     std::to_string(layer.layout().size()));
  return ttn_forward_features(ttn_features(x, layer.layout()), layer);
}

PCAFrontEnd pca_fit(const RowMatrix& inputs, std::size_t qubits) {
  const auto n = inputs.rows();
  const auto q = inputs.cols();
  if (qubits == 0 || static_cast<Eigen::Index>(qubits) > q)
    throw DomainError("pca_fit: component count must be in [1, Q]");
  if (n <= static_cast<Eigen::Index>(qubits)) throw SizeError("pca_fit: need more samples than components");
  if (!inputs.allFinite()) throw DataError("pca_fit: non-finite inputs");

  PCAFrontEnd pca;
  pca.mean = inputs.colwise().mean().transpose();
  const Matrix centered = inputs.rowwise() - pca.mean.transpose();
  const Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericalError("pca_fit: eigensolver failed", 0);

  const auto u = static_cast<Eigen::Index>(qubits);
  Matrix directions(q, u);
  const double top = std::max(eig.eigenvalues()[q - 1], 0.0);
  std::size_t positive = 0;
  for (Eigen::Index j = 0; j < u; ++j) {
    directions.col(j) = eig.eigenvectors().col(q - 1 - j);
    if (eig.eigenvalues()[q - 1 - j] > 1e-12 * std::max(top, 1e-300)) ++positive;
  }
  if (positive < qubits)
    pca.warnings.push_back("pca_fit: only " + std::to_string(positive) +
                           " positive-variance directions; remaining components span the null space");
  linalg::fix_column_signs(directions);
  pca.projection = directions.transpose();

  const Matrix projected = centered * directions;  // N x U
  pca.scale_min = projected.colwise().minCoeff().transpose();
  pca.scale_max = projected.colwise().maxCoeff().transpose();
  pca.constant.assign(qubits, false);
  for (Eigen::Index j = 0; j < u; ++j) {
    const double span = pca.scale_max[j] - pca.scale_min[j];
    if (!(span > 1e-12 * (1.0 + std::abs(pca.scale_max[j])))) pca.constant[static_cast<std::size_t>(j)] = true;
  }
  return pca;
}

std::vector<double> pca_project(std::span<const double> x, const PCAFrontEnd& pca) {
  if (static_cast<Eigen::Index>(x.size()) != pca.projection.cols())
    throw ShapeError("pca_project: input length mismatch");
  const Vector centered = Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size())) - pca.mean;
  const Vector p = pca.projection * centered;
  std::vector<double> out(static_cast<std::size_t>(p.size()));
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    const auto uj = static_cast<std::size_t>(j);
    if (pca.constant[uj]) {
      out[uj] = 0.5;
      continue;
    }
    const double s = (p[j] - pca.scale_min[j]) / (pca.scale_max[j] - pca.scale_min[j]);
    out[uj] = std::clamp(s, 0.0, 1.0);
  }
  return out;
}

SampleFeatures extract_features(const Model& model, std::span<const double> x) {
  if (x.size() != model.input_dim())
    throw ShapeError("extract_features: input length " + std::to_string(x.size()) + " != " +
                     std::to_string(model.input_dim()));
  if (model.is_ttn()) return ttn_features(x, model.ttn().layout());
  SampleFeatures f;
  f.channels.push_back(to_eigen(pca_project(x, model.pca())));
  return f;
}

std::vector<SampleFeatures> extract_features(const Model& model, const RowMatrix& inputs) {
  std::vector<SampleFeatures> out(static_cast<std::size_t>(inputs.rows()));
  parallel_for(out.size(), [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    out[i] = extract_features(model, std::span<const double>(inputs.row(row).data(),
                                                             static_cast<std::size_t>(inputs.cols())));
  });
  return out;
}

std::vector<double> front_forward(const Model& model, const SampleFeatures& features) {
  check_features(model, features);
  if (model.is_ttn()) return ttn_forward_features(features, model.ttn());
  return to_std(features.channels[0]);
}

// ---------------------------------------------------------------------------
// Forward / loss

StateVector model_state(const Model& model, const SampleFeatures& features) {
  const auto y = front_forward(model, features);
  return pqc_forward(tpe_encode(y), model.vqc(), model.config().circuit);
}

std::vector<double> model_forward(const Model& model, const SampleFeatures& features,
                                  const MeasureMode& mode) {
  const StateVector psi = model_state(model, features);
  const std::vector<double> z =
      mode.shots ? measure_z_shots(psi, *mode.shots, mode.seed).estimates : measure_z_exact(psi);
  const Vector out = model.readout() * to_eigen(z);
  return to_std(out);
}

std::vector<double> model_forward(const Model& model, std::span<const double> x, const MeasureMode& mode) {
  return model_forward(model, extract_features(model, x), mode);
}

LossReport mae_loss(std::span<const double> prediction, std::span<const double> target) {
  if (prediction.size() != target.size())
    throw ShapeError("mae_loss: lengths " + std::to_string(prediction.size()) + " and " +
                     std::to_string(target.size()) + " differ");
  if (prediction.empty()) throw ShapeError("mae_loss: empty vectors");
  double acc = 0.0;
  for (std::size_t j = 0; j < prediction.size(); ++j) acc += std::abs(prediction[j] - target[j]);
  return {acc / static_cast<double>(prediction.size()), std::nullopt};
}

// ---------------------------------------------------------------------------
// Gradients

std::vector<double> backprop_from_z(const Model& model, const SampleFeatures& features,
                                    std::span<const double> upstream) {
  check_features(model, features);
  std::vector<double> grad(model.parameter_count(), 0.0);
  std::vector<Vector> activations;
  std::vector<double> y;
  if (model.is_ttn()) {
    activations = channel_activations(features, model.ttn());
    y = outer_product(activations, model.ttn().channel_out_dims());
  } else {
    y = to_std(features.channels[0]);
  }

  const VQCBackward back = vqc_backward(y, model.vqc(), upstream, model.config().circuit);
  const std::size_t vqc_offset = grad.size() - model.vqc().size();
  std::copy(back.angle_grad.begin(), back.angle_grad.end(), grad.begin() + static_cast<std::ptrdiff_t>(vqc_offset));
  if (!model.is_ttn()) return grad;

  // Outer product backward: dL/dz^[k]_u = sum over y entries with u_k = u of
  // dL/dy * prod_{j != k} z^[j]_{u_j}.
  const TTNLayer& layer = model.ttn();
  const auto& dims = layer.channel_out_dims();
  const std::size_t order = dims.size();
  std::vector<Vector> dz;
  for (std::size_t k = 0; k < order; ++k) dz.push_back(Vector::Zero(static_cast<Eigen::Index>(dims[k])));
  std::vector<std::size_t> idx(order, 0);
  for (std::size_t flat = 0; flat < y.size(); ++flat) {
    for (std::size_t k = 0; k < order; ++k) {
      double others = back.input_grad[flat];
      for (std::size_t j = 0; j < order; ++j)
        if (j != k) others *= activations[j][static_cast<Eigen::Index>(idx[j])];
      dz[k][static_cast<Eigen::Index>(idx[k])] += others;
    }
    for (std::size_t k = order; k-- > 0;) {
      if (++idx[k] < dims[k]) break;
      idx[k] = 0;
    }
  }

  std::size_t pos = 0;
  for (std::size_t k = 0; k < order; ++k) {
    const Vector& s = activations[k];
    const Vector da = dz[k].cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix()));
    const Matrix dw = da * features.channels[k].transpose();
    for (Eigen::Index i = 0; i < dw.rows(); ++i)
      for (Eigen::Index j = 0; j < dw.cols(); ++j) grad[pos++] = dw(i, j);
  }
  return grad;
}

SampleGradient sample_gradient(const Model& model, const SampleFeatures& features,
                               std::span<const double> target) {
  if (target.size() != model.output_dim()) throw ShapeError("sample_gradient: target length mismatch");
  SampleGradient out;
  out.prediction = model_forward(model, features);
  const std::size_t q_out = target.size();
  Vector dpred(static_cast<Eigen::Index>(q_out));
  double acc = 0.0;
  for (std::size_t j = 0; j < q_out; ++j) {
    const double r = out.prediction[j] - target[j];
    acc += std::abs(r);
    dpred[static_cast<Eigen::Index>(j)] = (r > 0 ? 1.0 : (r < 0 ? -1.0 : 0.0)) / static_cast<double>(q_out);
  }
  out.loss = acc / static_cast<double>(q_out);
  const Vector dz = model.readout().transpose() * dpred;
  out.grad = backprop_from_z(model, features, to_std(dz));
  return out;
}

BatchGradient model_gradients(const Model& model, std::span<const SampleFeatures> features,
                              const RowMatrix& targets, std::span<const std::size_t> rows,
                              const MeasureMode& mode) {
  if (mode.shots) throw UnsupportedError("model_gradients: gradients require exact measurement mode");
  if (rows.empty()) throw SizeError("model_gradients: empty batch");
  std::vector<SampleGradient> per(rows.size());
  parallel_for(rows.size(), [&](std::size_t i) {
    const std::size_t r = rows[i];
    const auto row = static_cast<Eigen::Index>(r);
    per[i] = sample_gradient(model, features[r],
                             std::span<const double>(targets.row(row).data(), static_cast<std::size_t>(targets.cols())));
  });
  BatchGradient out;
  out.grad.assign(model.parameter_count(), 0.0);
  for (const SampleGradient& s : per) {
    out.loss += s.loss;
    for (std::size_t j = 0; j < out.grad.size(); ++j) out.grad[j] += s.grad[j];
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  out.loss *= inv;
  for (double& g : out.grad) g *= inv;
  return out;
}

double evaluate_mae(const Model& model, std::span<const SampleFeatures> features,
                    const RowMatrix& targets, const MeasureMode& mode) {
  if (features.size() != static_cast<std::size_t>(targets.rows()))
    throw ShapeError("evaluate_mae: feature and target counts differ");
  if (features.empty()) throw SizeError("evaluate_mae: empty dataset");
  std::vector<double> losses(features.size());
  parallel_for(features.size(), [&](std::size_t i) {
    MeasureMode m = mode;
    m.seed = mix64(mode.seed ^ (i * 0x9e3779b97f4a7c15ULL));
    const auto pred = model_forward(model, features[i], m);
    const auto row = static_cast<Eigen::Index>(i);
    losses[i] = mae_loss(pred, std::span<const double>(targets.row(row).data(),
                                                       static_cast<std::size_t>(targets.cols())))
                    .mae;
  });
  double acc = 0.0;
  for (double l : losses) acc += l;
  return acc / static_cast<double>(losses.size());
}

Matrix model_jacobian(const Model& model, std::span<const SampleFeatures> features,
                      std::span<const std::size_t> rows) {
  const std::size_t q_out = model.output_dim();
  Matrix jac(static_cast<Eigen::Index>(rows.size() * q_out), static_cast<Eigen::Index>(model.parameter_count()));
  parallel_for(rows.size(), [&](std::size_t i) {
    for (std::size_t j = 0; j < q_out; ++j) {
      const Vector up = model.readout().row(static_cast<Eigen::Index>(j)).transpose();
      const auto g = backprop_from_z(model, features[rows[i]], to_std(up));
      jac.row(static_cast<Eigen::Index>(i * q_out + j)) = to_eigen(g).transpose();
    }
  });
  return jac;
}

ModelNorms model_norms(const Model& model) {
  ModelNorms n;
  if (model.is_ttn())
    for (const Matrix& w : model.ttn().weights()) n.channel.push_back(w.norm());
  n.circuit = std::sqrt(std::ldexp(1.0, static_cast<int>(model.qubits())));
  n.parameter_count = model.parameter_count();
  n.parameter_bytes = n.parameter_count * sizeof(double);
  return n;
}

// ---------------------------------------------------------------------------
// Construction

Matrix make_readout(const ModelConfig& config) {
  const auto rows = static_cast<Eigen::Index>(config.output_dim);
  const auto cols = static_cast<Eigen::Index>(config.qubits);
  switch (config.readout) {
    case ReadoutKind::Identity:
      if (rows != cols) throw ShapeError("make_readout: identity readout needs output_dim == qubits");
      return Matrix::Identity(rows, cols);
    case ReadoutKind::Random: {
      CounterRng rng(config.readout_seed, 0x7265'6164ULL);
      const double bound = 1.0 / std::sqrt(static_cast<double>(config.qubits));
      Matrix m(rows, cols);
      for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
      return m;
    }
    case ReadoutKind::Principal:
      throw DomainError("make_readout: principal readout needs training targets");
  }
  throw DomainError("make_readout: unknown readout kind");
}

Matrix principal_readout(const RowMatrix& targets, std::size_t qubits) {
  const auto u = static_cast<Eigen::Index>(qubits);
  if (targets.rows() < u || targets.cols() < u)
    throw SizeError("principal_readout: need at least U samples and U output dims");
  // Right singular vectors from the Gram matrix Y^T Y (Q_out x Q_out).
  const Matrix gram = targets.transpose() * targets;
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  if (eig.info() != Eigen::Success) throw NumericalError("principal_readout: eigensolver failed", 0);
  const auto q = gram.rows();
  Matrix directions(q, u);
  for (Eigen::Index j = 0; j < u; ++j) directions.col(j) = eig.eigenvectors().col(q - 1 - j);
  linalg::fix_column_signs(directions);
  const Matrix coeffs = targets * directions;  // N x U
  for (Eigen::Index j = 0; j < u; ++j) {
    const double scale = coeffs.col(j).cwiseAbs().maxCoeff();
    directions.col(j) *= scale > 0 ? scale : 1.0;
  }
  return directions;
}

void initialize_parameters(Model& model, std::uint64_t seed) {
  CounterRng rng(seed, 0x696e6974ULL);
  if (auto* t = std::get_if<TTNLayer>(&model.front())) {
    for (Matrix& w : t->weights()) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
      for (Eigen::Index i = 0; i < w.rows(); ++i)
        for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-bound, bound);
    }
  }
  for (double& a : model.vqc().angles()) a = rng.uniform(-0.1, 0.1);
}

Model make_ttn_model(const ModelConfig& config, const RowMatrix* targets) {
  if (config.kind != FrontKind::TTN) throw DomainError("make_ttn_model: config kind is not ttn");
  TensorLayout layout(config.dims, config.ranks);
  if (product(config.channel_out_dims) != config.qubits)
    throw ShapeError("make_ttn_model: product of channel output dims must equal the qubit count");
  Matrix readout = config.readout == ReadoutKind::Principal
                       ? (targets ? principal_readout(*targets, config.qubits)
                                  : throw DomainError("make_ttn_model: principal readout needs targets"))
                       : make_readout(config);
  Model model(config, TTNLayer::zeros(std::move(layout), config.channel_out_dims),
              VQCParams(config.qubits, config.blocks), std::move(readout));
  initialize_parameters(model, config.seed);
  return model;
}

Model make_pca_model(const ModelConfig& config, const RowMatrix& train_inputs, const RowMatrix* targets) {
  if (config.kind != FrontKind::PCA) throw DomainError("make_pca_model: config kind is not pca");
  Matrix readout = config.readout == ReadoutKind::Principal
                       ? (targets ? principal_readout(*targets, config.qubits)
                                  : throw DomainError("make_pca_model: principal readout needs targets"))
                       : make_readout(config);
  Model model(config, pca_fit(train_inputs, config.qubits), VQCParams(config.qubits, config.blocks),
              std::move(readout));
  initialize_parameters(model, config.seed);
  return model;
}

// ---------------------------------------------------------------------------
// Enum names

std::string to_string(FrontKind kind) { return kind == FrontKind::TTN ? "ttn-vqc" : "pca-vqc"; }

std::string to_string(ReadoutKind kind) {
  switch (kind) {
    case ReadoutKind::Random: return "random";
    case ReadoutKind::Identity: return "identity";
    case ReadoutKind::Principal: return "principal";
  }
  return "random";
}

std::string to_string(Topology topology) { return topology == Topology::Chain ? "chain" : "ring"; }

std::string to_string(BlockOrder order) {
  return order == BlockOrder::EntangleFirst ? "entangle-first" : "rotate-first";
}

FrontKind parse_front_kind(const std::string& s) {
  if (s == "ttn-vqc" || s == "ttn") return FrontKind::TTN;
  if (s == "pca-vqc" || s == "pca") return FrontKind::PCA;
  throw DomainError("unknown model kind '" + s + "'");
}

ReadoutKind parse_readout_kind(const std::string& s) {
  if (s == "random") return ReadoutKind::Random;
  if (s == "identity") return ReadoutKind::Identity;
  if (s == "principal") return ReadoutKind::Principal;
  throw DomainError("unknown readout kind '" + s + "'");
}

Topology parse_topology(const std::string& s) {
  if (s == "chain") return Topology::Chain;
  if (s == "ring") return Topology::Ring;
  throw DomainError("unknown topology '" + s + "'");
}

BlockOrder parse_block_order(const std::string& s) {
  if (s == "entangle-first") return BlockOrder::EntangleFirst;
  if (s == "rotate-first") return BlockOrder::RotateFirst;
  throw DomainError("unknown block order '" + s + "'");
}

// ---------------------------------------------------------------------------
// Checkpoints

std::string checkpoint_to_string(const Model& model) {
  const ModelConfig& c = model.config();
  json doc;
  doc["format"] = "qregress.checkpoint";
  doc["version"] = kCheckpointVersion;
  doc["config"] = {{"kind", to_string(c.kind)},
                   {"dims", c.dims},
                   {"ranks", c.ranks},
                   {"channel_out_dims", c.channel_out_dims},
                   {"qubits", c.qubits},
                   {"blocks", c.blocks},
                   {"topology", to_string(c.circuit.topology)},
                   {"order", to_string(c.circuit.order)},
                   {"readout", to_string(c.readout)},
                   {"output_dim", c.output_dim},
                   {"seed", c.seed},
                   {"readout_seed", c.readout_seed}};
  if (model.is_ttn()) {
    json weights = json::array();
    for (const Matrix& w : model.ttn().weights()) weights.push_back(matrix_to_json(w));
    doc["front"] = {{"kind", "ttn"}, {"weights", weights}};
  } else {
    const PCAFrontEnd& p = model.pca();
    doc["front"] = {{"kind", "pca"},
                    {"mean", to_std(p.mean)},
                    {"projection", matrix_to_json(p.projection)},
                    {"scale_min", to_std(p.scale_min)},
                    {"scale_max", to_std(p.scale_max)},
                    {"constant", p.constant}};
  }
  doc["vqc"] = {{"qubits", model.vqc().num_qubits()},
                {"blocks", model.vqc().num_blocks()},
                {"angles", std::vector<double>(model.vqc().angles().begin(), model.vqc().angles().end())}};
  doc["readout"] = matrix_to_json(model.readout());
  return doc.dump(1);
}

Model checkpoint_from_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != "qregress.checkpoint")
      throw FormatError("checkpoint: unexpected format tag");
    if (doc.at("version").get<int>() != kCheckpointVersion)
      throw FormatError("checkpoint: unsupported version " + doc.at("version").dump());
    const json& jc = doc.at("config");
    ModelConfig c;
    c.kind = parse_front_kind(jc.at("kind").get<std::string>());
    c.dims = jc.at("dims").get<std::vector<std::size_t>>();
    c.ranks = jc.at("ranks").get<std::vector<std::size_t>>();
    c.channel_out_dims = jc.at("channel_out_dims").get<std::vector<std::size_t>>();
    c.qubits = jc.at("qubits").get<std::size_t>();
    c.blocks = jc.at("blocks").get<std::size_t>();
    c.circuit.topology = parse_topology(jc.at("topology").get<std::string>());
    c.circuit.order = parse_block_order(jc.at("order").get<std::string>());
    c.readout = parse_readout_kind(jc.at("readout").get<std::string>());
    c.output_dim = jc.at("output_dim").get<std::size_t>();
    c.seed = jc.at("seed").get<std::uint64_t>();
    c.readout_seed = jc.at("readout_seed").get<std::uint64_t>();

    const json& jv = doc.at("vqc");
    VQCParams vqc(jv.at("qubits").get<std::size_t>(), jv.at("blocks").get<std::size_t>(),
                  jv.at("angles").get<std::vector<double>>());
    Matrix readout = matrix_from_json(doc.at("readout"));

    const json& jf = doc.at("front");
    const auto kind = jf.at("kind").get<std::string>();
    if (kind == "ttn") {
      std::vector<Matrix> weights;
      for (const json& w : jf.at("weights")) weights.push_back(matrix_from_json(w));
      TTNLayer layer(TensorLayout(c.dims, c.ranks), c.channel_out_dims, std::move(weights));
      return Model(std::move(c), std::move(layer), std::move(vqc), std::move(readout));
    }
    if (kind == "pca") {
      PCAFrontEnd p;
      p.mean = to_eigen(jf.at("mean").get<std::vector<double>>());
      p.projection = matrix_from_json(jf.at("projection"));
      p.scale_min = to_eigen(jf.at("scale_min").get<std::vector<double>>());
      p.scale_max = to_eigen(jf.at("scale_max").get<std::vector<double>>());
      p.constant = jf.at("constant").get<std::vector<bool>>();
      return Model(std::move(c), std::move(p), std::move(vqc), std::move(readout));
    }
    throw FormatError("checkpoint: unknown front kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out << checkpoint_to_string(model) << '\n';
  if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_string(buf.str());
}

}  // namespace qregress
