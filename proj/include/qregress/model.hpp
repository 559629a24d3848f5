#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "qregress/linalg.hpp"
#include "qregress/qsim.hpp"
#include "qregress/tt.hpp"

namespace qregress {

/// Tensor-train front end: K parallel sigmoid channels over the input TT
/// cores, combined by outer product into a U = prod U_k vector.
///
/// Channel k maps vec(X^[k]) (length R_k * D_k * R_{k+1}, row-major core
/// order) through the bias-free weight matrix W_k (U_k rows) and a sigmoid.
class TTNLayer {
 public:
  TTNLayer(TensorLayout layout, std::vector<std::size_t> channel_out_dims,
           std::vector<Matrix> weights);
  static TTNLayer zeros(TensorLayout layout, std::vector<std::size_t> channel_out_dims);

  const TensorLayout& layout() const noexcept { return layout_; }
  const std::vector<std::size_t>& channel_out_dims() const noexcept { return out_dims_; }
  const std::vector<Matrix>& weights() const noexcept { return weights_; }
  std::vector<Matrix>& weights() noexcept { return weights_; }
  std::size_t output_size() const noexcept;
  std::size_t parameter_count() const noexcept;

 private:
  TensorLayout layout_;
  std::vector<std::size_t> out_dims_;
  std::vector<Matrix> weights_;
};

/// PCA front end: projection onto the top-U principal directions followed
/// by per-component min-max scaling into [0, 1].
struct PCAFrontEnd {
  Vector mean;        ///< Q
  Matrix projection;  ///< U x Q, orthonormal rows
  Vector scale_min;   ///< U
  Vector scale_max;   ///< U
  std::vector<bool> constant;      ///< components with max == min map to 0.5
  std::vector<std::string> warnings;
};

enum class FrontKind { TTN, PCA };
enum class ReadoutKind {
  Random,     ///< Uniform(-1/sqrt(U), 1/sqrt(U)) entries, drawn once
  Identity,   ///< requires output_dim == U
  Principal,  ///< scaled top-U right singular vectors of the training targets
};

struct ModelConfig {
  FrontKind kind = FrontKind::TTN;
  std::vector<std::size_t> dims{7, 16, 7};
  std::vector<std::size_t> ranks{1, 3, 3, 1};
  std::vector<std::size_t> channel_out_dims{2, 2, 2};
  std::size_t qubits = 8;
  std::size_t blocks = 4;
  CircuitLayout circuit{};
  ReadoutKind readout = ReadoutKind::Random;
  std::size_t output_dim = 784;
  std::uint64_t seed = 1;          ///< parameter initialisation
  std::uint64_t readout_seed = 1;  ///< readout matrix draw
};

/// Per-sample front-end inputs that do not depend on trainable parameters.
/// TTN: the K vectorised input cores. PCA: the scaled projection.
struct SampleFeatures {
  std::vector<Vector> channels;
};

class Model {
 public:
  using Front = std::variant<TTNLayer, PCAFrontEnd>;

  Model(ModelConfig config, Front front, VQCParams vqc, Matrix readout);

  const ModelConfig& config() const noexcept { return config_; }
  const Front& front() const noexcept { return front_; }
  Front& front() noexcept { return front_; }
  const VQCParams& vqc() const noexcept { return vqc_; }
  VQCParams& vqc() noexcept { return vqc_; }
  const Matrix& readout() const noexcept { return readout_; }
  bool is_ttn() const noexcept { return std::holds_alternative<TTNLayer>(front_); }
  const TTNLayer& ttn() const { return std::get<TTNLayer>(front_); }
  const PCAFrontEnd& pca() const { return std::get<PCAFrontEnd>(front_); }
  std::size_t qubits() const noexcept { return vqc_.num_qubits(); }
  std::size_t output_dim() const noexcept { return static_cast<std::size_t>(readout_.rows()); }
  std::size_t input_dim() const;

  /// Trainable parameters: TTN weights (channel order, row-major) then VQC angles.
  std::size_t parameter_count() const noexcept;
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> theta);

 private:
  ModelConfig config_;
  Front front_;
  VQCParams vqc_;
  Matrix readout_;
};

struct MeasureMode {
  std::optional<std::uint64_t> shots;  ///< nullopt: exact expectations
  std::uint64_t seed = 0;

  static MeasureMode exact() { return {}; }
  static MeasureMode sampled(std::uint64_t m, std::uint64_t seed) { return {m, seed}; }
};

struct LossReport {
  double mae = 0.0;
  std::optional<std::vector<double>> per_sample;
};

inline double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

/// Input TT cores of x, vectorised per channel.
SampleFeatures ttn_features(std::span<const double> x, const TensorLayout& layout);
std::vector<double> ttn_forward_features(const SampleFeatures& features, const TTNLayer& layer);
/// Full TTN path: reshape, TT-SVD at the layer ranks, channels, outer product.
std::vector<double> ttn_forward(std::span<const double> x, const TTNLayer& layer);

/// Fits the PCA front end on training inputs (rows). Requires N > U >= 1.
PCAFrontEnd pca_fit(const RowMatrix& inputs, std::size_t qubits);
std::vector<double> pca_project(std::span<const double> x, const PCAFrontEnd& pca);

SampleFeatures extract_features(const Model& model, std::span<const double> x);
std::vector<SampleFeatures> extract_features(const Model& model, const RowMatrix& inputs);
/// Front-end output in [0, 1]^U.
std::vector<double> front_forward(const Model& model, const SampleFeatures& features);

std::vector<double> model_forward(const Model& model, const SampleFeatures& features,
                                  const MeasureMode& mode = MeasureMode::exact());
std::vector<double> model_forward(const Model& model, std::span<const double> x,
                                  const MeasureMode& mode = MeasureMode::exact());
/// Final circuit state for an input (before measurement).
StateVector model_state(const Model& model, const SampleFeatures& features);

/// Per-element mean absolute error.
LossReport mae_loss(std::span<const double> prediction, std::span<const double> target);

struct SampleGradient {
  std::vector<double> prediction;
  double loss = 0.0;
  std::vector<double> grad;  ///< d loss / d theta, layout of Model::parameters()
};

/// Backward pass for one sample under the MAE loss (subgradient 0 at ties).
SampleGradient sample_gradient(const Model& model, const SampleFeatures& features,
                               std::span<const double> target);

/// Gradient of sum_j upstream_j * z_j through circuit and front end, where z
/// is the measured expectation vector (before the readout).
std::vector<double> backprop_from_z(const Model& model, const SampleFeatures& features,
                                    std::span<const double> upstream);

struct BatchGradient {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Mean MAE and its gradient over the listed rows. Per-sample work may run
/// in parallel; the reduction is sequential in index order. Shot mode is
/// rejected with UnsupportedError.
BatchGradient model_gradients(const Model& model, std::span<const SampleFeatures> features,
                              const RowMatrix& targets, std::span<const std::size_t> rows,
                              const MeasureMode& mode = MeasureMode::exact());

/// Mean MAE over all rows.
double evaluate_mae(const Model& model, std::span<const SampleFeatures> features,
                    const RowMatrix& targets, const MeasureMode& mode = MeasureMode::exact());

/// Jacobian of the stacked outputs (row = sample * Q_out + j) with respect
/// to the trainable parameters.
Matrix model_jacobian(const Model& model, std::span<const SampleFeatures> features,
                      std::span<const std::size_t> rows);

struct ModelNorms {
  std::vector<double> channel;  ///< Lambda_k, Frobenius norm of W_k
  double circuit = 0.0;         ///< Lambda', Frobenius norm of the PQC unitary = 2^(U/2)
  std::size_t parameter_count = 0;
  std::size_t parameter_bytes = 0;
};

ModelNorms model_norms(const Model& model);

/// Readout matrix for the config (Random or Identity kinds).
Matrix make_readout(const ModelConfig& config);
/// Principal readout from training targets: column u is the u-th right
/// singular vector of the target matrix scaled by the largest absolute
/// coefficient along it, so target coefficients map into [-1, 1].
Matrix principal_readout(const RowMatrix& targets, std::size_t qubits);

/// Draws VQC angles from Uniform(-0.1, 0.1) and TTN weights from
/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
void initialize_parameters(Model& model, std::uint64_t seed);

/// TTN-VQC model; `targets` is only consulted for the Principal readout.
Model make_ttn_model(const ModelConfig& config, const RowMatrix* targets = nullptr);
Model make_pca_model(const ModelConfig& config, const RowMatrix& train_inputs,
                     const RowMatrix* targets = nullptr);

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);
std::string checkpoint_to_string(const Model& model);
Model checkpoint_from_string(const std::string& text);

std::string to_string(FrontKind kind);
std::string to_string(ReadoutKind kind);
std::string to_string(Topology topology);
std::string to_string(BlockOrder order);
FrontKind parse_front_kind(const std::string& s);
ReadoutKind parse_readout_kind(const std::string& s);
Topology parse_topology(const std::string& s);
BlockOrder parse_block_order(const std::string& s);

}  // namespace qregress
