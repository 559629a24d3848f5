#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qregress/linalg.hpp"
#include "qregress/model.hpp"

namespace qregress {

enum class NoiseKind { None, Gaussian, Laplacian };
enum class PowerScope { PerImage, Corpus };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::None;
  double snr_db = std::numeric_limits<double>::infinity();
  PowerScope scope = PowerScope::PerImage;
  std::uint64_t seed = 0;

  static NoiseSpec none() { return {}; }
  static NoiseSpec gaussian(double snr_db, std::uint64_t seed) {
    return {NoiseKind::Gaussian, snr_db, PowerScope::PerImage, seed};
  }
  static NoiseSpec laplacian(double snr_db, std::uint64_t seed) {
    return {NoiseKind::Laplacian, snr_db, PowerScope::PerImage, seed};
  }
  bool is_identity() const noexcept { return kind == NoiseKind::None || std::isinf(snr_db); }
};

struct DatasetMeta {
  std::string source;
  NoiseSpec noise;
  std::uint64_t seed = 0;
};

struct RegressionDataset {
  RowMatrix inputs;   ///< N x Q
  RowMatrix targets;  ///< N x Q_out
  std::vector<std::uint8_t> labels;  ///< digit labels when loaded with a label file
  DatasetMeta meta;

  std::size_t size() const noexcept { return static_cast<std::size_t>(inputs.rows()); }
  /// Throws DataError on mismatched row counts or non-finite values.
  void validate() const;
  RegressionDataset subset(const std::vector<std::size_t>& rows) const;
};

/// Reads big-endian IDX image (0x00000803) and optional label (0x00000801)
/// files; gzip-compressed files are accepted. Pixels are scaled by 1/255 and
/// flattened to 784 columns. Targets equal the clean inputs.
RegressionDataset load_mnist_idx(const std::string& images_path,
                                 const std::optional<std::string>& labels_path = std::nullopt);

/// Disjoint seeded samples without replacement from one pool. Test rows are
/// the tail of the permutation, so they do not depend on n_train.
std::pair<RegressionDataset, RegressionDataset> prepare_dataset(const RegressionDataset& clean,
                                                                std::size_t n_train, std::size_t n_test,
                                                                std::uint64_t seed);

/// Noise with variance P_sig * 10^(-snr/10), P_sig = mean(x^2) per image or
/// over the whole matrix. Row n draws from its own counter stream, so the
/// result does not depend on evaluation order. No clipping.
RowMatrix add_noise(const RowMatrix& x, const NoiseSpec& spec);

/// Inputs corrupted by `spec`, targets the clean inputs.
RegressionDataset make_denoising_pairs(const RegressionDataset& clean, const NoiseSpec& spec);

/// 10 log10(sum x^2 / sum (noisy - x)^2).
double realized_snr_db(const RowMatrix& clean, const RowMatrix& noisy);

enum class SyntheticTarget { Teacher, Analytic };

struct SyntheticSpec {
  ModelConfig model;  ///< teacher architecture; also fixes Q and Q_out
  SyntheticTarget target = SyntheticTarget::Teacher;
  std::uint64_t target_seed = 7;  ///< teacher parameters or analytic coefficients
  std::uint64_t input_seed = 11;
  std::size_t samples = 500;
  NoiseSpec noise;  ///< applied to the inputs after targets are computed
};

/// The fixed teacher network behind a Teacher-kind synthetic task.
Model synthetic_teacher(const SyntheticSpec& spec);

/// Inputs uniform in [0, 1]^Q with targets from the teacher or from
/// 0.5 + 0.25 sin(a_j . x) with fixed random directions a_j.
RegressionDataset synthetic_dataset(const SyntheticSpec& spec);

/// Flat binary dataset cache; see docs/formats.md.
void save_dataset_cache(const RegressionDataset& data, const std::string& path);
RegressionDataset load_dataset_cache(const std::string& path);

std::string to_string(NoiseKind kind);
std::string to_string(PowerScope scope);
std::string to_string(SyntheticTarget target);
NoiseKind parse_noise_kind(const std::string& s);
PowerScope parse_power_scope(const std::string& s);
SyntheticTarget parse_synthetic_target(const std::string& s);

}  // namespace qregress
