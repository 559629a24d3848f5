#include "qregress/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "qregress/error.hpp"
#include "qregress/parallel.hpp"
#include "qregress/rng.hpp"

namespace qregress {
namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;
constexpr std::size_t kSide = 28;

class GzReader {
 public:
  explicit GzReader(const std::string& path) : path_(path), file_(gzopen(path.c_str(), "rb")) {
    if (!file_) throw IoError("cannot open '" + path + "'");
  }
  ~GzReader() { gzclose(file_); }
  GzReader(const GzReader&) = delete;
  GzReader& operator=(const GzReader&) = delete;

  void read(void* dst, std::size_t bytes, const char* field) {
    auto* out = static_cast<unsigned char*>(dst);
    while (bytes > 0) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(bytes, 1u << 30));
      const int got = gzread(file_, out, chunk);
      if (got < 0) throw IoError("read error in '" + path_ + "'");
      if (got == 0) throw FormatError(path_ + ": truncated " + field);
      out += got;
      bytes -= static_cast<std::size_t>(got);
    }
  }

  std::uint32_t read_u32(const char* field) {
    unsigned char b[4];
    read(b, 4, field);
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
  }

 private:
  std::string path_;
  gzFile file_;
};

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  CounterRng rng(seed, 0x73706c6974ULL);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

template <typename T>
void put(std::ofstream& out, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const char* field) {
  unsigned char b[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(T))) throw FormatError(std::string("dataset cache: truncated ") + field);
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

constexpr std::array<char, 4> kCacheMagic{'Q', 'R', 'D', 'S'};
constexpr std::uint32_t kCacheVersion = 1;
constexpr std::uint32_t kDtypeFloat64 = 1;

}  // namespace

void RegressionDataset::validate() const {
  if (inputs.rows() != targets.rows()) throw DataError("dataset: input and target row counts differ");
  if (!inputs.allFinite()) throw DataError("dataset: non-finite input value");
  if (!targets.allFinite()) throw DataError("dataset: non-finite target value");
  if (!labels.empty() && labels.size() != size()) throw DataError("dataset: label count differs from rows");
}

RegressionDataset RegressionDataset::subset(const std::vector<std::size_t>& rows) const {
  RegressionDataset out;
  out.inputs.resize(static_cast<Eigen::Index>(rows.size()), inputs.cols());
  out.targets.resize(static_cast<Eigen::Index>(rows.size()), targets.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= size()) throw BoundsError("dataset subset: row out of range");
    out.inputs.row(static_cast<Eigen::Index>(i)) = inputs.row(static_cast<Eigen::Index>(rows[i]));
    out.targets.row(static_cast<Eigen::Index>(i)) = targets.row(static_cast<Eigen::Index>(rows[i]));
    if (!labels.empty()) out.labels.push_back(labels[rows[i]]);
  }
  out.meta = meta;
  return out;
}

RegressionDataset load_mnist_idx(const std::string& images_path, const std::optional<std::string>& labels_path) {
  GzReader img(images_path);
  if (img.read_u32("magic") != kImageMagic)
    throw FormatError(images_path + ": bad magic number (expected 0x00000803)");
  const std::uint32_t count = img.read_u32("image count");
  const std::uint32_t rows = img.read_u32("row count");
  const std::uint32_t cols = img.read_u32("column count");
  if (rows != kSide || cols != kSide)
    throw FormatError(images_path + ": image dims " + std::to_string(rows) + "x" + std::to_string(cols) +
                      " (expected 28x28)");
  std::vector<unsigned char> pixels(std::size_t{count} * kSide * kSide);
  img.read(pixels.data(), pixels.size(), "pixel payload");

  RegressionDataset out;
  out.inputs.resize(count, kSide * kSide);
  for (std::size_t i = 0; i < pixels.size(); ++i) out.inputs.data()[i] = pixels[i] / 255.0;
  out.targets = out.inputs;
  out.meta.source = images_path;

  if (labels_path) {
    GzReader lab(*labels_path);
    if (lab.read_u32("magic") != kLabelMagic)
      throw FormatError(*labels_path + ": bad magic number (expected 0x00000801)");
    if (lab.read_u32("label count") != count) throw FormatError(*labels_path + ": label count differs from image count");
    out.labels.resize(count);
    lab.read(out.labels.data(), count, "label payload");
  }
  return out;
}

std::pair<RegressionDataset, RegressionDataset> prepare_dataset(const RegressionDataset& clean, std::size_t n_train,
                                                                std::size_t n_test, std::uint64_t seed) {
  if (n_train + n_test > clean.size())
    throw SizeError("prepare_dataset: requested " + std::to_string(n_train + n_test) + " samples from a pool of " +
                    std::to_string(clean.size()));
  const auto order = permutation(clean.size(), seed);
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  // Test rows come from the tail so the test set does not depend on n_train.
  std::vector<std::size_t> test(order.end() - static_cast<std::ptrdiff_t>(n_test), order.end());
  auto a = clean.subset(train);
  auto b = clean.subset(test);
  a.meta.seed = b.meta.seed = seed;
  return {std::move(a), std::move(b)};
}

RowMatrix add_noise(const RowMatrix& x, const NoiseSpec& spec) {
  if (!x.allFinite()) throw DataError("add_noise: non-finite input");
  if (spec.is_identity()) return x;
  if (!std::isfinite(spec.snr_db)) throw DomainError("add_noise: SNR must be finite");
  const double ratio = std::pow(10.0, -spec.snr_db / 10.0);
  const double corpus_power = x.size() > 0 ? x.squaredNorm() / static_cast<double>(x.size()) : 0.0;
  RowMatrix out = x;
  parallel_for(static_cast<std::size_t>(x.rows()), [&](std::size_t n) {
    const auto row = static_cast<Eigen::Index>(n);
    const double power = spec.scope == PowerScope::Corpus
                             ? corpus_power
                             : x.row(row).squaredNorm() / static_cast<double>(x.cols());
    const double sigma = std::sqrt(power * ratio);
    CounterRng rng(spec.seed, n);
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      out(row, j) += spec.kind == NoiseKind::Gaussian ? sigma * rng.normal() : rng.laplace(sigma / std::sqrt(2.0));
  });
  return out;
}

RegressionDataset make_denoising_pairs(const RegressionDataset& clean, const NoiseSpec& spec) {
  RegressionDataset out;
  out.inputs = add_noise(clean.inputs, spec);
  out.targets = clean.inputs;
  out.labels = clean.labels;
  out.meta = clean.meta;
  out.meta.noise = spec;
  return out;
}

double realized_snr_db(const RowMatrix& clean, const RowMatrix& noisy) {
  if (clean.rows() != noisy.rows() || clean.cols() != noisy.cols()) throw ShapeError("realized_snr_db: shape mismatch");
  return 10.0 * std::log10(clean.squaredNorm() / (noisy - clean).squaredNorm());
}

Model synthetic_teacher(const SyntheticSpec& spec) {
  ModelConfig config = spec.model;
  if (config.readout == ReadoutKind::Principal) config.readout = ReadoutKind::Random;
  Model teacher = make_ttn_model(config);
  initialize_parameters(teacher, spec.target_seed);
  return teacher;
}

RegressionDataset synthetic_dataset(const SyntheticSpec& spec) {
  std::size_t q = 1;
  for (auto d : spec.model.dims) q *= d;
  const std::size_t q_out = spec.model.output_dim;
  RegressionDataset out;
  out.inputs.resize(static_cast<Eigen::Index>(spec.samples), static_cast<Eigen::Index>(q));
  for (std::size_t n = 0; n < spec.samples; ++n) {
    CounterRng rng(spec.input_seed, n);
    for (std::size_t j = 0; j < q; ++j) out.inputs(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(j)) = rng.uniform();
  }
  out.targets.resize(static_cast<Eigen::Index>(spec.samples), static_cast<Eigen::Index>(q_out));
  if (spec.target == SyntheticTarget::Teacher) {
    const Model teacher = synthetic_teacher(spec);
    const auto features = extract_features(teacher, out.inputs);
    parallel_for(spec.samples, [&](std::size_t n) {
      const auto y = model_forward(teacher, features[n]);
      for (std::size_t j = 0; j < q_out; ++j) out.targets(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(j)) = y[j];
    });
  } else {
    Matrix directions(static_cast<Eigen::Index>(q_out), static_cast<Eigen::Index>(q));
    CounterRng rng(spec.target_seed, 0x616e61ULL);
    for (Eigen::Index i = 0; i < directions.size(); ++i) directions.data()[i] = rng.normal();
    directions *= 2.0 / std::sqrt(static_cast<double>(q));
    const Matrix phase = out.inputs * directions.transpose();
    out.targets = (0.5 + 0.25 * phase.array().sin()).matrix();
  }
  out.meta.source = spec.target == SyntheticTarget::Teacher ? "synthetic-teacher" : "synthetic-analytic";
  out.meta.seed = spec.input_seed;
  if (!spec.noise.is_identity()) {
    out.inputs = add_noise(out.inputs, spec.noise);
    out.meta.noise = spec.noise;
  }
  return out;
}

void save_dataset_cache(const RegressionDataset& data, const std::string& path) {
  data.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(kCacheMagic.data(), 4);
  put<std::uint32_t>(out, kCacheVersion);
  put<std::uint64_t>(out, data.size());
  put<std::uint64_t>(out, static_cast<std::uint64_t>(data.inputs.cols()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(data.targets.cols()));
  put<std::uint32_t>(out, kDtypeFloat64);
  put<std::uint32_t>(out, 0);
  for (Eigen::Index i = 0; i < data.inputs.size(); ++i) put<double>(out, data.inputs.data()[i]);
  for (Eigen::Index i = 0; i < data.targets.size(); ++i) put<double>(out, data.targets.data()[i]);
  if (!out) throw IoError("write failed for '" + path + "'");
}

RegressionDataset load_dataset_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4) || magic != kCacheMagic) throw FormatError("dataset cache: bad magic");
  if (get<std::uint32_t>(in, "version") != kCacheVersion) throw FormatError("dataset cache: unsupported version");
  const auto n = get<std::uint64_t>(in, "N");
  const auto q = get<std::uint64_t>(in, "Q");
  const auto q_out = get<std::uint64_t>(in, "Q_out");
  if (get<std::uint32_t>(in, "dtype") != kDtypeFloat64) throw FormatError("dataset cache: unsupported dtype");
  get<std::uint32_t>(in, "reserved");
  RegressionDataset out;
  out.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(q));
  out.targets.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(q_out));
  for (Eigen::Index i = 0; i < out.inputs.size(); ++i) out.inputs.data()[i] = get<double>(in, "input payload");
  for (Eigen::Index i = 0; i < out.targets.size(); ++i) out.targets.data()[i] = get<double>(in, "target payload");
  out.meta.source = path;
  return out;
}

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::None: return "none";
    case NoiseKind::Gaussian: return "gaussian";
    case NoiseKind::Laplacian: return "laplacian";
  }
  return "none";
}

std::string to_string(PowerScope scope) { return scope == PowerScope::Corpus ? "corpus" : "per-image"; }

std::string to_string(SyntheticTarget target) { return target == SyntheticTarget::Analytic ? "analytic" : "teacher"; }

NoiseKind parse_noise_kind(const std::string& s) {
  if (s == "none") return NoiseKind::None;
  if (s == "gaussian") return NoiseKind::Gaussian;
  if (s == "laplacian" || s == "laplace") return NoiseKind::Laplacian;
  throw DomainError("unknown noise kind '" + s + "'");
}

PowerScope parse_power_scope(const std::string& s) {
  if (s == "per-image") return PowerScope::PerImage;
  if (s == "corpus") return PowerScope::Corpus;
  throw DomainError("unknown power scope '" + s + "'");
}

SyntheticTarget parse_synthetic_target(const std::string& s) {
  if (s == "teacher") return SyntheticTarget::Teacher;
  if (s == "analytic") return SyntheticTarget::Analytic;
  throw DomainError("unknown synthetic target '" + s + "'");
}

}  // namespace qregress
