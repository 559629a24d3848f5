#pragma once

// Tensor-train decomposition of input vectors reshaped as K-order tensors.
//
// Indices are 0-based throughout the API. Documentation elsewhere may use
// 1-based (d_1, ..., d_K); index d_k there is d_k - 1 here.

#include <cstddef>
#include <span>
#include <vector>

namespace qregress {

/// Mode sizes D_1..D_K and TT-ranks R_1..R_{K+1} of a tensor train.
class TensorLayout {
 public:
  /// Validates R_1 = R_{K+1} = 1 and R_{k+1} <= min(R_k * D_k, prod_{j>k} D_j).
  TensorLayout(std::vector<std::size_t> dims, std::vector<std::size_t> ranks);

  /// Layout whose ranks are the largest achievable ones (no truncation).
  static TensorLayout full_rank(std::vector<std::size_t> dims);

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  const std::vector<std::size_t>& ranks() const noexcept { return ranks_; }
  std::size_t order() const noexcept { return dims_.size(); }
  /// Flat length D = prod D_k.
  std::size_t size() const noexcept;
  /// Number of entries in core k: R_k * D_k * R_{k+1}.
  std::size_t core_size(std::size_t k) const noexcept;

  bool operator==(const TensorLayout&) const = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> ranks_;
};

/// Dense K-order tensor in row-major order (last index fastest).
class DenseTensor {
 public:
  DenseTensor(std::vector<std::size_t> dims, std::vector<double> values);

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::span<const double> values() const noexcept { return values_; }
  double at(std::span<const std::size_t> index) const;
  std::size_t flat_index(std::span<const std::size_t> index) const;

 private:
  std::vector<std::size_t> dims_;
  std::vector<double> values_;
};

/// One TT core, shape R_k x D_k x R_{k+1}, row-major.
struct TTCore {
  std::size_t left = 1;
  std::size_t mode = 1;
  std::size_t right = 1;
  std::vector<double> data;

  double operator()(std::size_t a, std::size_t i, std::size_t b) const noexcept {
    return data[(a * mode + i) * right + b];
  }
};

class TTVector {
 public:
  TTVector(TensorLayout layout, std::vector<TTCore> cores);

  const TensorLayout& layout() const noexcept { return layout_; }
  const std::vector<TTCore>& cores() const noexcept { return cores_; }

 private:
  TensorLayout layout_;
  std::vector<TTCore> cores_;
};

/// Row-major reshape of a flat vector. Throws ShapeError if the dims do
/// not multiply to x.size().
DenseTensor reshape_to_tensor(std::span<const double> x, std::vector<std::size_t> dims);

/// Left-to-right TT-SVD truncated to the given ranks. Throws DataError on
/// non-finite input and ShapeError if ranks do not match the tensor order.
TTVector tt_svd(const DenseTensor& t, const std::vector<std::size_t>& ranks);

DenseTensor tt_reconstruct(const TTVector& tt);

/// Chain product of the selected R_k x R_{k+1} slices; BoundsError on a bad index.
double tt_element(const TTVector& tt, std::span<const std::size_t> index);

}  // namespace qregress
