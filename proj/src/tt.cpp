#include "qregress/tt.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <utility>

#include "qregress/error.hpp"
#include "qregress/linalg.hpp"

namespace qregress {
namespace {

std::size_t product(std::span<const std::size_t> v, std::size_t from = 0) {
  std::size_t p = 1;
  for (std::size_t i = from; i < v.size(); ++i) p *= v[i];
  return p;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s = "(";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s + ")";
}

}  // namespace

TensorLayout::TensorLayout(std::vector<std::size_t> dims, std::vector<std::size_t> ranks)
    : dims_(std::move(dims)), ranks_(std::move(ranks)) {
  if (dims_.empty()) throw ShapeError("TensorLayout: order must be at least 1");
  if (ranks_.size() != dims_.size() + 1)
    throw ShapeError("TensorLayout: expected " + std::to_string(dims_.size() + 1) +
                     " ranks, got " + std::to_string(ranks_.size()));
  if (std::find(dims_.begin(), dims_.end(), 0u) != dims_.end())
    throw ShapeError("TensorLayout: dims must be positive " + join(dims_));
  if (ranks_.front() != 1 || ranks_.back() != 1)
    throw ShapeError("TensorLayout: boundary ranks must be 1, got " + join(ranks_));
  for (std::size_t k = 0; k < dims_.size(); ++k) {
    if (ranks_[k + 1] == 0) throw ShapeError("TensorLayout: ranks must be positive");
    const std::size_t cap = std::min(ranks_[k] * dims_[k], product(dims_, k + 1));
    if (ranks_[k + 1] > cap)
      throw ShapeError("TensorLayout: rank R_" + std::to_string(k + 2) + "=" +
                       std::to_string(ranks_[k + 1]) + " exceeds achievable " +
                       std::to_string(cap) + " for dims " + join(dims_));
  }
}

TensorLayout TensorLayout::full_rank(std::vector<std::size_t> dims) {
  std::vector<std::size_t> ranks(dims.size() + 1, 1);
  for (std::size_t k = 0; k < dims.size(); ++k)
    ranks[k + 1] = std::min(ranks[k] * dims[k], product(dims, k + 1));
  return TensorLayout(std::move(dims), std::move(ranks));
}

std::size_t TensorLayout::size() const noexcept { return product(dims_); }

std::size_t TensorLayout::core_size(std::size_t k) const noexcept {
  return ranks_[k] * dims_[k] * ranks_[k + 1];
}

DenseTensor::DenseTensor(std::vector<std::size_t> dims, std::vector<double> values)
    : dims_(std::move(dims)), values_(std::move(values)) {
  if (product(dims_) != values_.size())
    throw ShapeError("DenseTensor: dims " + join(dims_) + " hold " +
                     std::to_string(product(dims_)) + " values, got " +
                     std::to_string(values_.size()));
}

std::size_t DenseTensor::flat_index(std::span<const std::size_t> index) const {
  if (index.size() != dims_.size()) throw ShapeError("DenseTensor: index has wrong order");
  std::size_t flat = 0;
  for (std::size_t k = 0; k < dims_.size(); ++k) {
    if (index[k] >= dims_[k]) throw BoundsError("DenseTensor: index out of range");
    flat = flat * dims_[k] + index[k];
  }
  return flat;
}

double DenseTensor::at(std::span<const std::size_t> index) const {
  return values_[flat_index(index)];
}

TTVector::TTVector(TensorLayout layout, std::vector<TTCore> cores)
    : layout_(std::move(layout)), cores_(std::move(cores)) {
  if (cores_.size() != layout_.order()) throw ShapeError("TTVector: core count != order");
  for (std::size_t k = 0; k < cores_.size(); ++k) {
    const TTCore& c = cores_[k];
    if (c.left != layout_.ranks()[k] || c.mode != layout_.dims()[k] ||
        c.right != layout_.ranks()[k + 1] || c.data.size() != c.left * c.mode * c.right)
      throw ShapeError("TTVector: core " + std::to_string(k) + " does not match layout");
  }
}

DenseTensor reshape_to_tensor(std::span<const double> x, std::vector<std::size_t> dims) {
  if (product(dims) != x.size())
    throw ShapeError("reshape_to_tensor: dims " + join(dims) + " do not multiply to " +
                     std::to_string(x.size()));
  return DenseTensor(std::move(dims), std::vector<double>(x.begin(), x.end()));
}

TTVector tt_svd(const DenseTensor& t, const std::vector<std::size_t>& ranks) {
  TensorLayout layout(t.dims(), ranks);
  const auto& dims = layout.dims();
  const std::size_t order = dims.size();
  for (double v : t.values())
    if (!std::isfinite(v)) throw DataError("tt_svd: tensor contains non-finite values");

  std::vector<TTCore> cores(order);
  // `rest` holds the remainder C as a (R_k * D_k) x (prod_{j>k} D_j) row-major block.
  std::size_t rest_cols = layout.size();
  std::vector<double> rest(t.values().begin(), t.values().end());
  for (std::size_t k = 0; k + 1 < order; ++k) {
    const std::size_t rows = ranks[k] * dims[k];
    rest_cols /= dims[k];
    const Eigen::Map<const RowMatrix> unfold(rest.data(), static_cast<Eigen::Index>(rows),
                                             static_cast<Eigen::Index>(rest_cols));
    const linalg::Svd svd = linalg::thin_svd(unfold);
    const auto r = static_cast<Eigen::Index>(ranks[k + 1]);

    TTCore& core = cores[k];
    core.left = ranks[k];
    core.mode = dims[k];
    core.right = ranks[k + 1];
    core.data.resize(rows * core.right);
    for (std::size_t i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < r; ++j)
        core.data[i * core.right + static_cast<std::size_t>(j)] =
            svd.u(static_cast<Eigen::Index>(i), j);

    // Next remainder S_r V_r^T, reinterpreted as (R_{k+1} * D_{k+1}) x ... rows.
    RowMatrix next = svd.s.head(r).asDiagonal() * svd.v.leftCols(r).transpose();
    rest.assign(next.data(), next.data() + next.size());
  }
  TTCore& last = cores[order - 1];
  last.left = ranks[order - 1];
  last.mode = dims[order - 1];
  last.right = 1;
  last.data = std::move(rest);
  return TTVector(std::move(layout), std::move(cores));
}

DenseTensor tt_reconstruct(const TTVector& tt) {
  const auto& dims = tt.layout().dims();
  // Left-to-right contraction; `acc` is (prod_{j<=k} D_j) x R_{k+1} row-major.
  std::vector<double> acc{1.0};
  std::size_t prefix = 1;
  std::size_t bond = 1;
  for (const TTCore& core : tt.cores()) {
    std::vector<double> next(prefix * core.mode * core.right, 0.0);
    for (std::size_t p = 0; p < prefix; ++p)
      for (std::size_t a = 0; a < bond; ++a) {
        const double w = acc[p * bond + a];
        if (w == 0.0) continue;
        for (std::size_t i = 0; i < core.mode; ++i)
          for (std::size_t b = 0; b < core.right; ++b)
            next[(p * core.mode + i) * core.right + b] += w * core(a, i, b);
      }
    acc = std::move(next);
    prefix *= core.mode;
    bond = core.right;
  }
  return DenseTensor(dims, std::move(acc));
}

double tt_element(const TTVector& tt, std::span<const std::size_t> index) {
  const auto& dims = tt.layout().dims();
  if (index.size() != dims.size()) throw ShapeError("tt_element: index has wrong order");
  std::vector<double> row{1.0};
  for (std::size_t k = 0; k < dims.size(); ++k) {
    if (index[k] >= dims[k])
      throw BoundsError("tt_element: index " + std::to_string(index[k]) + " out of range for mode " +
                        std::to_string(k) + " of size " + std::to_string(dims[k]));
    const TTCore& core = tt.cores()[k];
    std::vector<double> next(core.right, 0.0);
    for (std::size_t a = 0; a < core.left; ++a)
      for (std::size_t b = 0; b < core.right; ++b) next[b] += row[a] * core(a, index[k], b);
    row = std::move(next);
  }
  return row[0];
}

}  // namespace qregress
