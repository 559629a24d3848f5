#include "qregress/theory.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/QR>

#include "qregress/error.hpp"
#include "qregress/parallel.hpp"
#include "qregress/rng.hpp"

namespace qregress {
namespace {

template <typename M>
double max_row_norm(const M& inputs) {
  if (inputs.rows() == 0) throw SizeError("dataset_power: empty dataset");
  return inputs.rowwise().norm().maxCoeff();
}

double centered_sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)) - 0.5; }

struct Block {
  Eigen::Index offset;
  Eigen::Index size;
  double radius;
};

void project(Vector& w, double radius) {
  const double n = w.norm();
  if (n > radius) w *= radius / n;
}

// Maximises (1/N) sum_n eps_n f(x_n) over one family member.
double ascend(const RademacherFamily& family, const std::vector<Block>& blocks, const Matrix& x,
              const Vector& eps, const AscentConfig& ascent, CounterRng& rng) {
  const double n = static_cast<double>(x.rows());
  double best = 0.0;  // f = 0 is always feasible

  // Linear term: the objective is linear in w', so the sup is closed form.
  if (family.linear_norm > 0.0) best += linear_family_sup(x, {eps.data(), static_cast<std::size_t>(eps.size())},
                                                          family.linear_norm);

  for (const Block& b : blocks) {
    if (b.radius <= 0.0 || b.size == 0) continue;
    const auto xb = x.middleCols(b.offset, b.size);
    if (family.activation == ChannelActivation::Identity) {
      best += b.radius * (xb.transpose() * eps).norm() / n;
      continue;
    }
    Vector w(b.size);
    for (Eigen::Index i = 0; i < b.size; ++i) w[i] = rng.normal();
    const double wn = w.norm();
    if (wn > 0) w *= 0.5 * b.radius / wn;
    double block_best = 0.0;
    for (std::size_t step = 0; step <= ascent.steps; ++step) {
      const Vector t = xb * w;
      double value = 0.0;
      Vector weight(t.size());
      for (Eigen::Index i = 0; i < t.size(); ++i) {
        value += eps[i] * centered_sigmoid(t[i]);
        const double s = centered_sigmoid(t[i]) + 0.5;
        weight[i] = eps[i] * s * (1.0 - s);
      }
      block_best = std::max(block_best, value / n);
      if (step == ascent.steps) break;
      const Vector g = xb.transpose() * weight;
      const double gn = g.norm();
      if (gn == 0.0) break;
      w += (ascent.step_size * b.radius / gn) * g;
      project(w, b.radius);
    }
    best += block_best;
  }
  return best;
}

}  // namespace

double dataset_power(const Matrix& inputs) { return max_row_norm(inputs); }
double dataset_power(const RowMatrix& inputs) { return max_row_norm(inputs); }

double rademacher_bound(double power, std::span<const double> channel_norms, double linear_norm,
                        std::size_t samples) {
  if (samples == 0) throw DomainError("rademacher_bound: N must be at least 1");
  double sq = 0.0;
  for (double l : channel_norms) sq += l * l;
  const double root_n = std::sqrt(static_cast<double>(samples));
  return 2.0 * power / root_n * std::sqrt(sq) + 2.0 * power * linear_norm / root_n;
}

std::vector<double> rademacher_signs(std::size_t samples, std::uint64_t seed, std::uint64_t draw) {
  CounterRng rng(seed, draw);
  std::vector<double> eps(samples);
  for (double& e : eps) e = rng.rademacher();
  return eps;
}

double linear_family_sup(const Matrix& inputs, std::span<const double> signs, double norm) {
  if (signs.size() != static_cast<std::size_t>(inputs.rows()))
    throw ShapeError("linear_family_sup: sign count does not match samples");
  const Eigen::Map<const Vector> eps(signs.data(), static_cast<Eigen::Index>(signs.size()));
  return norm * (inputs.transpose() * eps).norm() / static_cast<double>(inputs.rows());
}

RademacherEstimate empirical_rademacher(const RademacherFamily& family, const Matrix& inputs,
                                        std::size_t draws, const AscentConfig& ascent, std::uint64_t seed) {
  if (inputs.rows() == 0) throw SizeError("empirical_rademacher: empty dataset");
  if (draws == 0) throw DomainError("empirical_rademacher: need at least one draw");
  if (family.block_sizes.size() != family.channel_norms.size())
    throw ShapeError("empirical_rademacher: one norm budget per block required");
  std::vector<Block> blocks;
  Eigen::Index offset = 0;
  for (std::size_t k = 0; k < family.block_sizes.size(); ++k) {
    if (family.channel_norms[k] < 0) throw DomainError("empirical_rademacher: negative norm budget");
    blocks.push_back({offset, static_cast<Eigen::Index>(family.block_sizes[k]), family.channel_norms[k]});
    offset += static_cast<Eigen::Index>(family.block_sizes[k]);
  }
  if (offset > inputs.cols()) throw ShapeError("empirical_rademacher: blocks exceed the input width");
  if (family.linear_norm < 0) throw DomainError("empirical_rademacher: negative linear budget");

  RademacherEstimate out;
  out.per_draw.assign(draws, 0.0);
  parallel_for(draws, [&](std::size_t d) {
    const auto signs = rademacher_signs(static_cast<std::size_t>(inputs.rows()), seed, d);
    const Vector eps = Eigen::Map<const Vector>(signs.data(), static_cast<Eigen::Index>(signs.size()));
    CounterRng rng(seed, 0x61736364ULL + d);
    out.per_draw[d] = ascend(family, blocks, inputs, eps, ascent, rng);
  });
  for (double v : out.per_draw) out.mean += v;
  out.mean /= static_cast<double>(draws);
  return out;
}

ScalingFit scaling_fit(std::span<const ScalingPoint> points) {
  std::vector<std::pair<double, double>> distinct;
  for (const auto& p : points) {
    if (!(p.qubits > 0) || !(p.shots > 0)) throw DomainError("scaling_fit: U and M must be positive");
    if (std::find(distinct.begin(), distinct.end(), std::pair{p.qubits, p.shots}) == distinct.end())
      distinct.emplace_back(p.qubits, p.shots);
  }
  if (distinct.size() < 3) throw DomainError("scaling_fit: need at least three distinct (U, M) points");

  const auto rows = static_cast<Eigen::Index>(points.size());
  Matrix design(rows, 2);
  Vector observed(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& p = points[static_cast<std::size_t>(i)];
    design(i, 0) = 1.0 / std::sqrt(p.qubits);
    design(i, 1) = std::isinf(p.shots) ? 0.0 : 1.0 / std::sqrt(p.shots);
    observed[i] = p.error;
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  qr.setThreshold(1e-12);
  if (qr.rank() < 2) throw DomainError("scaling_fit: rank-deficient design (U and M both constant)");
  const Vector coef = qr.solve(observed);

  ScalingFit fit;
  fit.c1 = coef[0];
  fit.c2 = coef[1];
  fit.residual = (design * coef - observed).norm();

  auto slope = [](const std::vector<std::pair<double, double>>& xy) -> std::optional<double> {
    if (xy.size() < 2) return std::nullopt;
    double mx = 0, my = 0;
    for (auto [x, y] : xy) mx += x, my += y;
    mx /= xy.size();
    my /= xy.size();
    double sxy = 0, sxx = 0;
    for (auto [x, y] : xy) sxy += (x - mx) * (y - my), sxx += (x - mx) * (x - mx);
    if (sxx == 0) return std::nullopt;
    return sxy / sxx;
  };

  std::map<double, std::vector<std::pair<double, double>>> by_qubits;
  std::map<double, std::vector<std::pair<double, double>>> by_shots;
  for (const auto& p : points) {
    if (!(p.error > 0)) continue;
    if (!std::isinf(p.shots)) by_qubits[p.qubits].emplace_back(std::log(p.shots), std::log(p.error));
    by_shots[p.shots].emplace_back(std::log(p.qubits), std::log(p.error));
  }
  auto best_group = [](const auto& groups) {
    const std::vector<std::pair<double, double>>* best = nullptr;
    for (const auto& [key, xy] : groups)
      if (!best || xy.size() > best->size()) best = &xy;
    return best;
  };
  if (const auto* g = best_group(by_qubits)) fit.shot_slope = slope(*g);
  if (const auto* g = best_group(by_shots)) fit.slope_qubits = slope(*g);
  return fit;
}

std::vector<ShotErrorRow> shot_error_sweep(const StateVector& psi, std::span<const std::uint64_t> shots,
                                           std::size_t trials, std::uint64_t seed) {
  if (shots.empty()) throw DomainError("shot_error_sweep: empty shot list");
  if (trials == 0) throw DomainError("shot_error_sweep: need at least one trial");
  const auto exact = measure_z_exact(psi);
  const double u = static_cast<double>(psi.num_qubits());
  std::vector<ShotErrorRow> rows;
  for (std::size_t i = 0; i < shots.size(); ++i) {
    ShotErrorRow row{shots[i], 0.0};
    if (shots[i] != kInfiniteShots) {
      std::vector<double> sq(trials, 0.0);
      const CounterRng trial_seeds(seed, i);
      parallel_for(trials, [&](std::size_t t) {
        const auto est = measure_z_shots(psi, shots[i], trial_seeds.bits_at(t)).estimates;
        for (std::size_t q = 0; q < est.size(); ++q) sq[t] += (est[q] - exact[q]) * (est[q] - exact[q]);
      });
      double mean = 0.0;
      for (double v : sq) mean += v / u;
      row.rmse = std::sqrt(mean / static_cast<double>(trials));
    }
    rows.push_back(row);
  }
  return rows;
}

TheoryReport aggregate_bound(const BoundInputs& in, const EmpiricalProxies& empirical) {
  if (in.samples == 0) throw DomainError("aggregate_bound: N must be at least 1");
  if (in.qubits == 0) throw DomainError("aggregate_bound: U must be at least 1");
  if (in.power < 0 || in.linear_norm < 0 || in.training_error < 0)
    throw DomainError("aggregate_bound: inputs must be non-negative");
  for (double l : in.channel_norms)
    if (l < 0) throw DomainError("aggregate_bound: channel norms must be non-negative");
  if (!in.c1) throw DomainError("aggregate_bound: missing c1, run scaling_fit first");
  const bool finite_shots = in.shots != kInfiniteShots;
  if (finite_shots && !in.c2) throw DomainError("aggregate_bound: missing c2, run scaling_fit first");
  if (finite_shots && in.shots == 0) throw DomainError("aggregate_bound: M must be positive");

  TheoryReport r;
  r.approx_bound = *in.c1 / std::sqrt(static_cast<double>(in.qubits));
  if (finite_shots) r.approx_bound += *in.c2 / std::sqrt(static_cast<double>(in.shots));
  r.estimation_bound = rademacher_bound(in.power, in.channel_norms, in.linear_norm, in.samples);
  r.training_error = in.training_error;
  r.aggregate = r.approx_bound + r.estimation_bound + r.training_error;
  r.empirical = empirical;
  return r;
}

}  // namespace qregress
