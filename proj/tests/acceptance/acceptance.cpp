// Acceptance criteria runner. Prints one PASS/FAIL line per criterion.
//   acceptance [--only N]
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "qregress/config.hpp"
#include "qregress/experiment.hpp"
#include "qregress/model.hpp"
#include "qregress/optim.hpp"
#include "qregress/qsim.hpp"
#include "qregress/theory.hpp"
#include "qregress/tt.hpp"

using namespace qregress;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string config_path(const std::string& name) { return std::string(QREGRESS_SOURCE_DIR) + "/configs/" + name; }

ExperimentConfig load_config(const std::string& name, const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  Config c = Config::load(config_path(name));
  for (const auto& [k, v] : overrides) c.set(k, v);
  return experiment_config(c);
}

double condition_mae(const RunReport& r, const std::string& name) {
  for (const auto& c : r.conditions)
    if (c.name == name) return c.mae;
  throw Error("missing test condition " + name);
}

VQCParams random_params(std::mt19937_64& gen, std::size_t n, std::size_t blocks) {
  std::uniform_real_distribution<double> a(-M_PI, M_PI);
  std::vector<double> angles(n * blocks * 3);
  for (double& v : angles) v = a(gen);
  return VQCParams(n, blocks, angles);
}

StateVector random_state(std::mt19937_64& gen, std::size_t n) {
  std::normal_distribution<double> d;
  std::vector<Complex> amp(std::size_t{1} << n);
  double norm = 0.0;
  for (auto& z : amp) {
    z = {d(gen), d(gen)};
    norm += std::norm(z);
  }
  for (auto& z : amp) z /= std::sqrt(norm);
  return StateVector(n, amp);
}

// 1. Encoder round trip.
Outcome encoder_round_trip() {
  std::mt19937_64 gen(1);
  double worst = 0.0;
  for (std::size_t u : {2u, 4u, 8u, 12u})
    for (int s = 0; s < 1000; ++s) {
      const auto x = oracle::uniform_vector(gen, u, 0.0, 1.0);
      const auto back = tpe_decode(tpe_encode(x));
      for (std::size_t i = 0; i < u; ++i) worst = std::max(worst, std::abs(back[i] - x[i]));
    }
  return {worst < 1e-9, fmt("max |decode(encode(x)) - x| = %.3g", worst)};
}

// 2. Circuit oracle equivalence and norm drift.
Outcome circuit_oracle() {
  std::mt19937_64 gen(2);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + gen() % 3, blocks = 1 + gen() % 3;
    const bool ring = gen() % 2, rotate_first = gen() % 2;
    const CircuitLayout layout{ring ? Topology::Ring : Topology::Chain,
                               rotate_first ? BlockOrder::RotateFirst : BlockOrder::EntangleFirst};
    const auto p = random_params(gen, n, blocks);
    const oracle::CMat dense =
        oracle::pqc(std::vector<double>(p.angles().begin(), p.angles().end()), n, blocks, ring, rotate_first);
    const auto psi = random_state(gen, n);
    const oracle::CVec in = Eigen::Map<const oracle::CVec>(psi.amplitudes().data(), psi.dimension());
    const oracle::CVec want = dense * in;
    const auto got = pqc_forward(psi, p, layout);
    for (Eigen::Index i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(got.amplitudes()[i] - want(i)));
  }
  const auto deep = pqc_forward(random_state(gen, 12), random_params(gen, 12, 100));
  const double drift = std::abs(deep.norm_squared() - 1.0);
  return {worst < 1e-10 && drift < 1e-10, fmt("max amplitude error %.3g over 100 circuits; norm drift %.3g at U=12, L=100", worst, drift)};
}

// 3. Gradient correctness.
Outcome gradient_correctness() {
  std::mt19937_64 gen(3);
  double worst_fd = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    ModelConfig c;
    const bool pca = trial % 5 == 4;
    c.kind = pca ? FrontKind::PCA : FrontKind::TTN;
    c.dims = {2, 4, 2};
    c.ranks = {1, 2, 2, 1};
    c.channel_out_dims = trial % 2 ? std::vector<std::size_t>{2, 2, 1} : std::vector<std::size_t>{1, 3, 1};
    c.qubits = pca ? 3 : c.channel_out_dims[0] * c.channel_out_dims[1] * c.channel_out_dims[2];
    c.blocks = 1 + trial % 3;
    c.circuit.topology = trial % 3 ? Topology::Chain : Topology::Ring;
    c.output_dim = 5;
    c.seed = c.readout_seed = 100 + trial;
    RowMatrix pool(20, 16);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (Eigen::Index i = 0; i < pool.size(); ++i) pool.data()[i] = u(gen);
    Model m = pca ? make_pca_model(c, pool) : make_ttn_model(c);
    std::vector<double> theta = m.parameters();
    for (double& t : theta) t = std::uniform_real_distribution<double>(-1.0, 1.0)(gen);
    m.set_parameters(theta);
    const std::vector<double> x(pool.row(0).data(), pool.row(0).data() + 16);
    const auto f = extract_features(m, x);
    const auto target = oracle::uniform_vector(gen, 5, -1.0, 1.0);
    const auto g = sample_gradient(m, f, target).grad;
    const auto fd = oracle::finite_difference(
        [&](const std::vector<double>& t) -> double {
          Model mm = m;
          mm.set_parameters(t);
          return mae_loss(model_forward(mm, std::span<const double>(x)), target).mae;
        },
        theta, 1e-5);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) num += (g[i] - fd[i]) * (g[i] - fd[i]), den += fd[i] * fd[i];
    worst_fd = std::max(worst_fd, std::sqrt(num / den));
  }
  double worst_shift = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + gen() % 5, blocks = 1 + gen() % 3;
    const auto p = random_params(gen, n, blocks);
    const auto psi = random_state(gen, n);
    const auto up = oracle::uniform_vector(gen, n, -1.0, 1.0);
    const auto a = vqc_gradient(psi, p, up, GradientMethod::Adjoint);
    const auto b = vqc_gradient(psi, p, up, GradientMethod::ParameterShift);
    for (std::size_t i = 0; i < a.size(); ++i) worst_shift = std::max(worst_shift, std::abs(a[i] - b[i]));
  }
  return {worst_fd < 1e-4 && worst_shift < 1e-8,
          fmt("max relative FD error %.3g over 20 models; max |adjoint - shift| %.3g", worst_fd, worst_shift)};
}

// 4. Shot-scaling law.
Outcome shot_scaling() {
  std::mt19937_64 gen(4);
  const auto x = oracle::uniform_vector(gen, 8, 0.0, 1.0);
  const auto psi = pqc_forward(tpe_encode(x), random_params(gen, 8, 2));
  const std::vector<std::uint64_t> ms{100, 400, 1600, 6400, 25600};
  const auto rows = shot_error_sweep(psi, ms, 200, 4);
  std::vector<ScalingPoint> pts;
  for (const auto& r : rows) pts.push_back({8.0, static_cast<double>(r.shots), r.rmse});
  const auto fit = scaling_fit(pts);
  const double slope = fit.shot_slope.value_or(0.0);
  return {std::abs(slope + 0.5) <= 0.05, fmt("log-log slope %.4f (RMSE %.4g at M=100, %.4g at M=25600)", slope,
                                             rows.front().rmse, rows.back().rmse)};
}

// 5. TT-SVD.
Outcome tt_svd_check() {
  std::mt19937_64 gen(5);
  double worst_full = 0.0, worst_trunc = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::size_t> dims{1 + gen() % 4, 1 + gen() % 4, 1 + gen() % 4};
    const auto full = TensorLayout::full_rank(dims);
    const auto v = oracle::uniform_vector(gen, full.size(), -1.0, 1.0);
    const auto t = reshape_to_tensor(v, dims);
    const auto exact = tt_reconstruct(tt_svd(t, full.ranks()));
    for (std::size_t i = 0; i < v.size(); ++i) worst_full = std::max(worst_full, std::abs(exact.values()[i] - v[i]));
    std::vector<std::size_t> ranks = full.ranks();
    for (std::size_t k = 1; k + 1 < ranks.size(); ++k) ranks[k] = 1 + gen() % ranks[k];
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) ranks[k + 1] = std::min(ranks[k + 1], ranks[k] * dims[k]);
    const auto got = tt_reconstruct(tt_svd(t, ranks));
    const auto want = oracle::tt_svd_reconstruction(v, dims, ranks);
    double eg = 0.0, ew = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      eg += (got.values()[i] - v[i]) * (got.values()[i] - v[i]);
      ew += (want[i] - v[i]) * (want[i] - v[i]);
    }
    worst_trunc = std::max(worst_trunc, std::abs(std::sqrt(eg) - std::sqrt(ew)));
  }
  return {worst_full < 1e-10 && worst_trunc < 1e-8,
          fmt("full-rank max error %.3g; truncated error vs dense oracle differs by at most %.3g", worst_full, worst_trunc)};
}

// 6. Rademacher containment and the linear closed form.
Outcome rademacher() {
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  AscentConfig ascent;
  std::size_t contained = 0;
  for (int trial = 0; trial < 100; ++trial) {
    RademacherFamily f;
    std::size_t width = 0;
    for (std::size_t k = 0, n = 1 + gen() % 3; k < n; ++k) {
      f.block_sizes.push_back(1 + gen() % 3);
      f.channel_norms.push_back(u(gen));
      width += f.block_sizes.back();
    }
    f.linear_norm = u(gen);
    f.activation = trial % 2 ? ChannelActivation::CenteredSigmoid : ChannelActivation::Identity;
    Matrix x(64, static_cast<Eigen::Index>(width));
    const double scale = u(gen);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = scale * std::uniform_real_distribution<double>(-1, 1)(gen);
    const auto est = empirical_rademacher(f, x, 10, ascent, trial);
    if (est.mean <= rademacher_bound(dataset_power(x), f.channel_norms, f.linear_norm, 64)) ++contained;
  }
  Matrix x(64, 2);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = std::uniform_real_distribution<double>(-1, 1)(gen);
  RademacherFamily lin;
  lin.linear_norm = 1.0;
  const auto est = empirical_rademacher(lin, x, 50, ascent, 6);
  double worst = 0.0;
  for (std::size_t d = 0; d < 50; ++d) {
    // sup over ||w|| <= 1 of (1/N) sum_i eps_i <w, x_i> = ||sum_i eps_i x_i|| / N
    const auto eps = rademacher_signs(64, 6, d);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(2);
    for (Eigen::Index i = 0; i < 64; ++i) s += eps[static_cast<std::size_t>(i)] * x.row(i).transpose();
    const double closed = s.norm() / 64.0;
    worst = std::max(worst, std::abs(est.per_draw[d] - closed) / closed);
  }
  return {contained == 100 && worst <= 0.02,
          fmt("contained in %zu/100 configurations; linear family max relative gap %.3g", contained, worst)};
}

// 7. PL convergence envelope.
Outcome pl_convergence() {
  const QuadraticObjective q(5);
  OptimizerConfig gd;
  gd.kind = OptimizerKind::GD;
  gd.learning_rate = 1.0;
  gd.batch_size = 1;
  gd.epochs = 1;
  const auto qs = train(q, {0.3, -1.0, 2.0, 0.5, -0.7}, gd);
  const bool quad = convergence_envelope(qs, measured_mu_min(qs), 1.0).holds;
  std::size_t accepted = 0, held = 0;
  for (int seed = 1; seed <= 20; ++seed) {
    const auto run = run_experiment(load_config("pl_synthetic.conf", {{"seed", std::to_string(seed)}}));
    const bool ok = run.report.pl_init && run.report.pl_init->accepted;
    if (ok) ++accepted;
    if (ok && run.report.envelope && run.report.envelope->holds) ++held;
  }
  return {quad && held >= 18, fmt("quadratic envelope %s; screened %zu/20, envelope held on %zu/20 seeds",
                                  quad ? "holds" : "fails", accepted, held)};
}

// 8. Model ordering.
Outcome model_ordering() {
  const auto ttn8 = run_experiment(load_config("mnist_ttn_8q.conf")).report;
  const auto pca8 = run_experiment(load_config("mnist_pca_8q.conf")).report;
  const auto ttn12 = run_experiment(load_config("mnist_ttn_12q.conf")).report;
  const double a = *ttn8.final_test_mae, b = *pca8.final_test_mae, c = *ttn12.final_test_mae;
  return {a < b && c < a, fmt("test MAE TTN8 %.5f, PCA8 %.5f, TTN12 %.5f (TTN8<PCA8: %s, TTN12<TTN8: %s)", a, b, c,
                              a < b ? "yes" : "no", c < a ? "yes" : "no")};
}

// 9. Noise ordering.
Outcome noise_ordering() {
  std::string detail;
  bool pass = true;
  for (const char* name : {"mnist_ttn_8q.conf", "mnist_pca_8q.conf"}) {
    const auto r = run_experiment(load_config(name)).report;
    for (const char* kind : {"gaussian", "laplacian"}) {
      const double m8 = condition_mae(r, std::string(kind) + ":8"), m12 = condition_mae(r, std::string(kind) + ":12");
      pass = pass && m8 > m12;
      detail += fmt("%s %s 8dB %.5f vs 12dB %.5f; ", r.config.model.kind == FrontKind::TTN ? "TTN" : "PCA", kind, m8, m12);
    }
  }
  return {pass, detail.substr(0, detail.size() - 2)};
}

// 10. Train-size trend.
Outcome train_size_trend() {
  std::vector<double> mae;
  for (const char* n : {"1000", "2000", "4000"})
    mae.push_back(*run_experiment(load_config("mnist_ttn_8q.conf", {{"data.train_size", n}})).report.final_test_mae);
  return {mae[1] <= mae[0] && mae[2] <= mae[1], fmt("test MAE at 1k/2k/4k: %.5f, %.5f, %.5f", mae[0], mae[1], mae[2])};
}

// 11. Theory plumbing.
Outcome theory_plumbing() {
  BoundInputs in;
  in.power = 2.0;
  in.samples = 100;
  in.channel_norms = {1, 1, 1};
  in.linear_norm = 1.0;
  in.qubits = 8;
  in.c1 = 1.0;
  const double got = aggregate_bound(in).aggregate;
  const double want = 1.0 / std::sqrt(8.0) + 0.4 * (std::sqrt(3.0) + 1.0);
  std::mt19937_64 gen(11);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + gen() % 8;
    const auto u = pqc_unitary(random_params(gen, n, 1 + gen() % 4));
    worst = std::max(worst, std::abs(u.norm() - std::pow(2.0, n / 2.0)));
  }
  return {std::abs(got - want) < 1e-9 && worst < 1e-9,
          fmt("aggregate %.10f vs %.10f; max | ||U||_F - 2^(U/2) | = %.3g", got, want, worst)};
}

// 12. Reproducibility.
Outcome reproducibility() {
  const auto cfg = load_config("synthetic_gd.conf");
  const auto base = std::filesystem::temp_directory_path() / "qregress_acceptance_repro";
  std::filesystem::remove_all(base);
  std::vector<std::string> texts;
  for (const char* sub : {"a", "b"}) {
    write_run(run_experiment(cfg), (base / sub).string());
    std::ifstream in(base / sub / "report.json");
    std::stringstream ss;
    ss << in.rdbuf();
    texts.push_back(std::regex_replace(ss.str(), std::regex(R"("timing"\s*:\s*\{[^}]*\})"), "\"timing\":{}"));
  }
  std::filesystem::remove_all(base);
  const bool same = texts[0] == texts[1];
  return {same, fmt("report.json %s across two runs (%zu bytes without timing)", same ? "identical" : "differs",
                    texts[0].size())};
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {"encoder round trip", encoder_round_trip},
      {"circuit oracle equivalence", circuit_oracle},
      {"gradient correctness", gradient_correctness},
      {"shot-scaling law", shot_scaling},
      {"TT-SVD", tt_svd_check},
      {"Rademacher containment", rademacher},
      {"PL convergence", pl_convergence},
      {"model ordering", model_ordering},
      {"noise ordering", noise_ordering},
      {"train-size trend", train_size_trend},
      {"theory plumbing", theory_plumbing},
      {"reproducibility", reproducibility},
  };
  std::size_t only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      only = std::strtoul(argv[++i], nullptr, 10);
    } else {
      std::fprintf(stderr, "usage: acceptance [--only N]\n");
      return 2;
    }
  }
  if (only > criteria.size()) {
    std::fprintf(stderr, "criterion %zu does not exist (1..%zu)\n", only, criteria.size());
    return 2;
  }
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && only != i + 1) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] %2zu %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].name, o.detail.c_str(), secs);
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
