#include "qregress/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "qregress/rng.hpp"

namespace qregress {
namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

template <typename F>
auto in_stage(const char* stage, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
  return out;
}

std::size_t product(const std::vector<std::size_t>& v) {
  return std::accumulate(v.begin(), v.end(), std::size_t{1}, std::multiplies<>());
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_number(const std::string& s, const char* what) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') throw FormatError(std::string("bad ") + what + " value '" + s + "'");
  return v;
}

NoiseSpec seeded(NoiseSpec spec, PowerScope scope, std::uint64_t seed) {
  spec.scope = scope;
  spec.seed = seed;
  return spec;
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json theory_json(const TheoryReport& t) {
  Json th;
  th["approx_bound"] = t.approx_bound;
  th["estimation_bound"] = t.estimation_bound;
  th["training_error"] = t.training_error;
  th["aggregate"] = t.aggregate;
  Json emp;
  emp["train_mae"] = optional_json(t.empirical.train_mae);
  emp["test_mae"] = optional_json(t.empirical.test_mae);
  emp["generalization_gap"] = optional_json(t.empirical.generalization_gap);
  emp["rademacher_estimate"] = optional_json(t.empirical.rademacher_estimate);
  th["empirical_proxies"] = emp;
  return th;
}

std::vector<double> default_sweep_values(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Qubits: return {8, 12};
    case SweepAxis::Shots: return {100, 400, 1600, 6400, 25600};
    case SweepAxis::TrainSize: return {1000, 2000, 4000};
    case SweepAxis::Snr: return {8, 12};
  }
  return {};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

TestCondition parse_condition(const std::string& text) {
  if (text == "none" || text == "clean") return {"none", NoiseSpec::none()};
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw FormatError("noise condition '" + text + "' must be none or kind:snr_db");
  NoiseSpec spec;
  spec.kind = parse_noise_kind(text.substr(0, colon));
  spec.snr_db = parse_number(text.substr(colon + 1), "SNR");
  if (spec.kind == NoiseKind::None) return {"none", NoiseSpec::none()};
  return {to_string(spec.kind) + ":" + fmt(spec.snr_db), spec};
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "seed", "output.dir",
      "model.kind", "model.dims", "model.ranks", "model.channel_out", "model.qubits", "model.blocks",
      "model.output_dim",
      "model.topology", "model.block_order", "model.readout", "model.readout_seed", "model.init_seed",
      "optimizer.kind", "optimizer.lr", "optimizer.beta1", "optimizer.beta2", "optimizer.epsilon",
      "optimizer.batch_size", "optimizer.epochs", "optimizer.seed", "optimizer.unit_lr",
      "data.source", "data.images", "data.labels", "data.train_size", "data.test_size", "data.seed",
      "data.train_noise", "data.power_scope", "data.test_conditions", "data.synthetic.target",
      "data.synthetic.target_seed",
      "measure.shots", "measure.seed",
      "pl.screen", "pl.mu_target", "pl.max_attempts", "pl.kernel_batch", "pl.slack",
      "theory.c1", "theory.c2", "theory.linear_norm", "theory.zero_training_error",
      "theory.rademacher_draws", "theory.rademacher_steps", "theory.rademacher_samples",
      "sweep.values", "sweep.trials", "sweep.channel_out.*"};
  return keys;
}

std::vector<std::size_t> default_channel_out(std::size_t qubits, const std::vector<std::size_t>& dims) {
  if (qubits == 0 || dims.empty()) throw DomainError("default_channel_out: need qubits and dims");
  std::vector<std::size_t> primes;
  std::size_t rest = qubits;
  for (std::size_t p = 2; p * p <= rest; ++p)
    while (rest % p == 0) primes.push_back(p), rest /= p;
  if (rest > 1) primes.push_back(rest);
  std::sort(primes.rbegin(), primes.rend());
  std::vector<std::size_t> out(dims.size(), 1);
  for (std::size_t p : primes) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < out.size(); ++k)
      if (out[k] < out[best] || (out[k] == out[best] && dims[k] > dims[best])) best = k;
    out[best] *= p;
  }
  return out;
}

ExperimentConfig experiment_config(const Config& c) {
  return in_stage("config", [&] {
    c.check_keys(config_keys());
    ExperimentConfig e;
    e.base_dir = c.base_dir();
    e.seed = c.get_uint("seed", 1);
    e.output_dir = c.get_string("output.dir", e.output_dir);

    ModelConfig& m = e.model;
    m.kind = parse_front_kind(c.get_string("model.kind", "ttn-vqc"));
    m.dims = c.get_sizes("model.dims", m.dims);
    m.ranks = c.get_sizes("model.ranks", m.ranks);
    if (c.has("model.channel_out")) {
      m.channel_out_dims = c.get_sizes("model.channel_out", {});
      m.qubits = c.get_uint("model.qubits", product(m.channel_out_dims));
    } else {
      m.qubits = c.get_uint("model.qubits", m.qubits);
      m.channel_out_dims = default_channel_out(m.qubits, m.dims);
    }
    m.blocks = c.get_uint("model.blocks", m.blocks);
    m.circuit.topology = parse_topology(c.get_string("model.topology", "chain"));
    m.circuit.order = parse_block_order(c.get_string("model.block_order", "entangle-first"));
    m.readout = parse_readout_kind(c.get_string("model.readout", "random"));
    m.readout_seed = c.get_uint("model.readout_seed", e.seed);
    m.seed = c.get_uint("model.init_seed", e.seed);
    if (m.kind == FrontKind::TTN && product(m.channel_out_dims) != m.qubits)
      throw DomainError("product of model.channel_out must equal model.qubits");
    if (m.qubits == 0 || m.qubits > kMaxQubits) throw DomainError("model.qubits out of range");

    OptimizerConfig& o = e.optimizer;
    o.kind = parse_optimizer_kind(c.get_string("optimizer.kind", "adam"));
    o.learning_rate = c.get_double("optimizer.lr", o.kind == OptimizerKind::Adam ? 0.01 : 1.0);
    if (c.get_bool("optimizer.unit_lr", false)) o.learning_rate = 1.0;
    o.beta1 = c.get_double("optimizer.beta1", o.beta1);
    o.beta2 = c.get_double("optimizer.beta2", o.beta2);
    o.epsilon = c.get_double("optimizer.epsilon", o.epsilon);
    o.batch_size = c.get_uint("optimizer.batch_size", o.batch_size);
    o.epochs = c.get_uint("optimizer.epochs", o.epochs);
    o.seed = c.get_uint("optimizer.seed", e.seed);
    o.validate();

    DataConfig& d = e.data;
    const std::string source = c.get_string("data.source", "mnist");
    if (source == "mnist") d.source = DataSource::Mnist;
    else if (source == "synthetic") d.source = DataSource::Synthetic;
    else throw DomainError("data.source must be mnist or synthetic");
    d.images = c.get_string("data.images", "data/mnist5k/images-idx3-ubyte.gz");
    if (auto l = c.find("data.labels")) d.labels = *l;
    d.train_size = c.get_uint("data.train_size", d.train_size);
    d.test_size = c.get_uint("data.test_size", d.test_size);
    d.seed = c.get_uint("data.seed", d.seed);
    d.train_noise = parse_condition(c.get_string("data.train_noise", "gaussian:15"));
    d.power_scope = parse_power_scope(c.get_string("data.power_scope", "per-image"));
    for (const auto& s : c.get_strings("data.test_conditions", {"gaussian:15"}))
      d.test_conditions.push_back(parse_condition(s));
    d.synthetic_target = parse_synthetic_target(c.get_string("data.synthetic.target", "teacher"));
    d.synthetic_target_seed = c.get_uint("data.synthetic.target_seed", d.synthetic_target_seed);
    if (d.train_size == 0 || d.test_size == 0) throw DomainError("data sizes must be positive");
    // MNIST targets are the 784 clean pixels; synthetic targets default to one per qubit.
    m.output_dim = c.get_uint("model.output_dim", d.source == DataSource::Mnist ? 784 : m.qubits);
    if (m.output_dim == 0) throw DomainError("model.output_dim must be positive");

    if (const auto shots = c.get_uint("measure.shots", 0); shots > 0) e.shots = shots;
    e.measure_seed = c.get_uint("measure.seed", e.seed);

    e.pl.screen = c.get_bool("pl.screen", false);
    e.pl.mu_target = c.get_double("pl.mu_target", e.pl.mu_target);
    e.pl.max_attempts = c.get_uint("pl.max_attempts", e.pl.max_attempts);
    e.pl.kernel_batch = c.get_uint("pl.kernel_batch", e.pl.kernel_batch);
    e.pl.slack = c.get_double("pl.slack", e.pl.slack);

    TheoryConfig& t = e.theory;
    t.c1 = c.get_double("theory.c1", 1.0);
    t.c2 = c.get_double("theory.c2", 1.0);
    if (c.has("theory.linear_norm")) t.linear_norm = c.get_double("theory.linear_norm", 0.0);
    t.zero_training_error = c.get_bool("theory.zero_training_error", false);
    t.rademacher_draws = c.get_uint("theory.rademacher_draws", 0);
    t.rademacher_steps = c.get_uint("theory.rademacher_steps", t.rademacher_steps);
    t.rademacher_samples = c.get_uint("theory.rademacher_samples", t.rademacher_samples);

    e.sweep.values = c.get_doubles("sweep.values", {});
    e.sweep.trials = c.get_uint("sweep.trials", e.sweep.trials);
    const std::string prefix = "sweep.channel_out.";
    for (const auto& [key, value] : c.values()) {
      if (key.rfind(prefix, 0) != 0) continue;
      const std::size_t u = std::stoul(key.substr(prefix.size()));
      e.sweep.channel_out[u] = c.get_sizes(key, {});
    }
    return e;
  });
}

Config to_config(const ExperimentConfig& e) {
  Config c;
  c.set("seed", std::to_string(e.seed));
  c.set("output.dir", e.output_dir);
  const ModelConfig& m = e.model;
  c.set("model.kind", to_string(m.kind));
  c.set("model.dims", join_sizes(m.dims));
  c.set("model.ranks", join_sizes(m.ranks));
  c.set("model.channel_out", join_sizes(m.channel_out_dims));
  c.set("model.qubits", std::to_string(m.qubits));
  c.set("model.output_dim", std::to_string(m.output_dim));
  c.set("model.blocks", std::to_string(m.blocks));
  c.set("model.topology", to_string(m.circuit.topology));
  c.set("model.block_order", to_string(m.circuit.order));
  c.set("model.readout", to_string(m.readout));
  c.set("model.readout_seed", std::to_string(m.readout_seed));
  c.set("model.init_seed", std::to_string(m.seed));
  const OptimizerConfig& o = e.optimizer;
  c.set("optimizer.kind", to_string(o.kind));
  c.set("optimizer.lr", fmt(o.learning_rate));
  c.set("optimizer.beta1", fmt(o.beta1));
  c.set("optimizer.beta2", fmt(o.beta2));
  c.set("optimizer.epsilon", fmt(o.epsilon));
  c.set("optimizer.batch_size", std::to_string(o.batch_size));
  c.set("optimizer.epochs", std::to_string(o.epochs));
  c.set("optimizer.seed", std::to_string(o.seed));
  const DataConfig& d = e.data;
  c.set("data.source", d.source == DataSource::Mnist ? "mnist" : "synthetic");
  if (d.source == DataSource::Mnist) {
    c.set("data.images", d.images);
    if (d.labels) c.set("data.labels", *d.labels);
  } else {
    c.set("data.synthetic.target", to_string(d.synthetic_target));
    c.set("data.synthetic.target_seed", std::to_string(d.synthetic_target_seed));
  }
  c.set("data.train_size", std::to_string(d.train_size));
  c.set("data.test_size", std::to_string(d.test_size));
  c.set("data.seed", std::to_string(d.seed));
  c.set("data.train_noise", d.train_noise.name);
  c.set("data.power_scope", to_string(d.power_scope));
  std::string conds;
  for (std::size_t i = 0; i < d.test_conditions.size(); ++i) conds += (i ? "," : "") + d.test_conditions[i].name;
  c.set("data.test_conditions", conds);
  c.set("measure.shots", std::to_string(e.shots.value_or(0)));
  c.set("measure.seed", std::to_string(e.measure_seed));
  c.set("pl.screen", e.pl.screen ? "true" : "false");
  c.set("pl.mu_target", fmt(e.pl.mu_target));
  c.set("pl.max_attempts", std::to_string(e.pl.max_attempts));
  c.set("pl.kernel_batch", std::to_string(e.pl.kernel_batch));
  c.set("pl.slack", fmt(e.pl.slack));
  if (e.theory.c1) c.set("theory.c1", fmt(*e.theory.c1));
  if (e.theory.c2) c.set("theory.c2", fmt(*e.theory.c2));
  if (e.theory.linear_norm) c.set("theory.linear_norm", fmt(*e.theory.linear_norm));
  c.set("theory.zero_training_error", e.theory.zero_training_error ? "true" : "false");
  c.set("theory.rademacher_draws", std::to_string(e.theory.rademacher_draws));
  c.set("theory.rademacher_steps", std::to_string(e.theory.rademacher_steps));
  c.set("theory.rademacher_samples", std::to_string(e.theory.rademacher_samples));
  if (!e.sweep.values.empty()) c.set("sweep.values", join_doubles(e.sweep.values));
  c.set("sweep.trials", std::to_string(e.sweep.trials));
  for (const auto& [u, dims] : e.sweep.channel_out) c.set("sweep.channel_out." + std::to_string(u), join_sizes(dims));
  return c;
}

std::string resolve_path(const std::string& path, const std::string& base_dir) {
  const fs::path p(path);
  if (p.is_absolute() || fs::exists(p)) return path;
  if (!base_dir.empty() && fs::exists(fs::path(base_dir) / p)) return (fs::path(base_dir) / p).string();
#ifdef QREGRESS_SOURCE_DIR
  if (fs::exists(fs::path(QREGRESS_SOURCE_DIR) / p)) return (fs::path(QREGRESS_SOURCE_DIR) / p).string();
#endif
  return path;
}

// ---------------------------------------------------------------------------
// Pipeline

ExperimentData build_data(const ExperimentConfig& cfg) {
  return in_stage("data", [&] {
    const DataConfig& d = cfg.data;
    RegressionDataset train_clean;
    RegressionDataset test_clean;
    if (d.source == DataSource::Mnist) {
      std::optional<std::string> labels;
      if (d.labels) labels = resolve_path(*d.labels, cfg.base_dir);
      const RegressionDataset pool = load_mnist_idx(resolve_path(d.images, cfg.base_dir), labels);
      std::tie(train_clean, test_clean) = prepare_dataset(pool, d.train_size, d.test_size, d.seed);
      if (static_cast<std::size_t>(pool.inputs.cols()) != product(cfg.model.dims))
        throw ShapeError("model.dims do not match the 784-pixel images");
    } else {
      SyntheticSpec spec;
      spec.model = cfg.model;
      spec.model.kind = FrontKind::TTN;
      spec.target = d.synthetic_target;
      spec.target_seed = d.synthetic_target_seed;
      spec.input_seed = d.seed;
      spec.samples = d.train_size + d.test_size;
      const RegressionDataset all = synthetic_dataset(spec);
      std::vector<std::size_t> train_rows(d.train_size);
      std::vector<std::size_t> test_rows(d.test_size);
      std::iota(train_rows.begin(), train_rows.end(), 0);
      std::iota(test_rows.begin(), test_rows.end(), d.train_size);
      train_clean = all.subset(train_rows);
      test_clean = all.subset(test_rows);
    }

    ExperimentData out;
    const NoiseSpec train_noise = seeded(d.train_noise.noise, d.power_scope, mix64(d.seed ^ 0x747261696eULL));
    out.train.inputs = add_noise(train_clean.inputs, train_noise);
    out.train.targets = train_clean.targets;
    out.train.meta = train_clean.meta;
    out.train.meta.noise = train_noise;
    for (std::size_t i = 0; i < d.test_conditions.size(); ++i) {
      TestCondition cond = d.test_conditions[i];
      cond.noise = seeded(cond.noise, d.power_scope, mix64(d.seed + 0x7465737400ULL + i));
      RegressionDataset t;
      t.inputs = add_noise(test_clean.inputs, cond.noise);
      t.targets = test_clean.targets;
      t.meta = test_clean.meta;
      t.meta.noise = cond.noise;
      out.conditions.push_back(cond);
      out.tests.push_back(std::move(t));
    }
    out.train.validate();
    for (const auto& t : out.tests) t.validate();
    return out;
  });
}

Model build_model(const ExperimentConfig& cfg, const ExperimentData& data) {
  return in_stage("init", [&] {
    if (static_cast<std::size_t>(data.train.targets.cols()) != cfg.model.output_dim) {
      ModelConfig m = cfg.model;
      m.output_dim = static_cast<std::size_t>(data.train.targets.cols());
      ExperimentConfig copy = cfg;
      copy.model = m;
      return build_model(copy, data);
    }
    if (cfg.model.kind == FrontKind::TTN) return make_ttn_model(cfg.model, &data.train.targets);
    return make_pca_model(cfg.model, data.train.inputs, &data.train.targets);
  });
}

std::vector<ConditionResult> evaluate_conditions(const Model& model, const ExperimentConfig& cfg,
                                                 const ExperimentData& data) {
  return in_stage("evaluate", [&] {
    std::vector<ConditionResult> out;
    for (std::size_t i = 0; i < data.tests.size(); ++i) {
      const auto features = extract_features(model, data.tests[i].inputs);
      const MeasureMode mode = cfg.shots ? MeasureMode::sampled(*cfg.shots, mix64(cfg.measure_seed + i))
                                         : MeasureMode::exact();
      out.push_back({data.conditions[i].name, evaluate_mae(model, features, data.tests[i].targets, mode)});
    }
    return out;
  });
}

TheoryReport theory_for(const Model& model, const ExperimentConfig& cfg, const ExperimentData& data,
                        double train_mae, std::optional<double> test_mae) {
  return in_stage("theory", [&] {
    const ModelNorms norms = model_norms(model);
    BoundInputs in;
    in.power = dataset_power(data.train.inputs);
    in.samples = data.train.size();
    in.channel_norms = norms.channel;
    in.linear_norm = cfg.theory.linear_norm.value_or(norms.circuit);
    in.qubits = model.qubits();
    in.shots = cfg.shots.value_or(kInfiniteShots);
    in.c1 = cfg.theory.c1;
    in.c2 = cfg.theory.c2;
    in.training_error = cfg.theory.zero_training_error ? 0.0 : train_mae;

    EmpiricalProxies emp;
    emp.train_mae = train_mae;
    emp.test_mae = test_mae;
    if (test_mae) emp.generalization_gap = *test_mae - train_mae;
    if (cfg.theory.rademacher_draws > 0) {
      const auto n = std::min<Eigen::Index>(data.train.inputs.rows(),
                                            static_cast<Eigen::Index>(cfg.theory.rademacher_samples));
      const Matrix x = data.train.inputs.topRows(n);
      RademacherFamily family;
      family.linear_norm = in.linear_norm;
      family.activation = ChannelActivation::CenteredSigmoid;
      const std::size_t k = norms.channel.size();
      const std::size_t q = static_cast<std::size_t>(x.cols());
      for (std::size_t i = 0; i < k; ++i) family.block_sizes.push_back(q / k + (i + 1 == k ? q % k : 0));
      family.channel_norms = norms.channel;
      AscentConfig ascent;
      ascent.steps = cfg.theory.rademacher_steps;
      emp.rademacher_estimate =
          empirical_rademacher(family, x, cfg.theory.rademacher_draws, ascent, mix64(cfg.seed ^ 0x72616465ULL)).mean;
    }
    return aggregate_bound(in, emp);
  });
}

RunOutput run_experiment(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const ExperimentData data = build_data(cfg);
  Model model = build_model(cfg, data);

  const auto train_features = in_stage("data", [&] { return extract_features(model, data.train.inputs); });
  std::vector<SampleFeatures> test_features;
  RowMatrix test_targets;
  if (!data.tests.empty()) {
    test_features = in_stage("data", [&] { return extract_features(model, data.tests.front().inputs); });
    test_targets = data.tests.front().targets;
  }

  RunReport report;
  report.config = cfg;
  if (cfg.pl.screen) {
    report.pl_init = in_stage("init", [&] {
      std::vector<std::size_t> rows(std::min(cfg.pl.kernel_batch, train_features.size()));
      std::iota(rows.begin(), rows.end(), 0);
      return screen_initialization(model, train_features, data.train.targets, rows, cfg.pl.mu_target,
                                   cfg.pl.max_attempts, mix64(cfg.model.seed ^ 0x706c696eULL));
    });
  }

  const ModelObjective objective(model, train_features, data.train.targets, std::move(test_features),
                                 std::move(test_targets));
  report.state = in_stage("train", [&] { return train(objective, model.parameters(), cfg.optimizer); });
  Model trained = objective.model_at(report.state.params);

  report.final_train_mae =
      report.state.history.empty() ? report.state.initial.train_mae : report.state.history.back().train_mae;
  if (!report.state.aborted) {
    report.conditions = evaluate_conditions(trained, cfg, data);
    if (!report.conditions.empty()) report.final_test_mae = report.conditions.front().mae;
  }
  report.norms = model_norms(trained);
  report.linear_norm = cfg.theory.linear_norm.value_or(report.norms.circuit);
  report.dataset_power = dataset_power(data.train.inputs);
  const double mu = measured_mu_min(report.state);
  if (!report.state.history.empty() && mu > 0.0 && std::isfinite(mu))
    report.envelope = convergence_envelope(report.state, mu, cfg.pl.slack);
  if (!report.state.aborted) report.theory = theory_for(trained, cfg, data, report.final_train_mae, report.final_test_mae);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(report), std::move(trained)};
}

// ---------------------------------------------------------------------------
// Output

std::string report_to_json(const RunReport& r) {
  Json j;
  j["format"] = "qregress.report";
  j["version"] = 1;
  Json cfg = Json::object();
  const Config echo = to_config(r.config);
  for (const auto& [k, v] : echo.values()) cfg[k] = v;
  j["config"] = cfg;

  Json model;
  model["kind"] = to_string(r.config.model.kind);
  model["qubits"] = r.config.model.qubits;
  model["blocks"] = r.config.model.blocks;
  model["param_count"] = r.norms.parameter_count;
  model["param_bytes"] = r.norms.parameter_bytes;
  model["param_mb"] = static_cast<double>(r.norms.parameter_bytes) / 1e6;
  model["channel_norms"] = r.norms.channel;
  model["linear_norm"] = r.linear_norm;
  j["model"] = model;

  Json data;
  data["source"] = r.config.data.source == DataSource::Mnist ? "mnist" : "synthetic";
  data["train_size"] = r.config.data.train_size;
  data["test_size"] = r.config.data.test_size;
  data["train_noise"] = r.config.data.train_noise.name;
  data["dataset_power"] = r.dataset_power;
  j["data"] = data;

  Json results;
  results["epochs"] = r.state.history.size();
  results["aborted"] = r.state.aborted;
  results["diagnostic"] = r.state.diagnostic;
  results["initial_train_mae"] = r.state.initial.train_mae;
  results["final_train_mae"] = r.final_train_mae;
  results["final_test_mae"] = optional_json(r.final_test_mae);
  Json conds = Json::array();
  for (const auto& c : r.conditions) {
    Json item;
    item["condition"] = c.name;
    item["test_mae"] = c.mae;
    conds.push_back(item);
  }
  results["test_conditions"] = conds;
  results["measurement"] = r.config.shots ? "shots:" + std::to_string(*r.config.shots) : std::string("exact");
  j["results"] = results;

  if (r.pl_init) {
    Json pl;
    pl["attempts"] = r.pl_init->attempts;
    pl["lambda_min"] = r.pl_init->lambda_min;
    pl["mu_target"] = r.pl_init->mu_target;
    pl["accepted"] = r.pl_init->accepted;
    pl["initial_loss"] = r.pl_init->initial_loss;
    pl["ball_radius"] = r.pl_init->ball_radius;
    j["pl_init"] = pl;
  } else {
    j["pl_init"] = nullptr;
  }

  if (r.envelope) {
    Json env;
    env["mu_min"] = r.envelope->mu_min;
    env["slack"] = r.envelope->slack;
    env["holds"] = r.envelope->holds;
    env["per_step_holds"] = r.envelope->per_step_holds;
    env["first_failure"] = r.envelope->first_failure ? Json(*r.envelope->first_failure) : Json(nullptr);
    j["convergence"] = env;
  } else {
    j["convergence"] = nullptr;
  }

  j["theory"] = theory_json(r.theory);

  Json hist;
  hist["file"] = r.history_file;
  hist["rows"] = r.state.history.size();
  j["history"] = hist;

  Json ref;
  ref["note"] = "reference full-scale values, recorded for comparison only";
  ref["denoising_test_mae"] = {{"ttn_vqc_8q", 0.0597}, {"ttn_vqc_12q", 0.0156}, {"pca_vqc_8q", 0.3847},
                            {"pca_vqc_12q", 0.2939}};
  ref["params_mb"] = {{"ttn_vqc_8q", 0.452}, {"ttn_vqc_12q", 0.636}, {"pca_vqc_8q", 0.080},
                             {"pca_vqc_12q", 0.120}};
  ref["noise_test_mae"] = {{"ttn_vqc_8q_gaussian_8db", 0.1703},  {"ttn_vqc_8q_gaussian_12db", 0.1078},
                            {"pca_vqc_8q_gaussian_8db", 0.5151},  {"pca_vqc_8q_gaussian_12db", 0.4546},
                            {"ttn_vqc_8q_laplacian_8db", 0.1684}, {"ttn_vqc_8q_laplacian_12db", 0.1327},
                            {"pca_vqc_8q_laplacian_8db", 0.4651}, {"pca_vqc_8q_laplacian_12db", 0.4396}};
  ref["train_size_test_mae"] = {{"train_20000", 0.2941}, {"train_40000", 0.1853}, {"train_60000", 0.1078}};
  j["reference"] = ref;

  Json timing;
  timing["total_seconds"] = r.seconds;
  double train_seconds = 0.0;
  for (const auto& row : r.state.history) train_seconds += row.seconds;
  timing["train_seconds"] = train_seconds;
  j["timing"] = timing;
  return j.dump(2) + "\n";
}

std::string theory_report_json(const TheoryReport& report) { return theory_json(report).dump(2) + "\n"; }

void write_run(const RunOutput& run, const std::string& dir) {
  in_stage("output", [&] {
    fs::create_directories(dir);
    emit_history(run.report.state, (fs::path(dir) / run.report.history_file).string());
    write_text(fs::path(dir) / "report.json", report_to_json(run.report));
    save_checkpoint(run.model, (fs::path(dir) / "checkpoint.json").string());
    return 0;
  });
}

std::string history_to_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_mae,test_mae,grad_norm,pl_ratio,seconds\n";
  char buf[512];
  for (const auto& r : history) {
    const std::string test = r.test_mae ? fmt(*r.test_mae) : std::string();
    std::snprintf(buf, sizeof buf, "%zu,%s,%s,%s,%s,%s\n", r.epoch, fmt(r.train_mae).c_str(), test.c_str(),
                  fmt(r.grad_norm).c_str(), fmt(r.pl_ratio).c_str(), fmt(r.seconds).c_str());
    out += buf;
  }
  return out;
}

void emit_history(const TrainState& state, const std::string& path) {
  write_text(path, history_to_csv(state.history));
}

std::vector<EpochRecord> parse_history(const std::string& csv) {
  std::stringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != "epoch,train_mae,test_mae,grad_norm,pl_ratio,seconds")
    throw FormatError("history: unexpected header");
  std::vector<EpochRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 6) throw FormatError("history: expected 6 fields, got " + std::to_string(f.size()));
    EpochRecord r;
    r.epoch = static_cast<std::size_t>(parse_number(f[0], "epoch"));
    r.train_mae = parse_number(f[1], "train_mae");
    if (!f[2].empty()) r.test_mae = parse_number(f[2], "test_mae");
    r.grad_norm = parse_number(f[3], "grad_norm");
    r.pl_ratio = parse_number(f[4], "pl_ratio");
    r.seconds = parse_number(f[5], "seconds");
    out.push_back(r);
  }
  return out;
}

std::vector<EpochRecord> load_history(const std::string& path) { return parse_history(read_text(path)); }

// ---------------------------------------------------------------------------
// Sweeps

SweepAxis parse_sweep_axis(const std::string& s) {
  if (s == "qubits") return SweepAxis::Qubits;
  if (s == "shots") return SweepAxis::Shots;
  if (s == "train-size") return SweepAxis::TrainSize;
  if (s == "snr") return SweepAxis::Snr;
  throw DomainError("unknown sweep axis '" + s + "'");
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Qubits: return "qubits";
    case SweepAxis::Shots: return "shots";
    case SweepAxis::TrainSize: return "train-size";
    case SweepAxis::Snr: return "snr";
  }
  return "qubits";
}

SweepOutput run_sweep(const ExperimentConfig& base, SweepAxis axis, const std::string& dir,
                      const std::optional<std::string>& checkpoint) {
  fs::create_directories(dir);
  const std::vector<double> values = base.sweep.values.empty() ? default_sweep_values(axis) : base.sweep.values;
  const std::string name = to_string(axis);
  std::string csv;
  std::size_t qubits = base.model.qubits;

  if (axis == SweepAxis::Shots) {
    const ExperimentData data = build_data(base);
    const Model model = checkpoint ? load_checkpoint(*checkpoint) : build_model(base, data);
    qubits = model.qubits();
    if (data.tests.empty()) throw StageError("data", "shot sweep needs a test condition");
    const auto features = extract_features(model, std::span<const double>(data.tests.front().inputs.row(0).data(),
                                                                          static_cast<std::size_t>(data.tests.front().inputs.cols())));
    const StateVector psi = model_state(model, features);
    std::vector<std::uint64_t> shots;
    for (double v : values) shots.push_back(static_cast<std::uint64_t>(v));
    const auto rows = shot_error_sweep(psi, shots, base.sweep.trials, mix64(base.seed ^ 0x73686f74ULL));
    csv = "axis,value,trials,rmse\n";
    for (const auto& r : rows) csv += name + "," + std::to_string(r.shots) + "," + std::to_string(base.sweep.trials) + "," + fmt(r.rmse) + "\n";
  } else {
    csv = "axis,value,condition,train_mae,test_mae,param_count\n";
    auto emit = [&](double value, const RunOutput& run) {
      for (const auto& c : run.report.conditions)
        csv += name + "," + fmt(value) + "," + c.name + "," + fmt(run.report.final_train_mae) + "," + fmt(c.mae) + "," +
               std::to_string(run.report.norms.parameter_count) + "\n";
    };
    if (axis == SweepAxis::Snr) {
      ExperimentConfig cfg = base;
      cfg.data.test_conditions.clear();
      for (const char* kind : {"gaussian", "laplacian"})
        for (double v : values) cfg.data.test_conditions.push_back(parse_condition(std::string(kind) + ":" + fmt(v)));
      const RunOutput run = run_experiment(cfg);
      write_run(run, (fs::path(dir) / "snr").string());
      for (const auto& c : run.report.conditions) {
        const double snr = parse_number(c.name.substr(c.name.find(':') + 1), "SNR");
        csv += name + "," + fmt(snr) + "," + c.name + "," + fmt(run.report.final_train_mae) + "," + fmt(c.mae) + "," +
               std::to_string(run.report.norms.parameter_count) + "\n";
      }
    } else {
      for (double v : values) {
        ExperimentConfig cfg = base;
        const auto n = static_cast<std::size_t>(v);
        if (axis == SweepAxis::Qubits) {
          cfg.model.qubits = n;
          const auto it = base.sweep.channel_out.find(n);
          cfg.model.channel_out_dims = it != base.sweep.channel_out.end() ? it->second
                                                                           : default_channel_out(n, base.model.dims);
        } else {
          cfg.data.train_size = n;
        }
        const RunOutput run = run_experiment(cfg);
        write_run(run, (fs::path(dir) / (name + "-" + std::to_string(n))).string());
        emit(v, run);
      }
    }
  }
  write_text(fs::path(dir) / "sweep.csv", csv);
  // The summary is computed from the table as written, not from in-memory results.
  SweepOutput out;
  out.csv = read_text((fs::path(dir) / "sweep.csv").string());
  out.summary = summarize_sweep(out.csv, qubits);
  write_text(fs::path(dir) / "sweep_summary.json", out.summary);
  return out;
}

std::string summarize_sweep(const std::string& csv, std::size_t qubits) {
  std::stringstream in(csv);
  std::string header;
  std::getline(in, header);
  Json j;
  std::string line;
  if (header == "axis,value,trials,rmse") {
    std::vector<ScalingPoint> points;
    Json rows = Json::array();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = split(line, ',');
      if (f.size() != 4) throw FormatError("sweep: malformed shots row");
      const double m = parse_number(f[1], "shots");
      const double err = parse_number(f[3], "rmse");
      j["axis"] = f[0];
      rows.push_back({{"shots", m}, {"rmse", err}});
      points.push_back({static_cast<double>(qubits), m, err});
    }
    j["rows"] = rows;
    const ScalingFit fit = scaling_fit(points);
    j["fit"] = {{"c1", fit.c1}, {"c2", fit.c2}, {"residual", fit.residual},
                {"shot_slope", fit.shot_slope ? Json(*fit.shot_slope) : Json(nullptr)}};
    return j.dump(2) + "\n";
  }
  if (header != "axis,value,condition,train_mae,test_mae,param_count") throw FormatError("sweep: unexpected header");
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  std::vector<std::string> order;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 6) throw FormatError("sweep: malformed row");
    j["axis"] = f[0];
    if (!series.count(f[2])) order.push_back(f[2]);
    series[f[2]].emplace_back(parse_number(f[1], "value"), parse_number(f[4], "test_mae"));
  }
  Json conds = Json::array();
  for (const auto& name : order) {
    auto s = series[name];
    std::sort(s.begin(), s.end());
    bool non_increasing = true;
    for (std::size_t i = 1; i < s.size(); ++i) non_increasing = non_increasing && s[i].second <= s[i - 1].second;
    Json values = Json::array();
    Json maes = Json::array();
    for (auto [v, m] : s) values.push_back(v), maes.push_back(m);
    conds.push_back({{"condition", name}, {"values", values}, {"test_mae", maes},
                     {"test_mae_non_increasing", non_increasing}});
  }
  j["series"] = conds;
  return j.dump(2) + "\n";
}

}  // namespace qregress
