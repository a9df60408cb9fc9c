#pragma once

// Per-scene optimization: a deformation bootstrap toward the identity map,
// then joint training of every network with Adam.

#include "ncam/camera_model.hpp"
#include "ncam/checkpoint.hpp"
#include "ncam/config.hpp"
#include "ncam/core/adam.hpp"
#include "ncam/dataset.hpp"
#include "ncam/losses.hpp"
#include "ncam/model.hpp"
#include "ncam/scene_model.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ncam {

class TrainingDiverged : public std::runtime_error {
 public:
  explicit TrainingDiverged(const std::string& what) : std::runtime_error(what) {}
};

template <class T>
struct LossEval {
  LossReport report;
  std::vector<ad::Matrix<T>> grads;  // ordered like ModelParams::collect()
};

/// K tone-mapper probes per channel, uniform over the tone domain.
template <class T>
ad::Matrix<T> draw_probes(const ModelParams<T>& params, const ModelConfig& cfg, int count, std::mt19937_64& rng) {
  const auto [lo, hi] = tone_domain(params, cfg);
  std::uniform_real_distribution<double> u(lo, hi);
  ad::Matrix<T> p(3, count);
  for (Eigen::Index k = 0; k < p.size(); ++k) p.data()[k] = static_cast<T>(u(rng));
  return p;
}

namespace train_detail {

struct Range {
  Eigen::Index begin = 0;
  Eigen::Index count = 0;
};

inline Range slice(Eigen::Index n, int shard, int shards) {
  const Eigen::Index b = n * shard / shards;
  const Eigen::Index e = n * (shard + 1) / shards;
  return {b, e - b};
}

template <class T>
struct ShardResult {
  LossTerms terms;
  std::vector<ad::Matrix<T>> grads;
};

/// One slice of the batch on its own tape. Denominators are those of the full
/// batch, so shard losses and gradients add up to the full-batch values. The
/// tone-mapper regularizers are batch independent and live on shard 0.
template <class T>
ShardResult<T> eval_shard(const ModelParams<T>& params, const ModelConfig& cfg, const Batch<T>& batch,
                          const ad::Matrix<T>& probes, const TrainConfig& tc, double lambda_flow, int shard,
                          int shards, bool need_grads) {
  ad::Tape<T> tape;
  const ModelVars vars = bind(tape, params, need_grads);
  ShardResult<T> out;

  ad::Var color;
  const Range r = slice(batch.size(), shard, shards);
  if (r.count > 0) {
    const std::vector<int> ids(batch.images.begin() + r.begin, batch.images.begin() + r.begin + r.count);
    const ad::Var dt = exposure_row(tape, cfg, vars, ids);
    const PixelForward f = forward_pixels(tape, cfg, vars, ad::Matrix<T>(batch.centers.middleCols(r.begin, r.count)), dt);
    const ad::Var target = tape.constant(batch.colors.middleCols(r.begin, r.count));
    color = color_loss(tape, f.color, target, std::optional<T>(static_cast<T>(3 * batch.size())));
    out.terms.color = static_cast<double>(tape.value(color)(0, 0));
  }

  ad::Var flow;
  const Range fr = slice(batch.flow_pairs(), shard, shards);
  if (fr.count > 0) {
    const ad::Var q = deform(tape, cfg, vars, tape.constant(batch.flow_from.middleCols(fr.begin, fr.count)));
    const ad::Var qs = deform(tape, cfg, vars, tape.constant(batch.flow_to.middleCols(fr.begin, fr.count)));
    flow = flow_loss(tape, q, qs, std::optional<T>(static_cast<T>(batch.flow_pairs())));
    out.terms.flow = static_cast<double>(tape.value(flow)(0, 0));
  }

  ad::Var wb, grad;
  if (shard == 0) {
    wb = white_balance_loss(tape, cfg, vars, tc.loss.c0);
    grad = gradient_loss(tape, cfg, vars, probes, tc.gradient_eps);
    out.terms.white_balance = static_cast<double>(tape.value(wb)(0, 0));
    out.terms.gradient = static_cast<double>(tape.value(grad)(0, 0));
  }

  if (need_grads) {
    const ad::Var total = weighted_total(tape, color, flow, wb, grad, lambda_flow, tc.loss);
    tape.backward(total);
    out.grads = gradients(tape, vars);
  }
  return out;
}

template <class T>
void add_into(ShardResult<T>& acc, const ShardResult<T>& s) {
  acc.terms.color += s.terms.color;
  acc.terms.flow += s.terms.flow;
  acc.terms.white_balance += s.terms.white_balance;
  acc.terms.gradient += s.terms.gradient;
  if (acc.grads.empty()) {
    acc.grads = s.grads;
  } else {
    for (std::size_t k = 0; k < s.grads.size(); ++k) acc.grads[k] += s.grads[k];
  }
}

}  // namespace train_detail

/// Total loss and (optionally) its gradient for one batch. Shards run on up to
/// tc.threads workers; with tc.deterministic the shard results are summed in
/// shard order, otherwise in completion order.
template <class T>
LossEval<T> evaluate_loss(const ModelParams<T>& params, const ModelConfig& cfg, const Batch<T>& batch,
                          const ad::Matrix<T>& probes, const TrainConfig& tc, std::int64_t iteration,
                          bool need_grads = true) {
  using train_detail::ShardResult;
  const double lambda_flow = flow_weight_schedule(iteration, tc.iterations, tc.loss);
  const int shards = std::max(1, std::min(tc.shards, batch.size()));
  ShardResult<T> acc;

  auto run = [&](int s) {
    return train_detail::eval_shard(params, cfg, batch, probes, tc, lambda_flow, s, shards, need_grads);
  };
  if (tc.threads <= 1 || shards == 1) {
    for (int s = 0; s < shards; ++s) train_detail::add_into(acc, run(s));
  } else if (tc.deterministic) {
    for (int first = 0; first < shards; first += tc.threads) {
      std::vector<std::future<ShardResult<T>>> wave;
      for (int s = first; s < std::min(shards, first + tc.threads); ++s) wave.push_back(std::async(std::launch::async, run, s));
      for (auto& f : wave) train_detail::add_into(acc, f.get());
    }
  } else {
    std::mutex m;
    for (int first = 0; first < shards; first += tc.threads) {
      std::vector<std::future<void>> wave;
      for (int s = first; s < std::min(shards, first + tc.threads); ++s) {
        wave.push_back(std::async(std::launch::async, [&, s] {
          ShardResult<T> r = run(s);
          std::lock_guard<std::mutex> lock(m);
          train_detail::add_into(acc, r);
        }));
      }
      for (auto& f : wave) f.get();
    }
  }

  LossEval<T> ev;
  ev.report.terms = acc.terms;
  ev.report.lambda_flow = lambda_flow;
  ev.report.total = total_loss(acc.terms, lambda_flow, tc.loss);
  ev.report.iteration = iteration;
  ev.report.flow_pairs = batch.flow_pairs();
  ev.report.skipped_flow_pairs = batch.skipped_flow;
  ev.grads = std::move(acc.grads);
  return ev;
}

template <class T>
bool all_finite(ModelParams<T>& params) {
  for (const auto& p : params.collect()) {
    if (!p.value->allFinite()) return false;
  }
  return true;
}

/// forward, loss, backward and one Adam update over every trainable tensor.
template <class T>
LossReport train_step(ModelParams<T>& params, AdamState<T>& adam, const ModelConfig& cfg, const Batch<T>& batch,
                      const ad::Matrix<T>& probes, const TrainConfig& tc, std::int64_t iteration) {
  LossEval<T> ev = evaluate_loss(params, cfg, batch, probes, tc, iteration, true);
  if (!std::isfinite(ev.report.total)) {
    throw TrainingDiverged("non-finite loss at iteration " + std::to_string(iteration));
  }
  const auto refs = params.collect();
  try {
    adam_step<T>(refs, ev.grads, adam);
  } catch (const NonFiniteGradient& e) {
    throw TrainingDiverged(std::string(e.what()) + " at iteration " + std::to_string(iteration));
  }
  if (!all_finite(params)) throw TrainingDiverged("non-finite parameters at iteration " + std::to_string(iteration));
  return ev.report;
}

// --- bootstrap ----------------------------------------------------------------

/// Mean squared distance between D(p) and (x, y) over the batch centers.
template <class T>
double bootstrap_step(ModelParams<T>& params, AdamState<T>& adam, const ModelConfig& cfg, const ad::Matrix<T>& centers) {
  ad::Tape<T> tape;
  const MlpVars vars = bind(tape, params.deform, true);
  const ad::Var q = forward(tape, cfg.deform_spec(), vars, tape.constant(centers));
  const ad::Var target = tape.constant(centers.topRows(2));
  const ad::Var loss = ad::sum_over(tape, ad::square(tape, ad::sub(tape, q, target)), static_cast<T>(centers.cols()));
  const double value = static_cast<double>(tape.value(loss)(0, 0));
  if (!std::isfinite(value)) throw TrainingDiverged("non-finite bootstrap loss");
  tape.backward(loss);
  std::vector<ad::Matrix<T>> grads;
  for (std::size_t l = 0; l < vars.weights.size(); ++l) {
    grads.push_back(tape.gradient(vars.weights[l]));
    grads.push_back(tape.gradient(vars.biases[l]));
  }
  std::vector<ParamRef<T>> refs;
  params.deform.collect("deform", refs);
  adam_step<T>(refs, grads, adam);
  return value;
}

/// Mean ||D(p) - (x, y)||^2 over every pixel of every image.
template <class T>
double deform_grid_error(const ModelParams<T>& params, const ModelConfig& cfg) {
  const Eigen::Index per = static_cast<Eigen::Index>(cfg.width) * cfg.height;
  double sum = 0.0;
  for (int i = 0; i < cfg.images; ++i) {
    ad::Matrix<T> pos(3, per);
    for (int y = 0; y < cfg.height; ++y) {
      for (int x = 0; x < cfg.width; ++x) {
        const Eigen::Index k = static_cast<Eigen::Index>(y) * cfg.width + x;
        pos(0, k) = static_cast<T>(normalize_index(x, cfg.width));
        pos(1, k) = static_cast<T>(normalize_index(y, cfg.height));
        pos(2, k) = static_cast<T>(normalize_index(i, cfg.images));
      }
    }
    const ad::Matrix<T> q = mlp_forward(params.deform, pos);
    sum += static_cast<double>((q - pos.topRows(2)).squaredNorm());
  }
  return sum / static_cast<double>(per * cfg.images);
}

// --- checkpoint mapping ---------------------------------------------------------

template <class T>
TensorRecord to_record(const std::string& name, const ad::Matrix<T>& m) {
  TensorRecord r;
  r.name = name;
  r.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  r.values.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.values.push_back(static_cast<float>(m(i, j)));
  }
  return r;
}

template <class T>
void from_record(const TensorRecord& r, ad::Matrix<T>& m) {
  if (r.dims.size() != 2 || r.dims[0] != static_cast<std::uint64_t>(m.rows()) ||
      r.dims[1] != static_cast<std::uint64_t>(m.cols())) {
    throw FormatError("checkpoint: tensor '" + r.name + "' has shape incompatible with the model");
  }
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<T>(r.values[static_cast<std::size_t>(i * m.cols() + j)]);
  }
}

/// Model configuration and parameters from a checkpoint.
inline std::pair<ModelConfig, ModelParams<float>> load_model(const CheckpointFile& ck) {
  if (!ck.meta.contains("model")) throw FormatError("checkpoint: metadata lacks the model configuration");
  const ModelConfig cfg = model_config_from_json(ck.meta.at("model"));
  ModelParams<float> p = ModelParams<float>::zeros(cfg);
  for (const auto& ref : p.collect()) from_record(ck.find(ref.name), *ref.value);
  return {cfg, std::move(p)};
}

// --- driver -------------------------------------------------------------------------

struct TrainOutputs {
  std::filesystem::path checkpoint;  // final (and periodic) checkpoint; empty: not written
  std::filesystem::path log;         // JSON lines; empty: no log
  std::function<void(const std::string&)> progress;  // receives each log line
};

class Trainer {
 public:
  Trainer(SceneDataset data, TrainConfig config) : data_(std::move(data)), config_(std::move(config)) {
    data_.validate();
    config_.validate();
    ModelConfig base = config_.model_config();
    model_ = data_.model_config(base);
    if (config_.exposure_mode) model_.exposure_mode = *config_.exposure_mode;
    model_.validate();
    params_ = ModelParams<float>::init(model_, config_.seed);
    rng_.seed(config_.seed ^ 0x9e3779b97f4a7c15ull);
    reset_adam();
  }

  /// Continues from a checkpoint written by checkpoint(). `iterations`
  /// optionally extends the run.
  static Trainer restore(SceneDataset data, const CheckpointFile& ck, std::optional<std::int64_t> iterations = {}) {
    TrainConfig tc = train_config_from_json(ck.meta.at("train"));
    if (iterations) tc.iterations = *iterations;
    Trainer t(std::move(data), tc);
    auto [cfg, params] = load_model(ck);
    if (cfg.width != t.model_.width || cfg.height != t.model_.height || cfg.images != t.model_.images) {
      throw FormatError("checkpoint: model geometry does not match the dataset");
    }
    t.model_ = cfg;
    t.params_ = std::move(params);
    t.reset_adam();
    const auto refs = t.params_.collect();
    for (std::size_t k = 0; k < refs.size(); ++k) {
      from_record(ck.find("adam.m/" + refs[k].name), t.adam_.first_moment[k]);
      from_record(ck.find("adam.v/" + refs[k].name), t.adam_.second_moment[k]);
    }
    t.adam_.step_count = ck.meta.at("adam_steps").get<std::int64_t>();
    t.adam_.skipped_steps = ck.meta.at("adam_skipped").get<std::int64_t>();
    t.iteration_ = ck.meta.at("iteration").get<std::int64_t>();
    t.bootstrapped_ = ck.meta.at("bootstrapped").get<bool>();
    std::istringstream rs(ck.meta.at("rng").get<std::string>());
    rs >> t.rng_;
    if (!rs) throw FormatError("checkpoint: corrupt RNG state");
    return t;
  }

  const ModelConfig& model() const { return model_; }
  const TrainConfig& config() const { return config_; }
  const SceneDataset& data() const { return data_; }
  ModelParams<float>& params() { return params_; }
  const ModelParams<float>& params() const { return params_; }
  std::int64_t iteration() const { return iteration_; }
  bool bootstrapped() const { return bootstrapped_; }

  /// Trains only D toward (x, y) with its own Adam instance. The main
  /// optimizer state is reset afterwards.
  void bootstrap(const std::function<void(std::int64_t, double)>& on_step = {}) {
    std::vector<ParamRef<float>> refs;
    params_.deform.collect("deform", refs);
    AdamConfig ac;
    ac.lr = config_.bootstrap_lr.value_or(config_.lr);
    AdamState<float> adam = AdamState<float>::init(refs, ac);
    for (std::int64_t k = 0; k < config_.bootstrap_iterations; ++k) {
      const Batch<float> b = sample_batch<float>(data_, config_.batch_size, rng_, false);
      const double loss = bootstrap_step(params_, adam, model_, b.centers);
      if (on_step) on_step(k, loss);
    }
    bootstrapped_ = true;
    reset_adam();
  }

  /// One main-phase iteration on a fresh batch.
  LossReport step() {
    if (!bootstrapped_) throw std::logic_error("Trainer::step: bootstrap has not run");
    const Batch<float> b = sample_batch<float>(data_, config_.batch_size, rng_, true);
    const ad::Matrix<float> probes = draw_probes(params_, model_, config_.gradient_probes, rng_);
    const LossReport r = train_step(params_, adam_, model_, b, probes, config_, iteration_);
    ++iteration_;
    return r;
  }

  /// Bootstrap if needed, then steps until `until` (default: the configured
  /// iteration count), with logging and periodic checkpoints.
  void run(const TrainOutputs& out = {}, std::optional<std::int64_t> until = {}) {
    const std::int64_t stop = until.value_or(config_.iterations);
    const auto t0 = std::chrono::steady_clock::now();
    std::ofstream log;
    if (!out.log.empty()) {
      log.open(out.log, std::ios::app);
      if (!log) throw std::runtime_error("cannot open training log '" + out.log.string() + "'");
    }
    auto seconds = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
    auto emit = [&](const nlohmann::json& j) {
      const std::string line = j.dump();
      if (log) log << line << "\n" << std::flush;
      if (out.progress) out.progress(line);
    };
    std::string last_good = "none";
    auto save = [&] {
      if (out.checkpoint.empty()) return;
      write_checkpoint_file(out.checkpoint, checkpoint());
      last_good = out.checkpoint.string() + " (iteration " + std::to_string(iteration_) + ")";
    };

    if (!bootstrapped_) {
      bootstrap([&](std::int64_t k, double loss) {
        if (config_.log_every > 0 && ((k + 1) % config_.log_every == 0 || k + 1 == config_.bootstrap_iterations)) {
          emit({{"phase", "bootstrap"}, {"iteration", k + 1}, {"deform", loss}, {"wall", seconds()}});
        }
      });
      if (config_.checkpoint_every > 0) save();
    }
    try {
      while (iteration_ < stop) {
        const LossReport r = step();
        if (config_.log_every > 0 && (iteration_ % config_.log_every == 0 || iteration_ == stop)) {
          emit({{"phase", "train"},
                {"iteration", iteration_},
                {"color", r.terms.color},
                {"flow", r.terms.flow},
                {"white_balance", r.terms.white_balance},
                {"gradient", r.terms.gradient},
                {"lambda_flow", r.lambda_flow},
                {"total", r.total},
                {"wall", seconds()}});
        }
        if (config_.checkpoint_every > 0 && iteration_ % config_.checkpoint_every == 0 && iteration_ < stop) save();
      }
    } catch (const TrainingDiverged& e) {
      throw TrainingDiverged(std::string(e.what()) + "; last good checkpoint: " + last_good);
    }
    save();
  }

  CheckpointFile checkpoint() const {
    CheckpointFile ck;
    std::ostringstream rs;
    rs << rng_;
    ck.meta = {{"format", "ncam-checkpoint"},
               {"train", to_json(config_)},
               {"model", to_json(model_)},
               {"iteration", iteration_},
               {"bootstrapped", bootstrapped_},
               {"adam_steps", adam_.step_count},
               {"adam_skipped", adam_.skipped_steps},
               {"rng", rs.str()}};
    auto& p = const_cast<ModelParams<float>&>(params_);
    const auto refs = p.collect();
    for (const auto& r : refs) ck.tensors.push_back(to_record(r.name, *r.value));
    for (std::size_t k = 0; k < refs.size(); ++k) {
      ck.tensors.push_back(to_record("adam.m/" + refs[k].name, adam_.first_moment[k]));
      ck.tensors.push_back(to_record("adam.v/" + refs[k].name, adam_.second_moment[k]));
    }
    return ck;
  }

 private:
  void reset_adam() {
    AdamConfig ac;
    ac.lr = config_.lr;
    adam_ = AdamState<float>::init(params_.collect(), ac);
  }

  SceneDataset data_;
  TrainConfig config_;
  ModelConfig model_;
  ModelParams<float> params_;
  AdamState<float> adam_;
  std::mt19937_64 rng_;
  std::int64_t iteration_ = 0;
  bool bootstrapped_ = false;
};

}  // namespace ncam
