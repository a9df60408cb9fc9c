#pragma once

// Finite-difference checks of every network and of the composed training
// loss on a small random model in double precision.

#include "ncam/camera_model.hpp"
#include "ncam/core/gradcheck.hpp"
#include "ncam/dataset.hpp"
#include "ncam/scene_model.hpp"
#include "ncam/trainer.hpp"

#include <random>
#include <string>
#include <vector>

namespace ncam {

struct GradCheckEntry {
  std::string name;
  GradCheckReport report;
};

struct GradCheckSuiteOptions {
  std::uint64_t seed = 0;
  std::size_t samples = 100;  // per network; the composed loss uses 2x
  int batch = 16;
  double step = 1e-6;
};

namespace gradcheck_detail {

inline ModelConfig small_model() {
  ModelConfig cfg;
  cfg.arch.deform_hidden = {16, 16};
  cfg.arch.atlas_hidden = {16, 16};
  cfg.arch.offset_hidden = {12, 12};
  cfg.arch.weight_hidden = {12, 12};
  cfg.arch.tone_hidden = {16};
  cfg.width = 8;
  cfg.height = 8;
  cfg.images = 3;
  cfg.log2_dt = {-1.0, 0.0, 1.0};
  return cfg;
}

/// Random parameters everywhere, heads included, so no gradient is trivially zero.
inline ModelParams<double> random_params(const ModelConfig& cfg, std::mt19937_64& rng) {
  ModelParams<double> p;
  p.deform = Mlp<double>::random(cfg.deform_spec(), rng);
  p.atlas = Mlp<double>::random(cfg.atlas_spec(), rng);
  p.offset = Mlp<double>::random(cfg.offset_spec(), rng);
  p.weight = Mlp<double>::random(cfg.weight_spec(), rng);
  for (auto& t : p.tone) t = Mlp<double>::random(cfg.tone_spec(), rng);
  if (cfg.exposure_mode == ExposureMode::learned) {
    p.exposure = ad::Matrix<double>::Random(cfg.images, 1) * 0.5;
  }
  return p;
}

inline ad::Matrix<double> uniform(Eigen::Index rows, Eigen::Index cols, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  ad::Matrix<double> m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
  return m;
}

/// sum(cotangent .* f(params)) for a recorded function of the bound variables.
template <class Fn>
Objective<double> projected(ModelParams<double>& params, std::vector<std::size_t> which, ad::Matrix<double> cotangent,
                            Fn fn) {
  Objective<double> obj;
  auto eval = [&params, cotangent, fn, which](bool grads) {
    ad::Tape<double> tape;
    const ModelVars vars = bind(tape, params, true);
    const ad::Var out = fn(tape, vars);
    const double v = (tape.value(out).array() * cotangent.array()).sum();
    std::vector<ad::Matrix<double>> g;
    if (grads) {
      tape.backward(out, cotangent);
      const auto all = ordered(vars);
      for (std::size_t k : which) g.push_back(tape.gradient(all[k]));
    }
    return std::pair{v, g};
  };
  obj.value = [eval] { return eval(false).first; };
  obj.gradient = [eval] { return eval(true).second; };
  return obj;
}

}  // namespace gradcheck_detail

/// One entry per network (deform, atlas, offset, weight, tone) and one for the
/// composed loss.
inline std::vector<GradCheckEntry> run_gradcheck_suite(const GradCheckSuiteOptions& opt = {}) {
  using namespace gradcheck_detail;
  std::mt19937_64 rng(opt.seed);
  ModelConfig cfg = small_model();
  ModelParams<double> params = random_params(cfg, rng);
  const auto all = params.collect();
  const int B = opt.batch;

  auto select = [&](const std::string& prefix) {
    std::vector<std::size_t> idx;
    std::vector<ParamRef<double>> refs;
    for (std::size_t k = 0; k < all.size(); ++k) {
      if (all[k].name.rfind(prefix, 0) == 0) {
        idx.push_back(k);
        refs.push_back(all[k]);
      }
    }
    return std::pair{idx, refs};
  };

  GradCheckOptions gopt;
  gopt.step = opt.step;
  gopt.samples = opt.samples;
  gopt.seed = opt.seed + 1;

  std::vector<GradCheckEntry> out;
  auto check = [&](const std::string& name, const std::string& prefix, const ad::Matrix<double>& cot, auto fn) {
    auto [idx, refs] = select(prefix);
    const Objective<double> obj = projected(params, idx, cot, fn);
    out.push_back({name, finite_diff_check<double>(obj, refs, gopt)});
  };

  const ad::Matrix<double> pos = uniform(3, B, -1.0, 1.0, rng);
  const ad::Matrix<double> q = uniform(2, B, -1.0, 1.0, rng);
  const ad::Matrix<double> z = uniform(3, B, -6.0, 6.0, rng);

  check("deform", "deform.", uniform(2, B, -1, 1, rng), [&](ad::Tape<double>& t, const ModelVars& v) {
    return deform(t, cfg, v, t.constant(pos));
  });
  check("atlas", "atlas.", uniform(3, B, -1, 1, rng), [&](ad::Tape<double>& t, const ModelVars& v) {
    return atlas_log_irradiance(t, cfg, v, t.constant(q));
  });
  check("offset", "offset.", uniform(2 * cfg.patch_area(), B, -1, 1, rng), [&](ad::Tape<double>& t, const ModelVars& v) {
    return predict_offsets(t, cfg, v, t.constant(pos));
  });
  check("weight", "weight.", uniform(cfg.patch_area(), B, -1, 1, rng), [&](ad::Tape<double>& t, const ModelVars& v) {
    return psf_weights(t, cfg, v, t.constant(pos));
  });
  check("tone", "tone_", uniform(3, B, -1, 1, rng), [&](ad::Tape<double>& t, const ModelVars& v) {
    return tone_map(t, cfg, v, t.constant(z));
  });

  // Composed loss over every parameter.
  Batch<double> batch;
  batch.centers = uniform(3, B, -0.9, 0.9, rng);
  batch.colors = uniform(3, B, 0.05, 0.95, rng);
  std::uniform_int_distribution<int> img(0, cfg.images - 1);
  for (int k = 0; k < B; ++k) {
    batch.images.push_back(img(rng));
    batch.centers(2, k) = normalize_index(batch.images.back(), cfg.images);
  }
  batch.flow_from = uniform(3, B / 2, -0.9, 0.9, rng);
  batch.flow_to = (batch.flow_from.array() + 0.05).matrix();
  const ad::Matrix<double> probes = uniform(3, 8, -9.0, 9.0, rng);
  TrainConfig tc;
  tc.iterations = 100;
  Objective<double> loss;
  loss.value = [&] { return evaluate_loss(params, cfg, batch, probes, tc, 10, false).report.total; };
  loss.gradient = [&] { return evaluate_loss(params, cfg, batch, probes, tc, 10, true).grads; };
  GradCheckOptions lopt = gopt;
  lopt.samples = 2 * opt.samples;
  out.push_back({"composed_loss", finite_diff_check<double>(loss, all, lopt)});
  return out;
}

}  // namespace ncam
