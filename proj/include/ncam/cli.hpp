#pragma once

// Command-line front end. Exit status: 0 success, 2 usage error, 1 runtime
// failure.

#include "ncam/checkpoint.hpp"
#include "ncam/config.hpp"
#include "ncam/dataset.hpp"
#include "ncam/gradcheck_suite.hpp"
#include "ncam/io/formats.hpp"
#include "ncam/io/manifest.hpp"
#include "ncam/metrics.hpp"
#include "ncam/renderer.hpp"
#include "ncam/simulator.hpp"
#include "ncam/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace ncam::cli {

namespace fs = std::filesystem;

/// JSON has no infinity; non-finite metrics are written as the strings
/// "inf", "-inf" or "nan".
inline nlohmann::json metric(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline ImageF read_any_image(const fs::path& p) {
  const std::string ext = p.extension().string();
  if (ext == ".pfm") return read_pfm(p);
  if (ext == ".ppm") return to_real(read_ldr(p));
  throw FormatError("'" + p.string() + "': unsupported extension (expected .pfm or .ppm)");
}

struct GenerateArgs {
  std::string spec;
  std::string out;
  std::optional<std::uint64_t> seed;
};

inline int run_generate(const GenerateArgs& a) {
  GenerateSpec g = generate_spec_from_json(read_json_file(a.spec));
  if (a.seed) g.seed = *a.seed;
  const sim::Dataset ds = sim::gen_dataset(g.scene, g.captures, a.out, g.seed);
  std::cout << "wrote " << ds.captures.size() << " images to " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string manifest;
  std::string config;
  std::string preset;
  std::string out = "model.ckpt";
  std::string log;
  std::string resume;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> iterations;
  std::optional<int> threads;
  std::optional<std::int64_t> checkpoint_every;
  bool quiet = false;
};

inline int run_train(const TrainArgs& a) {
  const SceneDataset data = SceneDataset::from_manifest(read_manifest(a.manifest));
  TrainOutputs out;
  out.checkpoint = a.out;
  out.log = a.log;
  if (!a.quiet) out.progress = [](const std::string& line) { std::cerr << line << "\n"; };

  if (!a.resume.empty()) {
    Trainer t = Trainer::restore(data, read_checkpoint_file(a.resume), a.iterations);
    t.run(out);
  } else {
    TrainConfig tc = a.preset.empty() ? TrainConfig{} : train_preset(a.preset);
    if (!a.config.empty()) {
      const nlohmann::json j = read_json_file(a.config);
      tc = a.preset.empty() ? parse_train_config(j) : train_config_from_json(j, tc);
    }
    if (a.seed) tc.seed = *a.seed;
    if (a.iterations) tc.iterations = *a.iterations;
    if (a.threads) tc.threads = *a.threads;
    if (a.checkpoint_every) tc.checkpoint_every = *a.checkpoint_every;
    tc.validate();
    Trainer t(data, tc);
    t.run(out);
  }
  std::cout << "checkpoint: " << a.out << "\n";
  return 0;
}

struct RenderArgs {
  std::string checkpoint;
  std::string out = ".";
  bool sharp_hdr = false;
  bool sharp_ldr = false;
  int focus_sweep = 0;
  std::vector<double> exposures;
  int atlas = 0;
  double frame = 0.0;
  std::optional<double> focus;
  std::optional<double> ev;
  std::optional<double> display_scale;
};

inline int run_render(const RenderArgs& a) {
  if (!a.sharp_hdr && !a.sharp_ldr && a.focus_sweep == 0 && a.exposures.empty() && a.atlas == 0) {
    throw CLI::ValidationError("render", "choose at least one of --sharp-hdr, --sharp-ldr, --focus-sweep, --exposures, --atlas");
  }
  const auto [cfg, params] = load_model(read_checkpoint_file(a.checkpoint));
  if (a.frame < 0 || a.frame > cfg.images - 1) throw std::out_of_range("--frame outside [0, images - 1]");
  fs::create_directories(a.out);
  const fs::path dir(a.out);
  auto frame_ev = [&] {
    if (a.ev) return *a.ev;
    const int i = static_cast<int>(std::lround(a.frame));
    return exposure_meta(params, cfg, i).log2_dt;
  };
  char name[64];
  int written = 0;
  if (a.sharp_hdr) {
    const ImageF hdr = render_sharp_hdr(params, cfg, a.frame, cfg.width, cfg.height);
    std::snprintf(name, sizeof(name), "sharp_hdr_%03d.pfm", static_cast<int>(std::lround(a.frame)));
    write_pfm(dir / name, hdr);
    std::snprintf(name, sizeof(name), "sharp_hdr_%03d_display.ppm", static_cast<int>(std::lround(a.frame)));
    write_ldr(dir / name, quantize(display_hdr(hdr, a.display_scale)));
    written += 2;
  }
  if (a.sharp_ldr) {
    write_ldr(dir / "sharp_ldr.ppm", quantize(render_sharp_ldr(params, cfg, a.frame, frame_ev())));
    ++written;
  }
  if (a.focus_sweep > 0) {
    for (int k = 0; k < a.focus_sweep; ++k) {
      const double f = a.focus_sweep == 1 ? 0.0 : (cfg.images - 1) * static_cast<double>(k) / (a.focus_sweep - 1);
      std::snprintf(name, sizeof(name), "focus_%03d.ppm", k);
      write_ldr(dir / name, quantize(render_ldr(params, cfg, a.frame, f, frame_ev())));
      ++written;
    }
  }
  for (std::size_t k = 0; k < a.exposures.size(); ++k) {
    std::snprintf(name, sizeof(name), "exposure_%03zu.ppm", k);
    write_ldr(dir / name, quantize(render_ldr(params, cfg, a.frame, a.focus.value_or(a.frame), a.exposures[k])));
    ++written;
  }
  if (a.atlas > 0) {
    write_ldr(dir / "atlas.ppm", quantize(render_atlas(params, cfg, a.atlas)));
    ++written;
  }
  std::cout << "wrote " << written << " files to " << a.out << "\n";
  return 0;
}

struct EvalArgs {
  std::string pred;
  std::string gt;
  std::string out;
};

inline int run_eval(const EvalArgs& a) {
  const ImageF pred = read_any_image(a.pred);
  const ImageF gt = read_any_image(a.gt);
  nlohmann::json r;
  r["psnr"] = metric(psnr(pred, gt));
  const SsimOptions so;
  // Null when the image is smaller than the SSIM window.
  r["ssim"] = pred.width >= so.window && pred.height >= so.window ? metric(ssim(pred, gt, so)) : nlohmann::json(nullptr);
  const bool positive = std::all_of(pred.data.begin(), pred.data.end(), [](float v) { return v > 0.f; }) &&
                        std::all_of(gt.data.begin(), gt.data.end(), [](float v) { return v > 0.f; });
  r["psnr_mu"] = positive ? metric(psnr_mu(pred, gt)) : nlohmann::json(nullptr);
  const std::string text = r.dump(2);
  std::cout << text << "\n";
  if (!a.out.empty()) {
    std::ofstream f(a.out);
    if (!f) throw std::runtime_error("cannot write '" + a.out + "'");
    f << text << "\n";
  }
  return 0;
}

struct GradcheckArgs {
  std::uint64_t seed = 0;
  std::size_t samples = 100;
  double tolerance = 1e-4;
};

inline int run_gradcheck(const GradcheckArgs& a) {
  GradCheckSuiteOptions opt;
  opt.seed = a.seed;
  opt.samples = a.samples;
  double worst = 0.0;
  for (const auto& e : run_gradcheck_suite(opt)) {
    std::printf("%-14s checked %4zu  max rel error %.3e  (%s)\n", e.name.c_str(), e.report.checked,
                e.report.max_rel_error, e.report.worst_param.c_str());
    worst = std::max(worst, e.report.max_rel_error);
  }
  std::printf("max relative error %.3e (tolerance %.1e)\n", worst, a.tolerance);
  return worst <= a.tolerance ? 0 : 1;
}

struct ExportCrfArgs {
  std::string checkpoint;
  std::string out = "crf.csv";
  int samples = 256;
};

/// CSV: input (log2 exposure), r, g, b.
inline int run_export_crf(const ExportCrfArgs& a) {
  const auto [cfg, params] = load_model(read_checkpoint_file(a.checkpoint));
  std::vector<std::vector<CrfSample>> ch;
  for (int c = 0; c < 3; ++c) ch.push_back(crf_export(params, cfg, c, a.samples));
  std::ofstream f(a.out);
  if (!f) throw std::runtime_error("cannot write '" + a.out + "'");
  f << "input,r,g,b\n";
  f.precision(9);
  for (int k = 0; k < a.samples; ++k) {
    f << ch[0][k].input << "," << ch[0][k].value << "," << ch[1][k].value << "," << ch[2][k].value << "\n";
  }
  std::cout << "wrote " << a.samples << " samples to " << a.out << "\n";
  return 0;
}

inline int dispatch(int argc, char** argv) {
  CLI::App app{"Implicit camera model: simulate, train, render and evaluate"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Simulate a multi-focus / multi-exposure dataset");
  g->add_option("--spec", gen.spec, "Generator spec (JSON)")->required()->check(CLI::ExistingFile);
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--seed", gen.seed, "Override the spec's seed");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Fit the model to a dataset");
  t->add_option("--manifest", tr.manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  t->add_option("--config", tr.config, "Training config (JSON)")->check(CLI::ExistingFile);
  t->add_option("--preset", tr.preset, "Base preset: full | desk");
  t->add_option("--out", tr.out, "Checkpoint path");
  t->add_option("--log", tr.log, "JSON-lines training log");
  t->add_option("--resume", tr.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  t->add_option("--seed", tr.seed, "Override the seed");
  t->add_option("--iterations", tr.iterations, "Override the iteration count");
  t->add_option("--threads", tr.threads, "Worker threads");
  t->add_option("--checkpoint-every", tr.checkpoint_every, "Checkpoint cadence in iterations");
  t->add_flag("--quiet", tr.quiet, "No progress output");

  RenderArgs rd;
  auto* r = app.add_subcommand("render", "Render from a checkpoint");
  r->add_option("--checkpoint", rd.checkpoint, "Checkpoint")->required()->check(CLI::ExistingFile);
  r->add_option("--out", rd.out, "Output directory");
  r->add_flag("--sharp-hdr", rd.sharp_hdr, "All-in-focus HDR (PFM) plus a mu-law preview");
  r->add_flag("--sharp-ldr", rd.sharp_ldr, "All-in-focus LDR through the tone mapper");
  r->add_option("--focus-sweep", rd.focus_sweep, "Number of LDR images over the focus index range")
      ->check(CLI::NonNegativeNumber);
  r->add_option("--exposures", rd.exposures, "LDR images at these log2 exposures");
  r->add_option("--atlas", rd.atlas, "Atlas visualization resolution")->check(CLI::NonNegativeNumber);
  r->add_option("--frame", rd.frame, "Frame index (fractional allowed)");
  r->add_option("--focus", rd.focus, "Focus index for --exposures (default: the frame)");
  r->add_option("--ev", rd.ev, "log2 exposure for LDR renders (default: the frame's)");
  r->add_option("--display-scale", rd.display_scale, "HDR preview normalization (default: image max)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Compare a prediction against ground truth");
  e->add_option("--pred", ev.pred, "Prediction (.pfm or .ppm)")->required()->check(CLI::ExistingFile);
  e->add_option("--gt", ev.gt, "Ground truth (.pfm or .ppm)")->required()->check(CLI::ExistingFile);
  e->add_option("--out", ev.out, "Also write the JSON report here");

  GradcheckArgs gc;
  auto* c = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
  c->add_option("--seed", gc.seed, "Seed for parameters and samples");
  c->add_option("--samples", gc.samples, "Entries checked per network")->check(CLI::PositiveNumber);
  c->add_option("--tolerance", gc.tolerance, "Maximum relative error");

  ExportCrfArgs ex;
  auto* x = app.add_subcommand("export-crf", "Write the learned response curves as CSV");
  x->add_option("--checkpoint", ex.checkpoint, "Checkpoint")->required()->check(CLI::ExistingFile);
  x->add_option("--out", ex.out, "CSV path");
  x->add_option("--samples", ex.samples, "Samples over the tone domain")->check(CLI::Range(2, 1 << 20));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (g->parsed()) return run_generate(gen);
    if (t->parsed()) return run_train(tr);
    if (r->parsed()) return run_render(rd);
    if (e->parsed()) return run_eval(ev);
    if (c->parsed()) return run_gradcheck(gc);
    if (x->parsed()) return run_export_crf(ex);
  } catch (const CLI::ParseError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const ConfigError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace ncam::cli
