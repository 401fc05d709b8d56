// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
// Usage: vaf_acceptance [--only N[,N...]] [--artifacts DIR]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "vaf/checkpoint.hpp"
#include "vaf/dataset_io.hpp"
#include "vaf/focus.hpp"
#include "vaf/imaging.hpp"
#include "vaf/nncore.hpp"
#include "vaf/optics.hpp"
#include "vaf/phantom.hpp"
#include "vaf/pipeline.hpp"
#include "vaf/rng.hpp"
#include "vaf/tsva.hpp"

namespace fs = std::filesystem;
using namespace vaf;
using namespace vaf::nn;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

Image random_image(int w, int h, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> d(0.0, 1.0);
  Image img(w, h);
  for (double& v : img.pixels()) v = d(gen);
  return img;
}

Tensor4 random_tensor(Shape4 s, std::mt19937_64& gen) {
  std::normal_distribution<double> d(0.0, 1.0);
  Tensor4 t(s);
  for (double& v : t.values()) v = d(gen);
  return t;
}

double dot(const Tensor4& a, const Tensor4& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.values()[i] * b.values()[i];
  return acc;
}

double mean_of(const std::vector<EvalRow>& rows, double dd, double EvalRow::*field) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (std::abs(r.delta_d_um - dd) > 1e-9) continue;
    sum += r.*field;
    ++n;
  }
  return n ? sum / static_cast<double>(n) : std::nan("");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
}

// ---- 1. PSF oracle equivalence ---------------------------------------------

Outcome psf_oracle() {
  const OpticalConfig cfg;
  std::mt19937_64 gen(101);
  std::uniform_real_distribution<double> r_dist(0.0, 2.0);
  std::uniform_real_distribution<double> d_dist(-10.0, 10.0);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const double r = r_dist(gen);
    const double d = d_dist(gen);
    const double ref = oracle::psf_simpson(r, d, cfg.numerical_aperture, cfg.refractive_index,
                                           cfg.wavelength_um);
    worst = std::max(worst, std::abs(psf_value(r, d, cfg) - ref) / ref);
  }
  double worst_sym = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double r = r_dist(gen);
    const double d = d_dist(gen);
    const double a = psf_value(r, d, cfg);
    worst_sym = std::max(worst_sym, std::abs(a - psf_value(r, -d, cfg)) / a);
  }
  return {worst <= 1e-8 && worst_sym <= 1e-12,
          fmt("max rel err vs Simpson %.2e (<= 1e-8), symmetry %.2e (<= 1e-12)", worst, worst_sym)};
}

// ---- 2. Convolution oracle equivalence -------------------------------------

Outcome convolution_oracle() {
  std::mt19937_64 gen(202);
  std::uniform_int_distribution<int> side(1, 16);
  std::uniform_int_distribution<int> half(0, 2);
  double worst = 0.0;
  int cases = 0;
  while (cases < 50) {
    const int w = side(gen);
    const int h = side(gen);
    const int k = 2 * half(gen) + 1;
    if (k > w || k > h) continue;
    const Image img = random_image(w, h, gen);
    const Image kernel = random_image(k, k, gen);
    worst = std::max(worst, oracle::max_abs_diff(convolve2d(img, kernel),
                                                 oracle::convolve_loops(img, kernel)));
    ++cases;
  }
  return {worst <= 1e-12, fmt("50 cases, max abs diff %.2e (<= 1e-12)", worst)};
}

// ---- 3. Gradient checks ------------------------------------------------------

Outcome gradient_checks() {
  std::mt19937_64 gen(303);
  std::vector<std::pair<std::string, double>> layers;

  {
    Tensor4 x = random_tensor(Shape4{2, 3, 5, 4}, gen);
    Tensor4 w = random_tensor(Shape4{2, 3, 3, 3}, gen);
    Tensor4 b = random_tensor(Shape4{1, 2, 1, 1}, gen);
    const Tensor4 r = random_tensor(Shape4{2, 2, 5, 4}, gen);
    Tensor4 dw(w.shape()), db(b.shape());
    const Tensor4 dx = conv3x3_backward(x, w, r, dw, db);
    layers.emplace_back(
        "conv3x3", grad_check([&] { return GradCheckEval{dot(conv3x3_forward(x, w, b), r), 0}; },
                              {{"x", &x, &dx}, {"w", &w, &dw}, {"b", &b, &db}})
                       .max_relative_error);
  }
  {
    Tensor4 x = random_tensor(Shape4{2, 3, 4, 4}, gen);
    Tensor4 w = random_tensor(Shape4{2, 3, 1, 1}, gen);
    Tensor4 b = random_tensor(Shape4{1, 2, 1, 1}, gen);
    const Tensor4 r = random_tensor(Shape4{2, 2, 4, 4}, gen);
    Tensor4 dw(w.shape()), db(b.shape());
    const Tensor4 dx = conv1x1_backward(x, w, r, dw, db);
    layers.emplace_back(
        "conv1x1", grad_check([&] { return GradCheckEval{dot(conv1x1_forward(x, w, b), r), 0}; },
                              {{"x", &x, &dx}, {"w", &w, &dw}, {"b", &b, &db}})
                       .max_relative_error);
  }
  {
    Tensor4 x = random_tensor(Shape4{2, 2, 4, 4}, gen);
    const Tensor4 r = random_tensor(x.shape(), gen);
    const Tensor4 dx = relu_backward(relu_forward(x), r);
    layers.emplace_back("relu", grad_check(
                                    [&] {
                                      const Tensor4 out = relu_forward(x);
                                      return GradCheckEval{dot(out, r), relu_region_hash(0, out)};
                                    },
                                    {{"x", &x, &dx}})
                                    .max_relative_error);
  }
  {
    Tensor4 x = random_tensor(Shape4{2, 3, 6, 4}, gen);
    PoolIndices idx;
    const Tensor4 y = maxpool2x2_forward(x, idx);
    const Tensor4 r = random_tensor(y.shape(), gen);
    const Tensor4 dx = maxpool2x2_backward(r, idx, x.shape());
    layers.emplace_back("maxpool2x2", grad_check(
                                          [&] {
                                            PoolIndices i2;
                                            const Tensor4 out = maxpool2x2_forward(x, i2);
                                            return GradCheckEval{dot(out, r), pool_region_hash(0, i2)};
                                          },
                                          {{"x", &x, &dx}})
                                          .max_relative_error);
  }
  {
    Tensor4 x = random_tensor(Shape4{2, 3, 3, 2}, gen);
    Tensor4 w = random_tensor(Shape4{3, 2, 2, 2}, gen);
    Tensor4 b = random_tensor(Shape4{1, 2, 1, 1}, gen);
    const Tensor4 r = random_tensor(Shape4{2, 2, 6, 4}, gen);
    Tensor4 dw(w.shape()), db(b.shape());
    const Tensor4 dx = upconv2x2_backward(x, w, r, dw, db);
    layers.emplace_back(
        "upconv2x2", grad_check([&] { return GradCheckEval{dot(upconv2x2_forward(x, w, b), r), 0}; },
                                {{"x", &x, &dx}, {"w", &w, &dw}, {"b", &b, &db}})
                         .max_relative_error);
  }
  for (Mode mode : {Mode::kTrain, Mode::kEval}) {
    Tensor4 x = random_tensor(Shape4{3, 2, 3, 3}, gen);
    Tensor4 gamma = random_tensor(Shape4{1, 2, 1, 1}, gen);
    Tensor4 beta = random_tensor(Shape4{1, 2, 1, 1}, gen);
    const Tensor4 r = random_tensor(x.shape(), gen);
    Tensor4 rm(gamma.shape(), 0.1), rv(gamma.shape(), 0.7);
    BatchNormCache cache;
    batchnorm_forward(x, gamma, beta, mode, rm, rv, cache);
    Tensor4 dg(gamma.shape()), dbeta(beta.shape());
    const Tensor4 dx = batchnorm_backward(x, gamma, r, cache, dg, dbeta);
    layers.emplace_back(mode == Mode::kTrain ? "batchnorm(train)" : "batchnorm(eval)",
                        grad_check(
                            [&] {
                              Tensor4 m(gamma.shape(), 0.1), v(gamma.shape(), 0.7);
                              BatchNormCache c;
                              return GradCheckEval{
                                  dot(batchnorm_forward(x, gamma, beta, mode, m, v, c), r), 0};
                            },
                            {{"x", &x, &dx}, {"gamma", &gamma, &dg}, {"beta", &beta, &dbeta}})
                            .max_relative_error);
  }
  {
    Tensor4 a = random_tensor(Shape4{2, 1, 3, 3}, gen);
    Tensor4 b = random_tensor(Shape4{2, 2, 3, 3}, gen);
    const Tensor4 r = random_tensor(Shape4{2, 3, 3, 3}, gen);
    const auto parts = split_channels(r, {1, 2});
    layers.emplace_back("concat", grad_check(
                                      [&] { return GradCheckEval{dot(concat_channels({&a, &b}), r), 0}; },
                                      {{"a", &a, &parts[0]}, {"b", &b, &parts[1]}})
                                      .max_relative_error);
  }
  {
    Tensor4 p = random_tensor(Shape4{3, 1, 4, 4}, gen);
    const Tensor4 t = random_tensor(p.shape(), gen);
    const Tensor4 g = mse_loss(p, t).grad;
    layers.emplace_back("mse", grad_check([&] { return GradCheckEval{mse_loss(p, t).value, 0}; },
                                          {{"p", &p, &g}})
                                   .max_relative_error);
  }

  double layer_worst = 0.0;
  std::string worst_name;
  for (const auto& [name, err] : layers) {
    if (err >= layer_worst) {
      layer_worst = err;
      worst_name = name;
    }
  }

  TsvaConfig cfg;
  cfg.depth_levels = 2;
  cfg.base_channels = 4;
  TsvaModel model = TsvaModel::build(cfg, 5);
  std::normal_distribution<double> d(0.0, 0.5);
  for (double& v : model.params().at("head.weight").value.values()) v = d(gen);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor4 y1(Shape4{2, 1, 16, 16}), y2(y1.shape()), target(y1.shape());
  for (Tensor4* t : {&y1, &y2, &target}) {
    for (double& v : t->values()) v = u(gen);
  }
  model.params().zero_grad();
  TsvaTrace trace;
  const Tensor4 out = model.forward(y1, y2, Mode::kTrain, trace);
  model.backward(trace, mse_loss(out, target).grad);
  std::vector<GradCheckTarget> targets;
  double largest = 0.0;
  for (auto& [name, p] : model.params()) {
    targets.push_back({name, &p.value, &p.grad});
    for (double g : p.grad.values()) largest = std::max(largest, std::abs(g));
  }
  const GradCheckReport net = grad_check(
      [&] {
        TsvaTrace t;
        const Tensor4 o = model.forward(y1, y2, Mode::kTrain, t);
        return GradCheckEval{mse_loss(o, target).value, model.region_signature(t)};
      },
      targets, 1e-5, 1e-4 * largest);

  const bool pass = layer_worst < 1e-5 && net.max_relative_error < 1e-4 && net.checked > net.skipped;
  return {pass, fmt("worst layer %.2e (< 1e-5), full network %.2e (< 1e-4) over %.0f coordinates",
                    layer_worst, net.max_relative_error, static_cast<double>(net.checked)) +
                    " [worst layer: " + worst_name + "]"};
}

// ---- 4. Residual identity ----------------------------------------------------

Outcome residual_identity() {
  TsvaModel model = TsvaModel::build(TsvaConfig{}, 404);
  model.zero_projection();
  std::mt19937_64 gen(404);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int exact = 0;
  for (int i = 0; i < 10; ++i) {
    Tensor4 y1(Shape4{1, 1, 64, 64}), y2(y1.shape());
    for (double& v : y1.values()) v = u(gen);
    for (double& v : y2.values()) v = u(gen);
    if (model.forward(y1, y2, Mode::kEval) == y1) ++exact;
  }
  return {exact == 10, fmt("%.0f of 10 random pairs reproduce y1 bit for bit", exact)};
}

// ---- 5. Focal search ---------------------------------------------------------

Outcome focal_search() {
  const OpticalConfig cfg;
  KernelBank bank(cfg, 0.5);
  PhantomSpec base;
  base.depth_relief_layers = 1;
  const auto specs = phantom_series(base, 50, 5000);
  int hits = 0;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const Phantom p = synth_phantom(specs[i]);
    const ZStack stack = generate_zstack(p.sample, -2.0, 2.0, 0.5, bank,
                                         NoiseSpec{0.005, derive_seed(505, i)});
    if (find_focus(stack) == 0.0) ++hits;
  }
  return {hits >= 48, fmt("%.0f of 50 stacks focus at 0 um (need >= 95%%)", hits)};
}

// ---- 6, 7, 8. Desk-scale training --------------------------------------------

struct DeskRun {
  DatasetSplit dataset;
  std::optional<TsvaModel> model;
  std::optional<TsvaModel> ablation;
  EvalReport report;
};

DatasetSplit default_dataset() {
  return build_dataset(phantom_series(PhantomSpec{}, 37, 1000), DatasetOptions{}, OpticalConfig{});
}

TsvaModel train_default(const DatasetSplit& ds, bool single_input, const char* label,
                        TrainingReport* out_report) {
  TrainOptions opt;
  opt.on_epoch = [label](int e, double tr, double va) {
    std::printf("  [%s] epoch %2d train %.6f validation %.6f\n", label, e, tr, va);
    std::fflush(stdout);
  };
  TsvaConfig cfg;
  cfg.single_input = single_input;
  TrainResult r = train(TsvaModel::build(cfg, opt.seed), ds, opt);
  if (out_report) *out_report = r.report;
  return std::move(r.best);
}

Outcome fusion_benefit(DeskRun& run, const fs::path& artifacts) {
  TrainingReport main_report;
  TrainingReport ablation_report;
  run.model = train_default(run.dataset, false, "two-shot", &main_report);
  run.ablation = train_default(run.dataset, true, "single-input", &ablation_report);
  save_checkpoint(Checkpoint{*run.model, std::nullopt, {}}, artifacts / "two_shot.ckpt");
  save_checkpoint(Checkpoint{*run.ablation, std::nullopt, {}}, artifacts / "single_input.ckpt");

  EvalOptions eo;
  eo.error_map_dir = artifacts / "error_maps";
  run.report = evaluate(run.dataset, *run.model, &*run.ablation, {0.5, 1.0, 1.5, 2.0, 2.5, 3.0}, eo);
  write_text(artifacts / "report.csv", report_csv(run.report));

  const double dd = run.dataset.options.delta_d_um;
  const double y1 = mean_of(run.report.rows, dd, &EvalRow::psnr_y1);
  const double out = mean_of(run.report.rows, dd, &EvalRow::psnr_output);
  double abl_sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : run.report.rows) {
    if (std::abs(r.delta_d_um - dd) > 1e-9) continue;
    abl_sum += *r.psnr_ablation;
    ++n;
  }
  const double abl = abl_sum / static_cast<double>(n);
  return {out - y1 >= 3.0 && out - abl >= 0.5,
          fmt("validation mean PSNR: output %.2f dB, y1 %.2f dB (+%.2f, need >= 3), "
              "single-input %.2f dB",
              out, y1, out - y1, abl) +
              fmt(" (+%.2f, need >= 0.5)", out - abl)};
}

Outcome delta_d_trend(const DeskRun& run) {
  const double lo = mean_of(run.report.rows, 0.5, &EvalRow::psnr_output);
  const double hi = mean_of(run.report.rows, 3.0, &EvalRow::psnr_output);
  return {lo > hi, fmt("mean output PSNR %.2f dB at 0.5 um vs %.2f dB at 3.0 um", lo, hi)};
}

Outcome cell_count_check(DeskRun& run, const fs::path& artifacts) {
  const DatasetOptions opt = run.dataset.options;
  std::vector<PhantomSource> sources;
  const auto specs = phantom_series(PhantomSpec{}, 20, 8000);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    PhantomSource s;
    s.spec = specs[i];
    s.absolute_offset_um = sample_absolute_offset(derive_seed(808, 2 * i));
    s.noise_seed = derive_seed(808, 2 * i + 1);
    sources.push_back(s);
  }
  const auto rows = cell_count_fidelity(sources, opt.delta_d_um, opt.noise_sigma,
                                        run.dataset.optics, *run.model);
  double err = 0.0;
  std::ostringstream csv;
  csv << "phantom,true_count,count_ground_truth,count_output,count_y1\n";
  for (const auto& r : rows) {
    err += std::abs(r.count_output - r.count_ground_truth);
    csv << r.phantom << "," << r.true_count << "," << r.count_ground_truth << ","
        << r.count_output << "," << r.count_y1 << "\n";
  }
  write_text(artifacts / "cell_counts.csv", csv.str());
  err /= static_cast<double>(rows.size());
  return {err <= 1.0, fmt("mean |count(output) - count(gt)| = %.2f over 20 held-out phantoms (<= 1)", err)};
}

// ---- 9. Shot accounting --------------------------------------------------------

Outcome shot_accounting() {
  PhantomSpec spec;
  spec.width = 64;
  spec.height = 64;
  ScanPlan plan;
  for (const auto& s : phantom_series(spec, 10, 9000)) plan.tiles.push_back({synth_phantom(s).sample, 0.0});
  TsvaConfig cfg;
  cfg.depth_levels = 2;
  cfg.base_channels = 4;
  TsvaModel model = TsvaModel::build(cfg, 9);
  const EvalReport r = scan_simulate(plan, 0.5, OpticalConfig{}, model);
  bool pass = r.shots && r.shots->two_shot == 59 && r.shots->conventional == 210;
  for (int t : {1, 2, 100}) {
    const ShotCounts s = shot_counts(t);
    pass = pass && s.two_shot == 41 + 2LL * (t - 1) && s.conventional == 21LL * t;
  }
  return {pass, fmt("T=10: %.0f two-shot vs %.0f conventional; closed form holds for T = 1, 2, 100",
                    r.shots ? static_cast<double>(r.shots->two_shot) : -1.0,
                    r.shots ? static_cast<double>(r.shots->conventional) : -1.0)};
}

// ---- 10. Determinism -------------------------------------------------------------

struct PipelineBytes {
  std::string checkpoint;
  std::string csv;
};

PipelineBytes full_pipeline(const fs::path& dir) {
  fs::remove_all(dir);
  PhantomSpec spec;
  spec.width = 128;
  spec.height = 128;
  save_dataset(build_dataset(phantom_series(spec, 4, 1000), DatasetOptions{}, OpticalConfig{}), dir / "dataset");
  const DatasetSplit ds = load_dataset(dir / "dataset");
  TrainOptions opt;
  opt.epochs = 3;
  opt.batch_size = 8;
  TrainResult r = train(TsvaModel::build(TsvaConfig{}, opt.seed), ds, opt);
  const Checkpoint ck{std::move(r.best), std::move(r.optimizer), {}};
  save_checkpoint(ck, dir / "model.ckpt");
  Checkpoint loaded = load_checkpoint(dir / "model.ckpt");
  const EvalReport report = evaluate(ds, loaded.model, nullptr, {0.5, 3.0});
  return {serialize_checkpoint(loaded), report_csv(report)};
}

Outcome determinism(const fs::path& artifacts) {
  const PipelineBytes a = full_pipeline(artifacts / "determinism_a");
  const PipelineBytes b = full_pipeline(artifacts / "determinism_b");
  const bool same_ckpt = a.checkpoint == b.checkpoint;
  const bool same_csv = a.csv == b.csv;
  return {same_ckpt && same_csv,
          std::string("two runs of build, train (4 phantoms, 3 epochs) and evaluate: checkpoints ") +
              (same_ckpt ? "identical" : "differ") + ", report CSVs " +
              (same_csv ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  fs::path artifacts = fs::current_path() / "acceptance_artifacts";
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    } else if (arg == "--artifacts" && i + 1 < argc) {
      artifacts = argv[++i];
    } else {
      std::fprintf(stderr, "usage: %s [--only N[,N...]] [--artifacts DIR]\n", argv[0]);
      return 2;
    }
  }
  fs::create_directories(artifacts);
  auto wanted = [&](int n) { return only.empty() || only.count(n) > 0; };

  DeskRun desk;
  const bool desk_needed = wanted(6) || wanted(7) || wanted(8);
  bool desk_ready = false;

  const std::vector<std::pair<int, std::string>> names = {
      {1, "PSF oracle equivalence"},  {2, "convolution oracle equivalence"},
      {3, "gradient checks"},         {4, "residual identity"},
      {5, "focal search"},            {6, "desk-scale fusion benefit"},
      {7, "delta D trend"},           {8, "cell-count fidelity"},
      {9, "shot accounting"},         {10, "determinism"}};

  int failures = 0;
  for (const auto& [n, name] : names) {
    if (!wanted(n)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      switch (n) {
        case 1: o = psf_oracle(); break;
        case 2: o = convolution_oracle(); break;
        case 3: o = gradient_checks(); break;
        case 4: o = residual_identity(); break;
        case 5: o = focal_search(); break;
        case 6:
        case 7:
        case 8:
          if (!desk_ready && desk_needed) {
            desk.dataset = default_dataset();
            const Outcome fusion = fusion_benefit(desk, artifacts);
            desk_ready = true;
            if (n == 6) {
              o = fusion;
              break;
            }
          }
          o = n == 7 ? delta_d_trend(desk) : cell_count_check(desk, artifacts);
          break;
        case 9: o = shot_accounting(); break;
        case 10: o = determinism(artifacts); break;
      }
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s [%d] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", n, name.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
