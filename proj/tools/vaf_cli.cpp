// Command-line front end. Talks to the toolkit exclusively through the C API.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vaf/vaf.h"

namespace fs = std::filesystem;

namespace {

struct CliFailure {
  int exit_code;
};

void check(vaf_status status, const char* what) {
  if (status == VAF_OK) return;
  std::fprintf(stderr, "error: %s: %s (%s)\n", what, vaf_last_error(), vaf_status_name(status));
  throw CliFailure{2};
}

struct ImageHandle {
  vaf_image* p = nullptr;
  ImageHandle() = default;
  explicit ImageHandle(vaf_image* img) : p(img) {}
  ImageHandle(const ImageHandle&) = delete;
  ImageHandle& operator=(const ImageHandle&) = delete;
  ~ImageHandle() { vaf_image_free(p); }
};

struct SampleHandle {
  vaf_sample* p = nullptr;
  ~SampleHandle() { vaf_sample_free(p); }
};

struct ModelHandle {
  vaf_model* p = nullptr;
  ~ModelHandle() { vaf_model_free(p); }
};

void add_optics_options(CLI::App* cmd, vaf_optics& o) {
  cmd->add_option("--na", o.numerical_aperture, "Numerical aperture");
  cmd->add_option("--n", o.refractive_index, "Refractive index of the immersion medium");
  cmd->add_option("--lambda-um", o.wavelength_um, "Wavelength in micrometers");
  cmd->add_option("--pitch-um", o.pixel_pitch_um, "Pixel pitch in micrometers");
  cmd->add_option("--radius", o.kernel_radius_px, "Kernel radius in pixels");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    std::fprintf(stderr, "error: cannot write %s\n", path.string().c_str());
    throw CliFailure{2};
  }
  out << text;
}

std::string image_ext(const std::string& format) {
  if (format == "png") return ".png";
  if (format == "pgm") return ".pgm";
  std::fprintf(stderr, "error: unknown image format '%s' (pgm or png)\n", format.c_str());
  throw CliFailure{2};
}

void print_epoch(int epoch, double train_loss, double validation_loss, void*) {
  std::printf("epoch %3d  train %.6f  validation %.6f\n", epoch, train_loss, validation_loss);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Virtual autofocusing toolkit: PSF simulation, two-shot capture, TSVA training and "
               "evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(vaf_version()));

  vaf_optics optics;
  vaf_optics_default(&optics);
  vaf_phantom_spec spec;
  vaf_phantom_spec_default(&spec);

  // psf-dump
  double psf_defocus = 0.0;
  std::string psf_out = "psf";
  auto* psf_cmd = app.add_subcommand("psf-dump", "Write a defocus PSF kernel as text and 16-bit PGM");
  psf_cmd->add_option("--defocus-um", psf_defocus, "Defocus distance in micrometers")->required();
  psf_cmd->add_option("--out", psf_out, "Output path prefix (writes <prefix>.txt and <prefix>.pgm)");
  add_optics_options(psf_cmd, optics);

  // phantom
  std::string phantom_out;
  auto* phantom_cmd = app.add_subcommand("phantom", "Synthesize a depth-layered phantom sample");
  phantom_cmd->add_option("--seed", spec.seed, "Phantom seed");
  phantom_cmd->add_option("--width", spec.width, "Width in pixels");
  phantom_cmd->add_option("--height", spec.height, "Height in pixels");
  phantom_cmd->add_option("--layers", spec.depth_relief_layers, "Odd number of depth layers");
  phantom_cmd->add_option("--cells-min", spec.cell_count_min, "Minimum cell count");
  phantom_cmd->add_option("--cells-max", spec.cell_count_max, "Maximum cell count");
  phantom_cmd->add_option("--out", phantom_out, "Sample directory")->required();

  // capture
  std::string cap_sample, cap_out, cap_format = "pgm";
  double cap_offset = 0.0, cap_dd = 0.5, cap_noise = 0.0;
  std::uint64_t cap_seed = 0;
  auto* cap_cmd = app.add_subcommand("capture", "Render a two-shot pair and its in-focus ground truth");
  cap_cmd->add_option("--sample", cap_sample, "Sample directory")->required();
  cap_cmd->add_option("--offset-um", cap_offset, "Absolute focal offset in micrometers");
  cap_cmd->add_option("--dd-um", cap_dd, "Half separation of the two shots in micrometers");
  cap_cmd->add_option("--noise", cap_noise, "Sensor noise standard deviation");
  cap_cmd->add_option("--seed", cap_seed, "Noise seed");
  cap_cmd->add_option("--format", cap_format, "pgm or png (8-bit)");
  cap_cmd->add_option("--out", cap_out, "Output directory")->required();
  add_optics_options(cap_cmd, optics);

  // zstack
  std::string zs_sample, zs_out;
  double zs_min = -2.0, zs_max = 2.0, zs_step = 0.5, zs_noise = 0.0;
  std::uint64_t zs_seed = 0;
  auto* zs_cmd = app.add_subcommand("zstack", "Render a z-stack of a sample");
  zs_cmd->add_option("--sample", zs_sample, "Sample directory")->required();
  zs_cmd->add_option("--min-um", zs_min, "First offset");
  zs_cmd->add_option("--max-um", zs_max, "Last offset");
  zs_cmd->add_option("--step-um", zs_step, "Offset step");
  zs_cmd->add_option("--noise", zs_noise, "Sensor noise standard deviation");
  zs_cmd->add_option("--seed", zs_seed, "Noise seed");
  zs_cmd->add_option("--out", zs_out, "Stack directory")->required();
  add_optics_options(zs_cmd, optics);

  // focus-score / find-focus
  std::vector<std::string> fs_images;
  auto* fs_cmd = app.add_subcommand("focus-score", "Print the Brenner score of each image");
  fs_cmd->add_option("images", fs_images, "Image files")->required();
  std::string ff_stack;
  auto* ff_cmd = app.add_subcommand("find-focus", "Print the sharpest offset of a z-stack");
  ff_cmd->add_option("--stack", ff_stack, "Stack directory written by zstack")->required();

  // make-dataset
  vaf_dataset_options ds;
  vaf_dataset_options_default(&ds);
  std::string ds_out;
  auto* ds_cmd = app.add_subcommand("make-dataset", "Build a patch dataset from synthetic phantoms");
  ds_cmd->add_option("--phantoms", ds.phantom_count, "Number of phantoms");
  ds_cmd->add_option("--first-phantom-seed", ds.first_phantom_seed, "Seed of the first phantom");
  ds_cmd->add_option("--dd-um", ds.delta_d_um, "Half separation of the two shots");
  ds_cmd->add_option("--patch", ds.patch_px, "Patch side in pixels");
  ds_cmd->add_option("--noise", ds.noise_sigma, "Sensor noise standard deviation");
  ds_cmd->add_option("--seed", ds.seed, "Global dataset seed");
  ds_cmd->add_option("--split-seed", ds.split_seed, "Train/validation split seed");
  ds_cmd->add_option("--train-fraction", ds.train_fraction, "Training fraction");
  ds_cmd->add_option("--out", ds_out, "Dataset directory")->required();

  // train
  vaf_train_options tr;
  vaf_train_options_default(&tr);
  std::string tr_dataset, tr_out;
  bool tr_single = false, tr_quiet = false;
  auto* tr_cmd = app.add_subcommand("train", "Train a TSVA model");
  tr_cmd->add_option("--dataset", tr_dataset, "Dataset directory")->required();
  tr_cmd->add_option("--epochs", tr.epochs, "Epochs");
  tr_cmd->add_option("--batch", tr.batch_size, "Mini-batch size");
  tr_cmd->add_option("--seed", tr.seed, "Initialization and shuffling seed");
  tr_cmd->add_option("--lr", tr.learning_rate, "ADAM learning rate");
  tr_cmd->add_option("--depth", tr.model.depth_levels, "Number of downsampling levels");
  tr_cmd->add_option("--base", tr.model.base_channels, "Channels at the first level");
  tr_cmd->add_flag("--single-input", tr_single, "Feed y1 to both paths (ablation)");
  tr_cmd->add_flag("--quiet", tr_quiet, "Do not print per-epoch losses");
  tr_cmd->add_option("--out", tr_out, "Checkpoint path")->required();

  // infer
  std::string in_ckpt, in_y1, in_y2, in_out;
  auto* in_cmd = app.add_subcommand("infer", "Recover the in-focus image from a two-shot pair");
  in_cmd->add_option("--ckpt", in_ckpt, "Checkpoint")->required();
  in_cmd->add_option("--y1", in_y1, "First shot")->required();
  in_cmd->add_option("--y2", in_y2, "Second shot")->required();
  in_cmd->add_option("--out", in_out, "Output image (.pgm or .png)")->required();

  // eval
  std::string ev_dataset, ev_ckpt, ev_ablation, ev_out;
  std::vector<double> ev_sweep{0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
  bool ev_assert = false;
  vaf_eval_options eo;
  vaf_eval_options_default(&eo);
  auto* ev_cmd = app.add_subcommand("eval", "Evaluate a checkpoint over a delta D sweep");
  ev_cmd->add_option("--dataset", ev_dataset, "Dataset directory")->required();
  ev_cmd->add_option("--ckpt", ev_ckpt, "Checkpoint")->required();
  ev_cmd->add_option("--ablation-ckpt", ev_ablation, "Single-input ablation checkpoint");
  ev_cmd->add_option("--dd-sweep", ev_sweep, "Delta D values in micrometers");
  ev_cmd->add_option("--cell-phantoms", eo.cell_count_phantoms, "Phantoms in the cell-count check");
  ev_cmd->add_option("--maps-per-group", eo.error_maps_per_group, "Error maps written per delta D");
  ev_cmd->add_flag("--assert", ev_assert, "Exit nonzero when an acceptance threshold fails");
  ev_cmd->add_option("--out", ev_out, "Report directory")->required();

  // scan-sim
  vaf_scan_options so;
  vaf_scan_options_default(&so);
  std::string sc_ckpt, sc_out = "scan_report.json";
  auto* sc_cmd = app.add_subcommand("scan-sim", "Simulate a two-shot whole-slide scan");
  sc_cmd->add_option("--tiles", so.tiles, "Number of tiles")->required();
  sc_cmd->add_option("--dd-um", so.delta_d_um, "Half separation of the two shots");
  sc_cmd->add_option("--ckpt", sc_ckpt, "Checkpoint")->required();
  sc_cmd->add_option("--noise", so.noise_sigma, "Sensor noise standard deviation");
  sc_cmd->add_option("--seed", so.seed, "Scan seed");
  sc_cmd->add_option("--out", sc_out, "Report path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*psf_cmd) {
      ImageHandle k;
      check(vaf_psf_kernel(psf_defocus, &optics, &k.p), "psf-dump");
      check(vaf_image_save_text(k.p, (psf_out + ".txt").c_str()), "psf-dump");
      // The PGM is scaled so the peak uses the full 16-bit range.
      const int w = vaf_image_width(k.p);
      const int h = vaf_image_height(k.p);
      const double* d = vaf_image_data(k.p);
      double peak = 0.0, sum = 0.0;
      for (int i = 0; i < w * h; ++i) {
        peak = std::max(peak, d[i]);
        sum += d[i];
      }
      std::vector<double> scaled(d, d + w * h);
      for (double& v : scaled) v = peak > 0 ? v / peak : 0.0;
      ImageHandle view;
      check(vaf_image_create(w, h, scaled.data(), &view.p), "psf-dump");
      check(vaf_image_save(view.p, (psf_out + ".pgm").c_str(), 16), "psf-dump");
      std::printf("center %.10g\nsum %.10g\n", d[(h / 2) * w + w / 2], sum);
    } else if (*phantom_cmd) {
      SampleHandle s;
      check(vaf_phantom_synth(&spec, &s.p), "phantom");
      check(vaf_sample_save(s.p, phantom_out.c_str()), "phantom");
      std::printf("cells %d\n", vaf_sample_true_cell_count(s.p));
    } else if (*cap_cmd) {
      SampleHandle s;
      check(vaf_sample_load(cap_sample.c_str(), &s.p), "capture");
      vaf_capture c{};
      check(vaf_capture_pair(s.p, cap_offset, cap_dd, cap_noise, cap_seed, &optics, &c), "capture");
      ImageHandle y1(c.y1), y2(c.y2), gt(c.ground_truth);
      fs::create_directories(cap_out);
      const std::string ext = image_ext(cap_format);
      const fs::path dir(cap_out);
      check(vaf_image_save(y1.p, (dir / ("y1" + ext)).c_str(), 8), "capture");
      check(vaf_image_save(y2.p, (dir / ("y2" + ext)).c_str(), 8), "capture");
      check(vaf_image_save(gt.p, (dir / ("gt" + ext)).c_str(), 8), "capture");
      const nlohmann::json side{{"absolute_offset_um", cap_offset},
                                {"delta_d_um", cap_dd},
                                {"y1_offset_um", c.y1_is_minus_side ? cap_offset - cap_dd
                                                                     : cap_offset + cap_dd},
                                {"y2_offset_um", c.y1_is_minus_side ? cap_offset + cap_dd
                                                                     : cap_offset - cap_dd},
                                {"noise_sigma", cap_noise},
                                {"seed", cap_seed},
                                {"brenner_y1", c.brenner_y1},
                                {"brenner_y2", c.brenner_y2},
                                {"y1_is_minus_side", c.y1_is_minus_side != 0}};
      write_text(dir / "capture.json", side.dump(2) + "\n");
      std::printf("brenner y1 %.10g\nbrenner y2 %.10g\n", c.brenner_y1, c.brenner_y2);
    } else if (*zs_cmd) {
      SampleHandle s;
      check(vaf_sample_load(zs_sample.c_str(), &s.p), "zstack");
      check(vaf_zstack_write(s.p, zs_min, zs_max, zs_step, zs_noise, zs_seed, &optics, zs_out.c_str()),
            "zstack");
    } else if (*fs_cmd) {
      for (const auto& path : fs_images) {
        ImageHandle img;
        check(vaf_image_load(path.c_str(), &img.p), path.c_str());
        double score = 0.0;
        check(vaf_brenner(img.p, &score), path.c_str());
        std::printf("%s %.10g\n", path.c_str(), score);
      }
    } else if (*ff_cmd) {
      double offset = 0.0;
      check(vaf_zstack_find_focus(ff_stack.c_str(), &offset), "find-focus");
      std::printf("%g\n", offset);
    } else if (*ds_cmd) {
      size_t n_train = 0, n_val = 0;
      check(vaf_dataset_build(&ds, &spec, &optics, ds_out.c_str(), &n_train, &n_val), "make-dataset");
      std::printf("train %zu\nvalidation %zu\n", n_train, n_val);
    } else if (*tr_cmd) {
      tr.model.single_input = tr_single ? 1 : 0;
      if (!tr_quiet) tr.on_epoch = print_epoch;
      double best = 0.0;
      check(vaf_train(tr_dataset.c_str(), &tr, tr_out.c_str(), &best), "train");
      std::printf("best validation loss %.6f\n", best);
    } else if (*in_cmd) {
      ModelHandle m;
      check(vaf_model_load(in_ckpt.c_str(), &m.p), "infer");
      ImageHandle a, b, out;
      check(vaf_image_load(in_y1.c_str(), &a.p), "infer");
      check(vaf_image_load(in_y2.c_str(), &b.p), "infer");
      check(vaf_infer(m.p, a.p, b.p, &out.p), "infer");
      check(vaf_image_save(out.p, in_out.c_str(), 8), "infer");
    } else if (*ev_cmd) {
      ModelHandle m, abl;
      check(vaf_model_load(ev_ckpt.c_str(), &m.p), "eval");
      if (!ev_ablation.empty()) check(vaf_model_load(ev_ablation.c_str(), &abl.p), "eval");
      eo.delta_d_sweep = ev_sweep.data();
      eo.delta_d_count = ev_sweep.size();
      vaf_eval_summary sum{};
      check(vaf_evaluate(ev_dataset.c_str(), m.p, abl.p, &eo, ev_out.c_str(), &sum), "eval");
      std::printf("rows %zu\n", sum.rows);
      std::printf("mean psnr y1 %.4f dB\nmean psnr output %.4f dB\n", sum.mean_psnr_y1,
                  sum.mean_psnr_output);
      if (abl.p) std::printf("mean psnr ablation %.4f dB\n", sum.mean_psnr_ablation);
      std::printf("mean psnr output smallest dd %.4f dB, largest dd %.4f dB\n",
                  sum.mean_psnr_output_smallest_dd, sum.mean_psnr_output_largest_dd);
      if (!std::isnan(sum.mean_abs_count_error)) {
        std::printf("mean abs cell-count error %.4f\n", sum.mean_abs_count_error);
      }
      if (ev_assert) {
        bool ok = sum.mean_psnr_output - sum.mean_psnr_y1 >= 3.0;
        if (abl.p) ok = ok && sum.mean_psnr_output - sum.mean_psnr_ablation >= 0.5;
        if (ev_sweep.size() > 1) {
          ok = ok && sum.mean_psnr_output_smallest_dd > sum.mean_psnr_output_largest_dd;
        }
        if (!std::isnan(sum.mean_abs_count_error)) ok = ok && sum.mean_abs_count_error <= 1.0;
        std::printf("thresholds %s\n", ok ? "PASS" : "FAIL");
        if (!ok) return 1;
      }
    } else if (*sc_cmd) {
      ModelHandle m;
      check(vaf_model_load(sc_ckpt.c_str(), &m.p), "scan-sim");
      vaf_scan_summary sum{};
      check(vaf_scan_simulate(m.p, &so, &spec, &optics, sc_out.c_str(), &sum), "scan-sim");
      std::printf("initial focal plane %g um\ntwo-shot shots %lld\nconventional shots %lld\n",
                  sum.initial_focal_plane_um, sum.two_shot_shots, sum.conventional_shots);
    }
  } catch (const CliFailure& f) {
    return f.exit_code;
  }
  return 0;
}
