#include "vaf/vaf.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "vaf/checkpoint.hpp"
#include "vaf/dataset_io.hpp"
#include "vaf/error.hpp"
#include "vaf/focus.hpp"
#include "vaf/image_io.hpp"
#include "vaf/imaging.hpp"
#include "vaf/optics.hpp"
#include "vaf/phantom.hpp"
#include "vaf/pipeline.hpp"
#include "vaf/rng.hpp"
#include "vaf/tsva.hpp"

struct vaf_image {
  vaf::Image image;
};

struct vaf_sample {
  vaf::DepthLayeredSample sample;
  int true_cell_count = -1;
};

struct vaf_model {
  vaf::Checkpoint checkpoint;
};

namespace {

thread_local std::string g_last_error;

vaf_status fail(vaf_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <typename F>
vaf_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return VAF_OK;
  } catch (const vaf::Error& e) {
    return fail(static_cast<vaf_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(VAF_ERR_INTERNAL, "out of memory");
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(VAF_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(VAF_ERR_INTERNAL, e.what());
  }
}

void require_arg(bool ok, const char* what) {
  if (!ok) throw vaf::Error(vaf::ErrorCode::kArgument, what);
}

vaf::OpticalConfig to_optics(const vaf_optics* o) {
  vaf::OpticalConfig c;
  if (!o) return c;
  c.numerical_aperture = o->numerical_aperture;
  c.refractive_index = o->refractive_index;
  c.wavelength_um = o->wavelength_um;
  c.pixel_pitch_um = o->pixel_pitch_um;
  c.kernel_radius_px = o->kernel_radius_px;
  c.quadrature_nodes = o->quadrature_nodes;
  c.validate();
  return c;
}

vaf::PhantomSpec to_spec(const vaf_phantom_spec* s) {
  vaf::PhantomSpec p;
  if (!s) return p;
  p.seed = s->seed;
  p.width = s->width;
  p.height = s->height;
  p.cell_count_range = {s->cell_count_min, s->cell_count_max};
  p.cell_radius_px_range = {s->cell_radius_min_px, s->cell_radius_max_px};
  p.depth_relief_layers = s->depth_relief_layers;
  p.background_level = s->background_level;
  p.cell_contrast_range = {s->cell_contrast_min, s->cell_contrast_max};
  p.min_cell_gap_px = s->min_cell_gap_px;
  p.validate();
  return p;
}

vaf::TsvaConfig to_config(const vaf_model_config& m) {
  vaf::TsvaConfig c;
  c.depth_levels = m.depth_levels;
  c.base_channels = m.base_channels;
  c.input_channels = m.input_channels;
  c.single_input = m.single_input != 0;
  c.validate();
  return c;
}

vaf_image* wrap(vaf::Image img) { return new vaf_image{std::move(img)}; }

std::vector<double> eval_sweep(const vaf_eval_options* o) {
  if (o && o->delta_d_sweep && o->delta_d_count > 0) {
    return {o->delta_d_sweep, o->delta_d_sweep + o->delta_d_count};
  }
  return {0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw vaf::IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw vaf::IoError("write failed for " + path.string());
}

}  // namespace

extern "C" {

const char* vaf_version(void) { return "1.0.0"; }

const char* vaf_last_error(void) { return g_last_error.c_str(); }

const char* vaf_status_name(vaf_status status) {
  switch (status) {
    case VAF_OK: return "ok";
    case VAF_ERR_DOMAIN: return "domain_error";
    case VAF_ERR_SHAPE: return "shape_error";
    case VAF_ERR_NUMERIC: return "numeric_error";
    case VAF_ERR_IO: return "io_error";
    case VAF_ERR_FORMAT: return "format_error";
    case VAF_ERR_VERSION: return "version_error";
    case VAF_ERR_ARGUMENT: return "argument_error";
    case VAF_ERR_INTERNAL: return "internal_error";
  }
  return "unknown";
}

void vaf_optics_default(vaf_optics* out) {
  if (!out) return;
  const vaf::OpticalConfig c;
  *out = vaf_optics{c.numerical_aperture, c.refractive_index, c.wavelength_um,
                    c.pixel_pitch_um,     c.kernel_radius_px, c.quadrature_nodes};
}

void vaf_phantom_spec_default(vaf_phantom_spec* out) {
  if (!out) return;
  const vaf::PhantomSpec p;
  *out = vaf_phantom_spec{p.seed,
                          p.width,
                          p.height,
                          p.cell_count_range.min,
                          p.cell_count_range.max,
                          p.cell_radius_px_range.min,
                          p.cell_radius_px_range.max,
                          p.depth_relief_layers,
                          p.background_level,
                          p.cell_contrast_range.min,
                          p.cell_contrast_range.max,
                          p.min_cell_gap_px};
}

void vaf_dataset_options_default(vaf_dataset_options* out) {
  if (!out) return;
  const vaf::DatasetOptions d;
  *out = vaf_dataset_options{37,      1000,         d.delta_d_um,    d.patch_px,
                             d.noise_sigma, d.seed, d.split_seed, d.train_fraction};
}

void vaf_model_config_default(vaf_model_config* out) {
  if (!out) return;
  const vaf::TsvaConfig c;
  *out = vaf_model_config{c.depth_levels, c.base_channels, c.input_channels, c.single_input ? 1 : 0};
}

void vaf_train_options_default(vaf_train_options* out) {
  if (!out) return;
  const vaf::TrainOptions t;
  out->epochs = t.epochs;
  out->batch_size = t.batch_size;
  out->seed = t.seed;
  out->learning_rate = t.learning_rate;
  vaf_model_config_default(&out->model);
  out->on_epoch = nullptr;
  out->user = nullptr;
}

void vaf_eval_options_default(vaf_eval_options* out) {
  if (!out) return;
  const vaf::EvalOptions e;
  *out = vaf_eval_options{nullptr, 0, e.error_maps_per_group, e.error_map_ceiling, 20};
}

void vaf_scan_options_default(vaf_scan_options* out) {
  if (!out) return;
  const vaf::ScanPlan plan;
  const vaf::ScanOptions s;
  *out = vaf_scan_options{10,           0.5, s.noise_sigma, s.noise_seed, plan.zstack_shots_first_tile,
                          plan.shots_per_tile_conventional};
}

/* ---- optics ------------------------------------------------------------ */

vaf_status vaf_psf_value(double r_um, double defocus_um, const vaf_optics* optics, double* out) {
  return guarded([&] {
    require_arg(out != nullptr, "vaf_psf_value: out is NULL");
    *out = vaf::psf_value(r_um, defocus_um, to_optics(optics));
  });
}

vaf_status vaf_psf_kernel(double defocus_um, const vaf_optics* optics, vaf_image** out) {
  return guarded([&] {
    require_arg(out != nullptr, "vaf_psf_kernel: out is NULL");
    *out = wrap(vaf::build_kernel(defocus_um, to_optics(optics)).samples);
  });
}

/* ---- images ------------------------------------------------------------ */

vaf_status vaf_image_create(int width, int height, const double* pixels, vaf_image** out) {
  return guarded([&] {
    require_arg(out != nullptr, "vaf_image_create: out is NULL");
    require_arg(width >= 1 && height >= 1, "vaf_image_create: dimensions must be >= 1");
    if (pixels) {
      std::vector<double> v(pixels, pixels + static_cast<std::size_t>(width) * height);
      *out = wrap(vaf::Image(width, height, std::move(v)));
    } else {
      *out = wrap(vaf::Image(width, height, 0.0));
    }
  });
}

vaf_status vaf_image_load(const char* path, vaf_image** out) {
  return guarded([&] {
    require_arg(path && out, "vaf_image_load: NULL argument");
    *out = wrap(vaf::read_image(path));
  });
}

vaf_status vaf_image_save(const vaf_image* image, const char* path, int bits) {
  return guarded([&] {
    require_arg(image && path, "vaf_image_save: NULL argument");
    require_arg(bits == 8 || bits == 16, "vaf_image_save: bits must be 8 or 16");
    vaf::write_image(path, image->image, bits);
  });
}

vaf_status vaf_image_save_text(const vaf_image* image, const char* path) {
  return guarded([&] {
    require_arg(image && path, "vaf_image_save_text: NULL argument");
    vaf::write_text_matrix(path, image->image);
  });
}

void vaf_image_free(vaf_image* image) { delete image; }

int vaf_image_width(const vaf_image* image) { return image ? image->image.width() : 0; }

int vaf_image_height(const vaf_image* image) { return image ? image->image.height() : 0; }

const double* vaf_image_data(const vaf_image* image) {
  return image ? image->image.data() : nullptr;
}

/* ---- focus ------------------------------------------------------------- */

vaf_status vaf_brenner(const vaf_image* image, double* out) {
  return guarded([&] {
    require_arg(image && out, "vaf_brenner: NULL argument");
    *out = vaf::brenner(image->image).value;
  });
}

vaf_status vaf_find_focus(const vaf_image* const* images, const double* offsets_um, size_t count,
                          double* out) {
  return guarded([&] {
    require_arg(images && offsets_um && out, "vaf_find_focus: NULL argument");
    vaf::ZStack stack;
    for (size_t i = 0; i < count; ++i) {
      require_arg(images[i] != nullptr, "vaf_find_focus: NULL image in stack");
      stack.push_back(vaf::StackEntry{offsets_um[i], images[i]->image});
    }
    *out = vaf::find_focus(stack);
  });
}

/* ---- phantoms and capture ---------------------------------------------- */

vaf_status vaf_phantom_synth(const vaf_phantom_spec* spec, vaf_sample** out) {
  return guarded([&] {
    require_arg(out != nullptr, "vaf_phantom_synth: out is NULL");
    vaf::Phantom p = vaf::synth_phantom(to_spec(spec));
    *out = new vaf_sample{std::move(p.sample), p.true_cell_count()};
  });
}

vaf_status vaf_sample_save(const vaf_sample* sample, const char* dir) {
  return guarded([&] {
    require_arg(sample && dir, "vaf_sample_save: NULL argument");
    vaf::save_sample(sample->sample, dir, sample->true_cell_count);
  });
}

vaf_status vaf_sample_load(const char* dir, vaf_sample** out) {
  return guarded([&] {
    require_arg(dir && out, "vaf_sample_load: NULL argument");
    int count = -1;
    vaf::DepthLayeredSample s = vaf::load_sample(dir, &count);
    *out = new vaf_sample{std::move(s), count};
  });
}

void vaf_sample_free(vaf_sample* sample) { delete sample; }

int vaf_sample_true_cell_count(const vaf_sample* sample) {
  return sample ? sample->true_cell_count : -1;
}

vaf_status vaf_sample_render(const vaf_sample* sample, double offset_um, const vaf_optics* optics,
                             vaf_image** out) {
  return guarded([&] {
    require_arg(sample && out, "vaf_sample_render: NULL argument");
    const int steps = vaf::to_grid_steps(offset_um, sample->sample.layer_spacing_um);
    *out = wrap(vaf::render(sample->sample, steps, to_optics(optics)));
  });
}

vaf_status vaf_capture_pair(const vaf_sample* sample, double offset_um, double delta_d_um,
                            double noise_sigma, uint64_t seed, const vaf_optics* optics,
                            vaf_capture* out) {
  return guarded([&] {
    require_arg(sample && out, "vaf_capture_pair: NULL argument");
    vaf::CapturePair pair = vaf::capture_pair(sample->sample, offset_um, delta_d_um,
                                              to_optics(optics), vaf::NoiseSpec{noise_sigma, seed});
    out->brenner_y1 = vaf::brenner(pair.y1).value;
    out->brenner_y2 = vaf::brenner(pair.y2).value;
    out->y1_is_minus_side = pair.y1_is_minus_side ? 1 : 0;
    out->y1 = wrap(std::move(pair.y1));
    out->y2 = wrap(std::move(pair.y2));
    out->ground_truth = wrap(std::move(pair.ground_truth));
  });
}

void vaf_capture_release(vaf_capture* capture) {
  if (!capture) return;
  vaf_image_free(capture->y1);
  vaf_image_free(capture->y2);
  vaf_image_free(capture->ground_truth);
  capture->y1 = capture->y2 = capture->ground_truth = nullptr;
}

vaf_status vaf_zstack_write(const vaf_sample* sample, double min_um, double max_um,
                            double step_um, double noise_sigma, uint64_t seed,
                            const vaf_optics* optics, const char* dir) {
  return guarded([&] {
    require_arg(sample && dir, "vaf_zstack_write: NULL argument");
    const vaf::ZStack stack = vaf::generate_zstack(sample->sample, min_um, max_um, step_um,
                                                   to_optics(optics),
                                                   vaf::NoiseSpec{noise_sigma, seed});
    vaf::save_zstack(stack, dir);
  });
}

vaf_status vaf_zstack_find_focus(const char* dir, double* out) {
  return guarded([&] {
    require_arg(dir && out, "vaf_zstack_find_focus: NULL argument");
    *out = vaf::find_focus(vaf::load_zstack(dir));
  });
}

/* ---- dataset, training, inference -------------------------------------- */

vaf_status vaf_dataset_build(const vaf_dataset_options* options, const vaf_phantom_spec* base_spec,
                             const vaf_optics* optics, const char* dir, size_t* train_records,
                             size_t* validation_records) {
  return guarded([&] {
    require_arg(options && dir, "vaf_dataset_build: NULL argument");
    require_arg(options->phantom_count >= 1, "vaf_dataset_build: phantom_count must be >= 1");
    vaf::DatasetOptions d;
    d.delta_d_um = options->delta_d_um;
    d.patch_px = options->patch_px;
    d.noise_sigma = options->noise_sigma;
    d.seed = options->seed;
    d.split_seed = options->split_seed;
    d.train_fraction = options->train_fraction;
    const auto specs =
        vaf::phantom_series(to_spec(base_spec), options->phantom_count, options->first_phantom_seed);
    const vaf::DatasetSplit split = vaf::build_dataset(specs, d, to_optics(optics));
    vaf::save_dataset(split, dir);
    if (train_records) *train_records = split.train.size();
    if (validation_records) *validation_records = split.validation.size();
  });
}

vaf_status vaf_train(const char* dataset_dir, const vaf_train_options* options,
                     const char* checkpoint_path, double* best_validation_loss) {
  return guarded([&] {
    require_arg(dataset_dir && options && checkpoint_path, "vaf_train: NULL argument");
    const vaf::DatasetSplit split = vaf::load_dataset(dataset_dir);
    vaf::TrainOptions t;
    t.epochs = options->epochs;
    t.batch_size = options->batch_size;
    t.seed = options->seed;
    t.learning_rate = options->learning_rate;
    if (options->on_epoch) {
      auto cb = options->on_epoch;
      void* user = options->user;
      t.on_epoch = [cb, user](int e, double tr, double va) { cb(e, tr, va, user); };
    }
    const vaf::TsvaConfig cfg = to_config(options->model);
    vaf::TrainResult result = vaf::train(vaf::TsvaModel::build(cfg, t.seed), split, t);
    vaf::TrainingMetadata meta;
    meta.epoch = t.epochs;
    meta.best_epoch = result.report.best_epoch;
    meta.train_loss = result.report.train_loss;
    meta.validation_loss = result.report.validation_loss;
    meta.dataset_seed = split.options.seed;
    meta.train_seed = t.seed;
    if (best_validation_loss) {
      *best_validation_loss = result.report.validation_loss.at(result.report.best_epoch - 1);
    }
    vaf::save_checkpoint(
        vaf::Checkpoint{std::move(result.best), std::move(result.optimizer), std::move(meta)},
        checkpoint_path);
  });
}

vaf_status vaf_model_build(const vaf_model_config* config, uint64_t seed, vaf_model** out) {
  return guarded([&] {
    require_arg(out != nullptr, "vaf_model_build: out is NULL");
    vaf_model_config m;
    vaf_model_config_default(&m);
    if (config) m = *config;
    *out = new vaf_model{vaf::Checkpoint{vaf::TsvaModel::build(to_config(m), seed), std::nullopt, {}}};
  });
}

vaf_status vaf_model_load(const char* checkpoint_path, vaf_model** out) {
  return guarded([&] {
    require_arg(checkpoint_path && out, "vaf_model_load: NULL argument");
    *out = new vaf_model{vaf::load_checkpoint(checkpoint_path)};
  });
}

vaf_status vaf_model_save(const vaf_model* model, const char* checkpoint_path) {
  return guarded([&] {
    require_arg(model && checkpoint_path, "vaf_model_save: NULL argument");
    vaf::save_checkpoint(model->checkpoint, checkpoint_path);
  });
}

void vaf_model_free(vaf_model* model) { delete model; }

vaf_status vaf_model_zero_projection(vaf_model* model) {
  return guarded([&] {
    require_arg(model != nullptr, "vaf_model_zero_projection: model is NULL");
    model->checkpoint.model.zero_projection();
  });
}

size_t vaf_model_parameter_count(const vaf_model* model) {
  return model ? model->checkpoint.model.params().scalar_count() : 0;
}

vaf_status vaf_infer(vaf_model* model, const vaf_image* a, const vaf_image* b, vaf_image** out) {
  return guarded([&] {
    require_arg(model && a && b && out, "vaf_infer: NULL argument");
    *out = wrap(vaf::infer(model->checkpoint.model, a->image, b->image));
  });
}

/* ---- evaluation -------------------------------------------------------- */

vaf_status vaf_psnr(const vaf_image* a, const vaf_image* b, double peak, double* out) {
  return guarded([&] {
    require_arg(a && b && out, "vaf_psnr: NULL argument");
    *out = vaf::psnr(a->image, b->image, peak);
  });
}

vaf_status vaf_error_map(const vaf_image* a, const vaf_image* b, double ceiling, vaf_image** out) {
  return guarded([&] {
    require_arg(a && b && out, "vaf_error_map: NULL argument");
    *out = wrap(vaf::error_map(a->image, b->image, ceiling));
  });
}

vaf_status vaf_cell_count(const vaf_image* image, int* out) {
  return guarded([&] {
    require_arg(image && out, "vaf_cell_count: NULL argument");
    *out = vaf::cell_count(image->image);
  });
}

vaf_status vaf_evaluate(const char* dataset_dir, vaf_model* model, vaf_model* ablation,
                        const vaf_eval_options* options, const char* out_dir,
                        vaf_eval_summary* summary) {
  return guarded([&] {
    require_arg(dataset_dir && model && out_dir, "vaf_evaluate: NULL argument");
    vaf_eval_options o;
    vaf_eval_options_default(&o);
    if (options) o = *options;
    const vaf::DatasetSplit split = vaf::load_dataset(dataset_dir);
    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    vaf::EvalOptions eo;
    eo.error_map_dir = dir / "error_maps";
    eo.error_maps_per_group = o.error_maps_per_group;
    eo.error_map_ceiling = o.error_map_ceiling;
    vaf::EvalReport report = vaf::evaluate(split, model->checkpoint.model,
                                           ablation ? &ablation->checkpoint.model : nullptr,
                                           eval_sweep(&o), eo);
    if (o.cell_count_phantoms > 0) {
      std::vector<vaf::PhantomSource> sources;
      for (const auto& s : split.sources) {
        if (static_cast<int>(sources.size()) >= o.cell_count_phantoms) break;
        sources.push_back(s);
      }
      report.cell_counts = vaf::cell_count_fidelity(sources, split.options.delta_d_um,
                                                    split.options.noise_sigma, split.optics,
                                                    model->checkpoint.model);
    }
    write_file(dir / "report.csv", vaf::report_csv(report));
    write_file(dir / "summary.json", vaf::summary_json(report));
    if (summary) {
      const auto sweep = eval_sweep(&o);
      const auto [lo, hi] = std::minmax_element(sweep.begin(), sweep.end());
      double y1 = 0.0, outp = 0.0, abl = 0.0;
      std::size_t n = 0;
      double sum_lo = 0.0, sum_hi = 0.0;
      std::size_t n_lo = 0, n_hi = 0;
      for (const auto& row : report.rows) {
        if (std::abs(row.delta_d_um - *lo) < 1e-9) {
          sum_lo += row.psnr_output;
          ++n_lo;
        }
        if (std::abs(row.delta_d_um - *hi) < 1e-9) {
          sum_hi += row.psnr_output;
          ++n_hi;
        }
        if (std::abs(row.delta_d_um - split.options.delta_d_um) > 1e-9) continue;
        y1 += row.psnr_y1;
        outp += row.psnr_output;
        abl += row.psnr_ablation.value_or(0.0);
        ++n;
      }
      double count_err = 0.0;
      for (const auto& c : report.cell_counts) count_err += std::abs(c.count_output - c.count_ground_truth);
      const double nan = std::numeric_limits<double>::quiet_NaN();
      summary->rows = report.rows.size();
      summary->mean_psnr_output_smallest_dd = n_lo ? sum_lo / n_lo : nan;
      summary->mean_psnr_output_largest_dd = n_hi ? sum_hi / n_hi : nan;
      summary->mean_psnr_y1 = n ? y1 / n : nan;
      summary->mean_psnr_output = n ? outp / n : nan;
      summary->mean_psnr_ablation = (n && ablation) ? abl / n : nan;
      summary->mean_abs_count_error =
          report.cell_counts.empty() ? nan : count_err / report.cell_counts.size();
    }
  });
}

vaf_status vaf_scan_simulate(vaf_model* model, const vaf_scan_options* options,
                             const vaf_phantom_spec* base_spec, const vaf_optics* optics,
                             const char* report_path, vaf_scan_summary* summary) {
  return guarded([&] {
    require_arg(model != nullptr, "vaf_scan_simulate: missing checkpoint");
    vaf_scan_options o;
    vaf_scan_options_default(&o);
    if (options) o = *options;
    require_arg(o.tiles >= 1, "vaf_scan_simulate: tiles must be >= 1");
    const vaf::PhantomSpec base = to_spec(base_spec);
    vaf::ScanPlan plan;
    plan.zstack_shots_first_tile = o.zstack_shots_first_tile;
    plan.shots_per_tile_conventional = o.shots_per_tile_conventional;
    const auto specs = vaf::phantom_series(base, o.tiles, vaf::derive_seed(o.seed, 0));
    for (int t = 0; t < o.tiles; ++t) {
      vaf::ScanTile tile;
      tile.sample = vaf::synth_phantom(specs[t]).sample;
      tile.focal_error_um = vaf::sample_absolute_offset(vaf::derive_seed(o.seed, 1000 + t));
      plan.tiles.push_back(std::move(tile));
    }
    const vaf::EvalReport report =
        vaf::scan_simulate(plan, o.delta_d_um, to_optics(optics), model->checkpoint.model,
                           vaf::ScanOptions{o.noise_sigma, o.seed});
    if (report_path) write_file(report_path, vaf::scan_report_json(report));
    if (summary) {
      summary->two_shot_shots = report.shots ? report.shots->two_shot : 0;
      summary->conventional_shots = report.shots ? report.shots->conventional : 0;
      summary->initial_focal_plane_um = report.initial_focal_plane_um.value_or(0.0);
      double sum = 0.0;
      for (const auto& r : report.rows) sum += r.psnr_output;
      summary->mean_psnr_output =
          report.rows.empty() ? std::numeric_limits<double>::quiet_NaN() : sum / report.rows.size();
    }
  });
}

vaf_status vaf_shot_counts(int tiles, int zstack_shots_first_tile, int shots_per_tile_two_shot,
                           int shots_per_tile_conventional, long long* two_shot,
                           long long* conventional) {
  return guarded([&] {
    require_arg(two_shot && conventional, "vaf_shot_counts: NULL argument");
    const vaf::ShotCounts c = vaf::shot_counts(tiles, zstack_shots_first_tile,
                                               shots_per_tile_two_shot, shots_per_tile_conventional);
    *two_shot = c.two_shot;
    *conventional = c.conventional;
  });
}

}  // extern "C"
