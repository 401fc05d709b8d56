/* C interface to the virtual-autofocusing toolkit.
 *
 * Every function returns a vaf_status. On failure, vaf_last_error() returns a
 * thread-local message describing the most recent error on the calling
 * thread. Objects are opaque handles released with their matching *_free.
 */
#ifndef VAF_VAF_H
#define VAF_VAF_H

#include <stddef.h>
#include <stdint.h>

#if defined(VAF_BUILDING_LIBRARY)
#define VAF_API __attribute__((visibility("default")))
#else
#define VAF_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum vaf_status {
  VAF_OK = 0,
  VAF_ERR_DOMAIN = 1,
  VAF_ERR_SHAPE = 2,
  VAF_ERR_NUMERIC = 3,
  VAF_ERR_IO = 4,
  VAF_ERR_FORMAT = 5,
  VAF_ERR_VERSION = 6,
  VAF_ERR_ARGUMENT = 7,
  VAF_ERR_INTERNAL = 99
} vaf_status;

typedef struct vaf_image vaf_image;
typedef struct vaf_sample vaf_sample;
typedef struct vaf_model vaf_model;

typedef struct vaf_optics {
  double numerical_aperture;
  double refractive_index;
  double wavelength_um;
  double pixel_pitch_um;
  int kernel_radius_px;
  int quadrature_nodes;
} vaf_optics;

typedef struct vaf_phantom_spec {
  uint64_t seed;
  int width;
  int height;
  int cell_count_min;
  int cell_count_max;
  double cell_radius_min_px;
  double cell_radius_max_px;
  int depth_relief_layers;
  double background_level;
  double cell_contrast_min;
  double cell_contrast_max;
  double min_cell_gap_px;
} vaf_phantom_spec;

typedef struct vaf_dataset_options {
  int phantom_count;
  uint64_t first_phantom_seed;
  double delta_d_um;
  int patch_px;
  double noise_sigma;
  uint64_t seed;
  uint64_t split_seed;
  double train_fraction;
} vaf_dataset_options;

typedef struct vaf_model_config {
  int depth_levels;
  int base_channels;
  int input_channels;
  int single_input;
} vaf_model_config;

typedef void (*vaf_epoch_callback)(int epoch, double train_loss, double validation_loss,
                                   void* user);

typedef struct vaf_train_options {
  int epochs;
  int batch_size;
  uint64_t seed;
  double learning_rate;
  vaf_model_config model;
  vaf_epoch_callback on_epoch; /* may be NULL */
  void* user;
} vaf_train_options;

typedef struct vaf_eval_options {
  const double* delta_d_sweep; /* NULL selects 0.5, 1.0, ..., 3.0 */
  size_t delta_d_count;
  int error_maps_per_group;
  double error_map_ceiling;
  int cell_count_phantoms; /* phantoms used for the cell-count rows; 0 disables */
} vaf_eval_options;

typedef struct vaf_eval_summary {
  double mean_psnr_y1;
  double mean_psnr_output;
  double mean_psnr_ablation; /* NaN without an ablation model */
  double mean_abs_count_error;
  double mean_psnr_output_smallest_dd; /* over the sweep's smallest delta D */
  double mean_psnr_output_largest_dd;  /* over the sweep's largest delta D */
  size_t rows;
} vaf_eval_summary;

typedef struct vaf_scan_options {
  int tiles;
  double delta_d_um;
  double noise_sigma;
  uint64_t seed;
  int zstack_shots_first_tile;
  int shots_per_tile_conventional;
} vaf_scan_options;

typedef struct vaf_scan_summary {
  long long two_shot_shots;
  long long conventional_shots;
  double initial_focal_plane_um;
  double mean_psnr_output;
} vaf_scan_summary;

/* ---- library ----------------------------------------------------------- */
VAF_API const char* vaf_version(void);
VAF_API const char* vaf_last_error(void);
VAF_API const char* vaf_status_name(vaf_status status);

VAF_API void vaf_optics_default(vaf_optics* out);
VAF_API void vaf_phantom_spec_default(vaf_phantom_spec* out);
VAF_API void vaf_dataset_options_default(vaf_dataset_options* out);
VAF_API void vaf_model_config_default(vaf_model_config* out);
VAF_API void vaf_train_options_default(vaf_train_options* out);
VAF_API void vaf_eval_options_default(vaf_eval_options* out);
VAF_API void vaf_scan_options_default(vaf_scan_options* out);

/* ---- optics ------------------------------------------------------------ */
VAF_API vaf_status vaf_psf_value(double r_um, double defocus_um, const vaf_optics* optics,
                                 double* out);
/* Normalized kernel of side 2*radius+1; *out is released with vaf_image_free. */
VAF_API vaf_status vaf_psf_kernel(double defocus_um, const vaf_optics* optics, vaf_image** out);

/* ---- images ------------------------------------------------------------ */
VAF_API vaf_status vaf_image_create(int width, int height, const double* pixels, vaf_image** out);
VAF_API vaf_status vaf_image_load(const char* path, vaf_image** out);
/* .pgm writes 16-bit unless bits == 8; .png writes 8- or 16-bit. */
VAF_API vaf_status vaf_image_save(const vaf_image* image, const char* path, int bits);
VAF_API vaf_status vaf_image_save_text(const vaf_image* image, const char* path);
VAF_API void vaf_image_free(vaf_image* image);
VAF_API int vaf_image_width(const vaf_image* image);
VAF_API int vaf_image_height(const vaf_image* image);
VAF_API const double* vaf_image_data(const vaf_image* image);

/* ---- focus ------------------------------------------------------------- */
VAF_API vaf_status vaf_brenner(const vaf_image* image, double* out);
/* images[i] was captured at offsets_um[i]; returns the sharpest offset. */
VAF_API vaf_status vaf_find_focus(const vaf_image* const* images, const double* offsets_um,
                                  size_t count, double* out);

/* ---- phantoms and capture ---------------------------------------------- */
VAF_API vaf_status vaf_phantom_synth(const vaf_phantom_spec* spec, vaf_sample** out);
VAF_API vaf_status vaf_sample_save(const vaf_sample* sample, const char* dir);
VAF_API vaf_status vaf_sample_load(const char* dir, vaf_sample** out);
VAF_API void vaf_sample_free(vaf_sample* sample);
/* -1 when the count is unknown (sample loaded without metadata). */
VAF_API int vaf_sample_true_cell_count(const vaf_sample* sample);
VAF_API vaf_status vaf_sample_render(const vaf_sample* sample, double offset_um,
                                     const vaf_optics* optics, vaf_image** out);

typedef struct vaf_capture {
  vaf_image* y1;
  vaf_image* y2;
  vaf_image* ground_truth;
  double brenner_y1;
  double brenner_y2;
  int y1_is_minus_side;
} vaf_capture;

VAF_API vaf_status vaf_capture_pair(const vaf_sample* sample, double offset_um,
                                    double delta_d_um, double noise_sigma, uint64_t seed,
                                    const vaf_optics* optics, vaf_capture* out);
VAF_API void vaf_capture_release(vaf_capture* capture);

/* Writes stack.json plus one 16-bit PGM per offset in [min_um, max_um]. */
VAF_API vaf_status vaf_zstack_write(const vaf_sample* sample, double min_um, double max_um,
                                    double step_um, double noise_sigma, uint64_t seed,
                                    const vaf_optics* optics, const char* dir);
/* Loads a stack written by vaf_zstack_write and returns its sharpest offset. */
VAF_API vaf_status vaf_zstack_find_focus(const char* dir, double* out);

/* ---- dataset, training, inference -------------------------------------- */
VAF_API vaf_status vaf_dataset_build(const vaf_dataset_options* options,
                                     const vaf_phantom_spec* base_spec, const vaf_optics* optics,
                                     const char* dir, size_t* train_records,
                                     size_t* validation_records);
VAF_API vaf_status vaf_train(const char* dataset_dir, const vaf_train_options* options,
                             const char* checkpoint_path, double* best_validation_loss);
VAF_API vaf_status vaf_model_build(const vaf_model_config* config, uint64_t seed,
                                   vaf_model** out);
VAF_API vaf_status vaf_model_load(const char* checkpoint_path, vaf_model** out);
VAF_API vaf_status vaf_model_save(const vaf_model* model, const char* checkpoint_path);
VAF_API void vaf_model_free(vaf_model* model);
VAF_API vaf_status vaf_model_zero_projection(vaf_model* model);
VAF_API size_t vaf_model_parameter_count(const vaf_model* model);
VAF_API vaf_status vaf_infer(vaf_model* model, const vaf_image* a, const vaf_image* b,
                             vaf_image** out);

/* ---- evaluation -------------------------------------------------------- */
VAF_API vaf_status vaf_psnr(const vaf_image* a, const vaf_image* b, double peak, double* out);
VAF_API vaf_status vaf_error_map(const vaf_image* a, const vaf_image* b, double ceiling,
                                 vaf_image** out);
VAF_API vaf_status vaf_cell_count(const vaf_image* image, int* out);
/* Writes report.csv, summary.json and error-map PNGs into out_dir. */
VAF_API vaf_status vaf_evaluate(const char* dataset_dir, vaf_model* model, vaf_model* ablation,
                                const vaf_eval_options* options, const char* out_dir,
                                vaf_eval_summary* summary);
VAF_API vaf_status vaf_scan_simulate(vaf_model* model, const vaf_scan_options* options,
                                     const vaf_phantom_spec* base_spec, const vaf_optics* optics,
                                     const char* report_path, vaf_scan_summary* summary);
VAF_API vaf_status vaf_shot_counts(int tiles, int zstack_shots_first_tile,
                                   int shots_per_tile_two_shot, int shots_per_tile_conventional,
                                   long long* two_shot, long long* conventional);

#ifdef __cplusplus
}
#endif

#endif /* VAF_VAF_H */
