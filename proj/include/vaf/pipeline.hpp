#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vaf/image.hpp"
#include "vaf/imaging.hpp"
#include "vaf/phantom.hpp"
#include "vaf/tsva.hpp"

namespace vaf {

/// Reported in place of +inf when the two images are identical.
inline constexpr double kPsnrCapDb = 99.0;

double psnr(const Image& a, const Image& b, double peak = 1.0);

/// |a - b| scaled so that `ceiling` maps to 1, clamped to [0, 1].
Image error_map(const Image& a, const Image& b, double ceiling = 0.25);

/// Otsu threshold of an image with values in [0, 1], over 256 bins. Returns
/// the upper edge of the last background-side (dark) bin.
double otsu_threshold(const Image& img);

/// Dark-object count: min-max contrast stretch, Otsu threshold, removal of
/// components smaller than `min_component_px`, 8-connected labelling.
int cell_count(const Image& img, int min_component_px = 9);

struct ShotCounts {
  long long two_shot = 0;
  long long conventional = 0;
};

struct ScanTile {
  DepthLayeredSample sample;
  double focal_error_um = 0.0;  // true focus relative to the nominal stage plane
};

struct ScanPlan {
  std::vector<ScanTile> tiles;
  int zstack_shots_first_tile = 41;
  int shots_per_tile_two_shot = 2;
  int shots_per_tile_conventional = 21;
  double zstack_min_um = -10.0;
  double zstack_max_um = 10.0;
  double zstack_step_um = 0.5;

  ShotCounts shot_counts() const;
};

/// Closed-form totals for a plan of `tiles` tiles.
ShotCounts shot_counts(int tiles, int zstack_shots_first_tile = 41,
                       int shots_per_tile_two_shot = 2, int shots_per_tile_conventional = 21);

struct EvalRow {
  std::string record;
  int phantom = 0;
  double delta_d_um = 0.0;
  double absolute_offset_um = 0.0;
  double psnr_y1 = 0.0;
  double psnr_y2 = 0.0;
  double psnr_output = 0.0;
  std::optional<double> psnr_ablation;
};

struct Stat {
  double mean = 0.0;
  double sd = 0.0;  // population standard deviation
};
Stat mean_sd(const std::vector<double>& values);

struct EvalGroup {
  double delta_d_um = 0.0;
  std::size_t count = 0;
  Stat y1;
  Stat y2;
  Stat output;
  std::optional<Stat> ablation;
};

struct CellCountRow {
  int phantom = 0;
  int true_count = 0;
  int count_ground_truth = 0;
  int count_output = 0;
  int count_y1 = 0;
};

struct EvalReport {
  double peak = 1.0;
  std::vector<EvalRow> rows;
  std::vector<EvalGroup> groups;
  std::vector<CellCountRow> cell_counts;
  std::optional<ShotCounts> shots;
  std::optional<double> initial_focal_plane_um;
  std::vector<std::string> error_maps;
};

/// Groups rows by delta D (ascending) with mean and SD of every PSNR column.
std::vector<EvalGroup> aggregate(const std::vector<EvalRow>& rows);

struct ScanOptions {
  double noise_sigma = 0.01;
  std::uint64_t noise_seed = 99;
};

/// First tile: full z-stack and Brenner focus search sets the initial focal
/// plane F. Every other tile: two shots at F +/- dd, recovered by the model.
EvalReport scan_simulate(const ScanPlan& plan, double delta_d_um, const OpticalConfig& cfg,
                         TsvaModel& model, const ScanOptions& options = {});

struct EvalOptions {
  std::optional<std::filesystem::path> error_map_dir;
  int error_maps_per_group = 4;
  double error_map_ceiling = 0.25;
};

/// Re-renders every validation record at each delta D of the sweep (same
/// phantom, focal error and noise seed) and scores y1, y2, the model output
/// and, when given, the single-input ablation.
EvalReport evaluate(const DatasetSplit& dataset, TsvaModel& model, TsvaModel* ablation,
                    const std::vector<double>& delta_d_sweep, const EvalOptions& options = {});

/// Whole-phantom cell counts of ground truth, model output and y1 at the
/// dataset's delta D for the given sources.
std::vector<CellCountRow> cell_count_fidelity(const std::vector<PhantomSource>& sources,
                                              double delta_d_um, double noise_sigma,
                                              const OpticalConfig& cfg, TsvaModel& model);

std::string report_csv(const EvalReport& report);
std::string summary_json(const EvalReport& report);
std::string scan_report_json(const EvalReport& report);

}  // namespace vaf
