#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vaf/image.hpp"
#include "vaf/imaging.hpp"
#include "vaf/optics.hpp"

namespace vaf {

template <typename T>
struct Range {
  T min;
  T max;
  friend bool operator==(const Range&, const Range&) = default;
};

/// Recipe for a synthetic tissue-like phantom: elliptical cells with darker
/// nuclei over a lightly textured background, spread over a few depth layers.
struct PhantomSpec {
  std::uint64_t seed = 0;
  int width = 128;
  int height = 128;
  Range<int> cell_count_range{12, 22};
  Range<double> cell_radius_px_range{4.0, 7.0};
  int depth_relief_layers = 5;
  double background_level = 0.82;
  Range<double> cell_contrast_range{0.22, 0.38};
  double min_cell_gap_px = 4.0;

  void validate() const;
  friend bool operator==(const PhantomSpec&, const PhantomSpec&) = default;
};

struct PhantomCell {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;
  int depth = 0;
};

struct Phantom {
  DepthLayeredSample sample;
  std::vector<PhantomCell> cells;  // sidecar: true layout
  int true_cell_count() const { return static_cast<int>(cells.size()); }
};

Phantom synth_phantom(const PhantomSpec& spec);

/// Focal error in um: N(0, 1) rounded to the 0.5 um grid, clamped to [-3, 3].
double sample_absolute_offset(std::uint64_t rng_seed);

inline constexpr double kOffsetGridUm = 0.5;
inline constexpr double kOffsetClampUm = 3.0;

/// Probability mass of sample_absolute_offset at a grid value (exact, via erfc).
double offset_probability(double offset_um);

struct PatchRecord {
  Image y1;
  Image y2;
  Image ground_truth;
  double delta_d_um = 0.0;
  double absolute_offset_um = 0.0;
  int source_phantom = 0;
  int tile_x = 0;  // tile column and row in the source phantom
  int tile_y = 0;
  int rotation = 0;  // quarter turns counter-clockwise
  bool y1_is_minus_side = true;
  int true_cell_count = 0;  // of the whole source phantom

  std::string id() const;
};

struct PhantomSource {
  PhantomSpec spec;
  double absolute_offset_um = 0.0;
  std::uint64_t noise_seed = 0;
  int true_cell_count = 0;
};

struct DatasetOptions {
  double delta_d_um = 0.5;
  int patch_px = 64;
  double noise_sigma = 0.01;
  std::uint64_t seed = 2024;  // drives offsets and noise
  std::uint64_t split_seed = 7;
  double train_fraction = 0.85;
};

struct DatasetSplit {
  std::vector<PatchRecord> train;
  std::vector<PatchRecord> validation;
  std::uint64_t split_seed = 0;
  DatasetOptions options;
  OpticalConfig optics;
  std::vector<PhantomSource> sources;
};

/// Tiles one rendered capture into patch records (all four rotations of each
/// tile). Each record is re-ordered so its y1 is the Brenner-sharper patch.
std::vector<PatchRecord> tile_capture(const CapturePair& capture, int patch_px,
                                      int source_phantom, int true_cell_count);

DatasetSplit build_dataset(const std::vector<PhantomSpec>& specs, const DatasetOptions& options,
                           const OpticalConfig& cfg);

/// Phantom specs with consecutive seeds starting at `first_seed`.
std::vector<PhantomSpec> phantom_series(const PhantomSpec& base, int count,
                                        std::uint64_t first_seed);

}  // namespace vaf
