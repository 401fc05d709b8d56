#pragma once

#include <filesystem>
#include <string>

#include "vaf/focus.hpp"
#include "vaf/optics.hpp"
#include "vaf/phantom.hpp"

namespace vaf {

inline constexpr int kDatasetFormatVersion = 1;

// Directory layout:
//   manifest.json                 splits, seeds, options, optics, phantom sources
//   records/<id>/y1.pgm y2.pgm gt.pgm meta.json
// Patches are stored as 16-bit PGM.

void save_dataset(const DatasetSplit& split, const std::filesystem::path& dir);
DatasetSplit load_dataset(const std::filesystem::path& dir);

std::string optical_config_json(const OpticalConfig& cfg);

/// Depth-layered sample on disk: sample.json plus one 16-bit PGM per layer.
/// A negative true_cell_count is stored as unknown.
void save_sample(const DepthLayeredSample& sample, const std::filesystem::path& dir,
                 int true_cell_count = -1);
DepthLayeredSample load_sample(const std::filesystem::path& dir, int* true_cell_count = nullptr);

/// Z-stack on disk: stack.json listing (offset_um, file) plus 16-bit PGMs.
void save_zstack(const ZStack& stack, const std::filesystem::path& dir);
ZStack load_zstack(const std::filesystem::path& dir);

}  // namespace vaf
