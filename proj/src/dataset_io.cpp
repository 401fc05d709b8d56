#include "vaf/dataset_io.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "vaf/error.hpp"
#include "vaf/image_io.hpp"

namespace vaf {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json optics_to_json(const OpticalConfig& c) {
  return json{{"numerical_aperture", c.numerical_aperture},
              {"refractive_index", c.refractive_index},
              {"wavelength_um", c.wavelength_um},
              {"pixel_pitch_um", c.pixel_pitch_um},
              {"kernel_radius_px", c.kernel_radius_px},
              {"quadrature_nodes", c.quadrature_nodes}};
}

OpticalConfig optics_from_json(const json& j) {
  OpticalConfig c;
  c.numerical_aperture = j.at("numerical_aperture").get<double>();
  c.refractive_index = j.at("refractive_index").get<double>();
  c.wavelength_um = j.at("wavelength_um").get<double>();
  c.pixel_pitch_um = j.at("pixel_pitch_um").get<double>();
  c.kernel_radius_px = j.at("kernel_radius_px").get<int>();
  c.quadrature_nodes = j.at("quadrature_nodes").get<int>();
  return c;
}

json spec_to_json(const PhantomSpec& s) {
  return json{{"seed", s.seed},
              {"width", s.width},
              {"height", s.height},
              {"cell_count_range", {s.cell_count_range.min, s.cell_count_range.max}},
              {"cell_radius_px_range", {s.cell_radius_px_range.min, s.cell_radius_px_range.max}},
              {"depth_relief_layers", s.depth_relief_layers},
              {"background_level", s.background_level},
              {"cell_contrast_range", {s.cell_contrast_range.min, s.cell_contrast_range.max}},
              {"min_cell_gap_px", s.min_cell_gap_px}};
}

PhantomSpec spec_from_json(const json& j) {
  PhantomSpec s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.width = j.at("width").get<int>();
  s.height = j.at("height").get<int>();
  s.cell_count_range = {j.at("cell_count_range").at(0).get<int>(),
                        j.at("cell_count_range").at(1).get<int>()};
  s.cell_radius_px_range = {j.at("cell_radius_px_range").at(0).get<double>(),
                            j.at("cell_radius_px_range").at(1).get<double>()};
  s.depth_relief_layers = j.at("depth_relief_layers").get<int>();
  s.background_level = j.at("background_level").get<double>();
  s.cell_contrast_range = {j.at("cell_contrast_range").at(0).get<double>(),
                           j.at("cell_contrast_range").at(1).get<double>()};
  s.min_cell_gap_px = j.at("min_cell_gap_px").get<double>();
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

json record_meta(const PatchRecord& r) {
  return json{{"delta_d_um", r.delta_d_um},
              {"absolute_offset_um", r.absolute_offset_um},
              {"rotation", r.rotation * 90},
              {"phantom", r.source_phantom},
              {"tile_x", r.tile_x},
              {"tile_y", r.tile_y},
              {"y1_is_minus_side", r.y1_is_minus_side},
              {"true_cell_count", r.true_cell_count}};
}

PatchRecord load_record(const fs::path& dir) {
  const json meta = read_json(dir / "meta.json");
  PatchRecord r;
  r.y1 = read_pgm(dir / "y1.pgm");
  r.y2 = read_pgm(dir / "y2.pgm");
  r.ground_truth = read_pgm(dir / "gt.pgm");
  r.delta_d_um = meta.at("delta_d_um").get<double>();
  r.absolute_offset_um = meta.at("absolute_offset_um").get<double>();
  r.rotation = meta.at("rotation").get<int>() / 90;
  r.source_phantom = meta.at("phantom").get<int>();
  r.tile_x = meta.at("tile_x").get<int>();
  r.tile_y = meta.at("tile_y").get<int>();
  r.y1_is_minus_side = meta.at("y1_is_minus_side").get<bool>();
  r.true_cell_count = meta.at("true_cell_count").get<int>();
  return r;
}

}  // namespace

std::string optical_config_json(const OpticalConfig& cfg) { return optics_to_json(cfg).dump(); }

void save_dataset(const DatasetSplit& split, const fs::path& dir) {
  fs::create_directories(dir / "records");
  json manifest;
  manifest["format_version"] = kDatasetFormatVersion;
  manifest["seed"] = split.options.seed;
  manifest["split_seed"] = split.split_seed;
  manifest["delta_d_um"] = split.options.delta_d_um;
  manifest["patch_px"] = split.options.patch_px;
  manifest["noise_sigma"] = split.options.noise_sigma;
  manifest["train_fraction"] = split.options.train_fraction;
  manifest["optics"] = optics_to_json(split.optics);
  json phantoms = json::array();
  for (const auto& s : split.sources) {
    phantoms.push_back(json{{"spec", spec_to_json(s.spec)},
                            {"absolute_offset_um", s.absolute_offset_um},
                            {"noise_seed", s.noise_seed},
                            {"true_cell_count", s.true_cell_count}});
  }
  manifest["phantoms"] = phantoms;
  auto write_side = [&](const std::vector<PatchRecord>& records, const char* key) {
    json ids = json::array();
    for (const auto& r : records) {
      const fs::path rd = dir / "records" / r.id();
      fs::create_directories(rd);
      write_pgm(rd / "y1.pgm", r.y1, 16);
      write_pgm(rd / "y2.pgm", r.y2, 16);
      write_pgm(rd / "gt.pgm", r.ground_truth, 16);
      write_text(rd / "meta.json", record_meta(r).dump(2) + "\n");
      ids.push_back(r.id());
    }
    manifest[key] = ids;
  };
  write_side(split.train, "train");
  write_side(split.validation, "validation");
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

DatasetSplit load_dataset(const fs::path& dir) {
  const json manifest = read_json(dir / "manifest.json");
  try {
    if (manifest.at("format_version").get<int>() != kDatasetFormatVersion) {
      throw VersionError("unsupported dataset format version in " + dir.string());
    }
    DatasetSplit split;
    split.options.seed = manifest.at("seed").get<std::uint64_t>();
    split.split_seed = manifest.at("split_seed").get<std::uint64_t>();
    split.options.split_seed = split.split_seed;
    split.options.delta_d_um = manifest.at("delta_d_um").get<double>();
    split.options.patch_px = manifest.at("patch_px").get<int>();
    split.options.noise_sigma = manifest.at("noise_sigma").get<double>();
    split.options.train_fraction = manifest.at("train_fraction").get<double>();
    split.optics = optics_from_json(manifest.at("optics"));
    for (const auto& p : manifest.at("phantoms")) {
      PhantomSource s;
      s.spec = spec_from_json(p.at("spec"));
      s.absolute_offset_um = p.at("absolute_offset_um").get<double>();
      s.noise_seed = p.at("noise_seed").get<std::uint64_t>();
      s.true_cell_count = p.at("true_cell_count").get<int>();
      split.sources.push_back(s);
    }
    for (const auto& id : manifest.at("train")) {
      split.train.push_back(load_record(dir / "records" / id.get<std::string>()));
    }
    for (const auto& id : manifest.at("validation")) {
      split.validation.push_back(load_record(dir / "records" / id.get<std::string>()));
    }
    return split;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(dir.string() + "/manifest.json: " + e.what());
  }
}

void save_sample(const DepthLayeredSample& sample, const fs::path& dir, int true_cell_count) {
  sample.validate();
  fs::create_directories(dir);
  json j;
  j["layer_spacing_um"] = sample.layer_spacing_um;
  j["in_focus_index"] = sample.in_focus_index;
  if (true_cell_count >= 0) j["true_cell_count"] = true_cell_count;
  json layers = json::array();
  for (const auto& layer : sample.layers) {
    const std::string file = "layer_" + std::to_string(layer.depth) + ".pgm";
    write_pgm(dir / file, layer.image, 16);
    layers.push_back(json{{"depth", layer.depth}, {"file", file}});
  }
  j["layers"] = layers;
  write_text(dir / "sample.json", j.dump(2) + "\n");
}

DepthLayeredSample load_sample(const fs::path& dir, int* true_cell_count) {
  const json j = read_json(dir / "sample.json");
  try {
    if (true_cell_count) *true_cell_count = j.value("true_cell_count", -1);
    DepthLayeredSample s;
    s.layer_spacing_um = j.at("layer_spacing_um").get<double>();
    s.in_focus_index = j.at("in_focus_index").get<int>();
    for (const auto& l : j.at("layers")) {
      s.layers.push_back(DepthLayer{l.at("depth").get<int>(),
                                    read_pgm(dir / l.at("file").get<std::string>())});
    }
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(dir.string() + "/sample.json: " + e.what());
  }
}

void save_zstack(const ZStack& stack, const fs::path& dir) {
  fs::create_directories(dir);
  json entries = json::array();
  for (std::size_t i = 0; i < stack.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "z_%03zu.pgm", i);
    write_pgm(dir / name, stack[i].image, 16);
    entries.push_back(json{{"offset_um", stack[i].offset_um}, {"file", name}});
  }
  write_text(dir / "stack.json", json{{"entries", entries}}.dump(2) + "\n");
}

ZStack load_zstack(const fs::path& dir) {
  const json j = read_json(dir / "stack.json");
  try {
    ZStack stack;
    for (const auto& e : j.at("entries")) {
      stack.push_back(StackEntry{e.at("offset_um").get<double>(),
                                 read_image(dir / e.at("file").get<std::string>())});
    }
    return stack;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(dir.string() + "/stack.json: " + e.what());
  }
}

}  // namespace vaf
