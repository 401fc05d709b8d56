#include "vaf/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <tuple>

#include "json.hpp"
#include "vaf/error.hpp"
#include "vaf/focus.hpp"
#include "vaf/image_io.hpp"
#include "vaf/rng.hpp"

namespace vaf {

using nlohmann::json;

double psnr(const Image& a, const Image& b, double peak) {
  if (!a.same_shape(b)) throw ShapeError("psnr: image shapes differ");
  if (!(peak > 0.0)) throw DomainError("psnr: peak must be positive");
  if (a.empty()) throw ShapeError("psnr: empty images");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.pixels()[i] - b.pixels()[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(peak * peak / mse));
}

Image error_map(const Image& a, const Image& b, double ceiling) {
  if (!a.same_shape(b)) throw ShapeError("error_map: image shapes differ");
  if (!(ceiling > 0.0)) throw DomainError("error_map: ceiling must be positive");
  Image out(a.width(), a.height());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.pixels()[i] = std::min(1.0, std::abs(a.pixels()[i] - b.pixels()[i]) / ceiling);
  }
  return out;
}

double otsu_threshold(const Image& img) {
  constexpr int kBins = 256;
  std::array<double, kBins> hist{};
  for (double v : img.pixels()) {
    const int bin = std::clamp(static_cast<int>(v * kBins), 0, kBins - 1);
    hist[bin] += 1.0;
  }
  const double total = static_cast<double>(img.size());
  double sum_all = 0.0;
  for (int i = 0; i < kBins; ++i) sum_all += i * hist[i];
  double weight_bg = 0.0;
  double sum_bg = 0.0;
  double best_var = -1.0;
  int best = 0;
  for (int t = 0; t < kBins; ++t) {
    weight_bg += hist[t];
    if (weight_bg == 0.0) continue;
    const double weight_fg = total - weight_bg;
    if (weight_fg == 0.0) break;
    sum_bg += t * hist[t];
    const double mean_bg = sum_bg / weight_bg;
    const double mean_fg = (sum_all - sum_bg) / weight_fg;
    const double between = weight_bg * weight_fg * (mean_bg - mean_fg) * (mean_bg - mean_fg);
    if (between > best_var) {
      best_var = between;
      best = t;
    }
  }
  return (best + 1) / static_cast<double>(kBins);
}

int cell_count(const Image& img, int min_component_px) {
  if (img.empty()) return 0;
  const auto [lo, hi] = std::minmax_element(img.pixels().begin(), img.pixels().end());
  const double range = *hi - *lo;
  if (!(range > 1e-9)) return 0;
  Image stretched(img.width(), img.height());
  for (std::size_t i = 0; i < img.size(); ++i) {
    stretched.pixels()[i] = (img.pixels()[i] - *lo) / range;
  }
  const double threshold = otsu_threshold(stretched);
  const int w = img.width();
  const int h = img.height();
  std::vector<std::uint8_t> fg(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    fg[i] = stretched.pixels()[i] < threshold ? 1 : 0;
  }
  std::vector<int> stack;
  int count = 0;
  for (int start = 0; start < w * h; ++start) {
    if (!fg[start]) continue;
    fg[start] = 0;
    stack.assign(1, start);
    int size = 0;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      ++size;
      const int px = p % w;
      const int py = p / w;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = px + dx;
          const int ny = py + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const int q = ny * w + nx;
          if (fg[q]) {
            fg[q] = 0;
            stack.push_back(q);
          }
        }
      }
    }
    if (size >= min_component_px) ++count;
  }
  return count;
}

ShotCounts shot_counts(int tiles, int zstack_shots_first_tile, int shots_per_tile_two_shot,
                       int shots_per_tile_conventional) {
  if (tiles < 1) throw DomainError("a scan needs at least one tile");
  if (zstack_shots_first_tile < 1 || shots_per_tile_two_shot < 1 || shots_per_tile_conventional < 1) {
    throw DomainError("shot counts must be >= 1");
  }
  ShotCounts s;
  s.two_shot = zstack_shots_first_tile + static_cast<long long>(shots_per_tile_two_shot) * (tiles - 1);
  s.conventional = static_cast<long long>(shots_per_tile_conventional) * tiles;
  return s;
}

ShotCounts ScanPlan::shot_counts() const {
  return vaf::shot_counts(static_cast<int>(tiles.size()), zstack_shots_first_tile,
                          shots_per_tile_two_shot, shots_per_tile_conventional);
}

Stat mean_sd(const std::vector<double>& values) {
  Stat s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(sq / static_cast<double>(values.size()));
  return s;
}

std::vector<EvalGroup> aggregate(const std::vector<EvalRow>& rows) {
  std::map<double, std::vector<const EvalRow*>> by_dd;
  for (const auto& r : rows) by_dd[r.delta_d_um].push_back(&r);
  std::vector<EvalGroup> groups;
  for (const auto& [dd, members] : by_dd) {
    std::vector<double> y1;
    std::vector<double> y2;
    std::vector<double> out;
    std::vector<double> abl;
    for (const EvalRow* r : members) {
      y1.push_back(r->psnr_y1);
      y2.push_back(r->psnr_y2);
      out.push_back(r->psnr_output);
      if (r->psnr_ablation) abl.push_back(*r->psnr_ablation);
    }
    EvalGroup g;
    g.delta_d_um = dd;
    g.count = members.size();
    g.y1 = mean_sd(y1);
    g.y2 = mean_sd(y2);
    g.output = mean_sd(out);
    if (abl.size() == members.size()) g.ablation = mean_sd(abl);
    groups.push_back(g);
  }
  return groups;
}

EvalReport scan_simulate(const ScanPlan& plan, double delta_d_um, const OpticalConfig& cfg,
                         TsvaModel& model, const ScanOptions& options) {
  if (plan.tiles.empty()) throw DomainError("scan_simulate: plan has no tiles");
  EvalReport report;
  report.shots = plan.shot_counts();

  const ScanTile& first = plan.tiles.front();
  KernelBank bank(cfg, first.sample.layer_spacing_um);
  // A capture at stage position p renders the tile at shift (focal error + p).
  const ZStack raw = generate_zstack(first.sample, plan.zstack_min_um + first.focal_error_um,
                                     plan.zstack_max_um + first.focal_error_um, plan.zstack_step_um,
                                     bank, NoiseSpec{options.noise_sigma, options.noise_seed});
  ZStack stage_stack;
  for (const auto& e : raw) stage_stack.push_back({e.offset_um - first.focal_error_um, e.image});
  const double focal_plane = find_focus(stage_stack);
  report.initial_focal_plane_um = focal_plane;

  for (std::size_t t = 1; t < plan.tiles.size(); ++t) {
    const ScanTile& tile = plan.tiles[t];
    const double offset = tile.focal_error_um + focal_plane;
    const CapturePair pair =
        capture_pair(tile.sample, offset, delta_d_um, bank,
                     NoiseSpec{options.noise_sigma, derive_seed(options.noise_seed, t)});
    const Image out = infer(model, pair.y1, pair.y2);
    EvalRow row;
    row.record = "tile" + std::to_string(t);
    row.phantom = static_cast<int>(t);
    row.delta_d_um = delta_d_um;
    row.absolute_offset_um = offset;
    row.psnr_y1 = psnr(pair.y1, pair.ground_truth);
    row.psnr_y2 = psnr(pair.y2, pair.ground_truth);
    row.psnr_output = psnr(out, pair.ground_truth);
    report.rows.push_back(row);
  }
  report.groups = aggregate(report.rows);
  return report;
}

namespace {

std::string format_um(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

}  // namespace

EvalReport evaluate(const DatasetSplit& dataset, TsvaModel& model, TsvaModel* ablation,
                    const std::vector<double>& delta_d_sweep, const EvalOptions& options) {
  if (dataset.validation.empty()) throw DomainError("evaluate: no validation records");
  if (delta_d_sweep.empty()) throw DomainError("evaluate: empty delta D sweep");
  const int div = model.config().size_divisor();
  if (dataset.options.patch_px % div != 0) {
    throw DomainError("evaluate: patch size " + std::to_string(dataset.options.patch_px) +
                      " is incompatible with the checkpoint's size divisor " + std::to_string(div));
  }
  if (ablation && ablation->config().depth_levels != model.config().depth_levels) {
    throw DomainError("evaluate: ablation checkpoint has a different architecture");
  }
  if (options.error_map_dir) std::filesystem::create_directories(*options.error_map_dir);

  EvalReport report;
  KernelBank bank(dataset.optics, 0.5);
  for (double dd : delta_d_sweep) {
    std::map<int, std::vector<PatchRecord>> tiles_by_phantom;
    int maps_written = 0;
    for (const PatchRecord& rec : dataset.validation) {
      auto it = tiles_by_phantom.find(rec.source_phantom);
      if (it == tiles_by_phantom.end()) {
        const PhantomSource& src = dataset.sources.at(rec.source_phantom);
        const Phantom phantom = synth_phantom(src.spec);
        const CapturePair pair =
            capture_pair(phantom.sample, src.absolute_offset_um, dd, bank,
                         NoiseSpec{dataset.options.noise_sigma, src.noise_seed});
        it = tiles_by_phantom
                 .emplace(rec.source_phantom, tile_capture(pair, dataset.options.patch_px,
                                                           rec.source_phantom, src.true_cell_count))
                 .first;
      }
      const auto match = std::find_if(it->second.begin(), it->second.end(), [&](const PatchRecord& r) {
        return r.tile_x == rec.tile_x && r.tile_y == rec.tile_y && r.rotation == rec.rotation;
      });
      if (match == it->second.end()) throw DomainError("evaluate: record " + rec.id() + " not found");
      const Image out = infer(model, match->y1, match->y2);
      EvalRow row;
      row.record = rec.id();
      row.phantom = rec.source_phantom;
      row.delta_d_um = dd;
      row.absolute_offset_um = match->absolute_offset_um;
      row.psnr_y1 = psnr(match->y1, match->ground_truth);
      row.psnr_y2 = psnr(match->y2, match->ground_truth);
      row.psnr_output = psnr(out, match->ground_truth);
      if (ablation) row.psnr_ablation = psnr(infer(*ablation, match->y1, match->y2), match->ground_truth);
      report.rows.push_back(row);

      if (options.error_map_dir && maps_written < options.error_maps_per_group) {
        const std::string stem = "errmap_dd" + format_um(dd) + "_" + rec.id();
        const auto y1_path = *options.error_map_dir / (stem + "_y1.png");
        const auto out_path = *options.error_map_dir / (stem + "_out.png");
        write_png(y1_path, error_map(match->y1, match->ground_truth, options.error_map_ceiling));
        write_png(out_path, error_map(out, match->ground_truth, options.error_map_ceiling));
        report.error_maps.push_back(y1_path.filename().string());
        report.error_maps.push_back(out_path.filename().string());
        ++maps_written;
      }
    }
  }
  report.groups = aggregate(report.rows);
  return report;
}

std::vector<CellCountRow> cell_count_fidelity(const std::vector<PhantomSource>& sources,
                                              double delta_d_um, double noise_sigma,
                                              const OpticalConfig& cfg, TsvaModel& model) {
  KernelBank bank(cfg, 0.5);
  std::vector<CellCountRow> rows;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const PhantomSource& src = sources[i];
    const Phantom phantom = synth_phantom(src.spec);
    const CapturePair pair = capture_pair(phantom.sample, src.absolute_offset_um, delta_d_um, bank,
                                          NoiseSpec{noise_sigma, src.noise_seed});
    const Image out = infer(model, pair.y1, pair.y2);
    CellCountRow row;
    row.phantom = static_cast<int>(i);
    row.true_count = phantom.true_cell_count();
    row.count_ground_truth = cell_count(pair.ground_truth);
    row.count_output = cell_count(out);
    row.count_y1 = cell_count(pair.y1);
    rows.push_back(row);
  }
  return rows;
}

namespace {

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

json stat_json(const Stat& s) { return json{{"mean", s.mean}, {"sd", s.sd}}; }

json groups_json(const std::vector<EvalGroup>& groups) {
  json arr = json::array();
  for (const auto& g : groups) {
    json j{{"delta_d_um", g.delta_d_um},
           {"count", g.count},
           {"psnr_y1", stat_json(g.y1)},
           {"psnr_y2", stat_json(g.y2)},
           {"psnr_output", stat_json(g.output)}};
    if (g.ablation) j["psnr_ablation"] = stat_json(*g.ablation);
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace

std::string report_csv(const EvalReport& report) {
  std::string out = "record,phantom,delta_d_um,absolute_offset_um,psnr_y1,psnr_y2,psnr_output,psnr_ablation\n";
  for (const auto& r : report.rows) {
    out += r.record + "," + std::to_string(r.phantom) + "," + fixed(r.delta_d_um) + "," +
           fixed(r.absolute_offset_um) + "," + fixed(r.psnr_y1) + "," + fixed(r.psnr_y2) + "," +
           fixed(r.psnr_output) + "," + (r.psnr_ablation ? fixed(*r.psnr_ablation) : "") + "\n";
  }
  return out;
}

std::string summary_json(const EvalReport& report) {
  json j;
  j["psnr_peak"] = report.peak;
  j["records"] = report.rows.size();
  j["groups"] = groups_json(report.groups);
  json cells = json::array();
  for (const auto& c : report.cell_counts) {
    cells.push_back(json{{"phantom", c.phantom},
                         {"true_count", c.true_count},
                         {"count_ground_truth", c.count_ground_truth},
                         {"count_output", c.count_output},
                         {"count_y1", c.count_y1}});
  }
  j["cell_counts"] = cells;
  j["error_maps"] = report.error_maps;
  // Orientation only: mean PSNR published for real pathology data at full
  // scale. Not comparable to synthetic desk-scale numbers.
  j["published_reference_db"] = json{{"two_shot_network_mean", 42.25},
                                     {"single_input_unet_mean", 39.44}};
  return j.dump(2) + "\n";
}

std::string scan_report_json(const EvalReport& report) {
  json j;
  j["psnr_peak"] = report.peak;
  if (report.initial_focal_plane_um) j["initial_focal_plane_um"] = *report.initial_focal_plane_um;
  if (report.shots) {
    j["shots"] = json{{"two_shot", report.shots->two_shot},
                      {"conventional", report.shots->conventional}};
  }
  json tiles = json::array();
  for (const auto& r : report.rows) {
    tiles.push_back(json{{"tile", r.record},
                         {"absolute_offset_um", r.absolute_offset_um},
                         {"psnr_y1", r.psnr_y1},
                         {"psnr_y2", r.psnr_y2},
                         {"psnr_output", r.psnr_output}});
  }
  j["tiles"] = tiles;
  j["groups"] = groups_json(report.groups);
  return j.dump(2) + "\n";
}

}  // namespace vaf
