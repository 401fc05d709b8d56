#include "vaf/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "vaf/error.hpp"
#include "vaf/focus.hpp"
#include "vaf/rng.hpp"

namespace vaf {
namespace {

// Box blur along rows then columns, reflective borders.
Image box_blur(const Image& img, int radius) {
  const int w = img.width();
  const int h = img.height();
  const double norm = 1.0 / (2 * radius + 1);
  Image tmp(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int d = -radius; d <= radius; ++d) s += img.at(reflect_index(x + d, w), y);
      tmp.at(x, y) = s * norm;
    }
  }
  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int d = -radius; d <= radius; ++d) s += tmp.at(x, reflect_index(y + d, h));
      out.at(x, y) = s * norm;
    }
  }
  return out;
}

Image background_texture(int w, int h, std::mt19937_64& gen, double amplitude) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Image noise(w, h);
  for (double& v : noise.pixels()) v = normal(gen);
  Image smooth = box_blur(box_blur(noise, 2), 2);
  const double m = mean(smooth);
  double var = 0.0;
  for (double v : smooth.pixels()) var += (v - m) * (v - m);
  const double sd = std::sqrt(var / static_cast<double>(smooth.size()));
  for (double& v : smooth.pixels()) v = amplitude * (v - m) / sd;
  return smooth;
}

double ramp(double signed_distance_px) { return std::clamp(signed_distance_px + 0.5, 0.0, 1.0); }

}  // namespace

void PhantomSpec::validate() const {
  if (width < 64 || height < 64) throw DomainError("phantom must be at least 64x64");
  if (depth_relief_layers < 1 || depth_relief_layers % 2 == 0) {
    throw DomainError("depth_relief_layers must be a positive odd integer");
  }
  if (cell_count_range.min < 0 || cell_count_range.max < cell_count_range.min) {
    throw DomainError("invalid cell count range");
  }
  if (!(cell_radius_px_range.min > 0.0) || cell_radius_px_range.max < cell_radius_px_range.min) {
    throw DomainError("invalid cell radius range");
  }
  if (!(background_level >= 0.0 && background_level <= 1.0)) {
    throw DomainError("background level must lie in [0, 1]");
  }
  if (cell_contrast_range.max < cell_contrast_range.min || cell_contrast_range.min < 0.0) {
    throw DomainError("invalid cell contrast range");
  }
}

Phantom synth_phantom(const PhantomSpec& spec) {
  spec.validate();
  std::mt19937_64 gen(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(gen); };

  const int w = spec.width;
  const int h = spec.height;
  const int layers = spec.depth_relief_layers;
  const int half = layers / 2;

  Image texture = background_texture(w, h, gen, 0.025);
  Image composite(w, h);
  for (std::size_t i = 0; i < composite.size(); ++i) {
    composite.pixels()[i] = std::clamp(spec.background_level + texture.pixels()[i], 0.0, 1.0);
  }
  std::vector<Image> alpha(layers, Image(w, h));
  std::fill(alpha[half].pixels().begin(), alpha[half].pixels().end(), 1.0);

  std::uniform_int_distribution<int> count_dist(spec.cell_count_range.min,
                                                spec.cell_count_range.max);
  std::binomial_distribution<int> depth_dist(layers - 1, 0.5);
  const int count = count_dist(gen);

  Phantom result;
  for (int c = 0; c < count; ++c) {
    const double r = uniform(spec.cell_radius_px_range.min, spec.cell_radius_px_range.max);
    const double ry = r * uniform(0.7, 1.0);
    const double theta = uniform(0.0, std::numbers::pi);
    const double contrast = uniform(spec.cell_contrast_range.min, spec.cell_contrast_range.max);
    const int depth = depth_dist(gen) - half;

    // Rejection sampling keeps cells apart; after too many attempts the last
    // candidate is accepted so the requested count is always honoured.
    const double margin = r + 2.0;
    double cx = 0.0;
    double cy = 0.0;
    for (int attempt = 0; attempt < 4000; ++attempt) {
      cx = uniform(margin, w - 1 - margin);
      cy = uniform(margin, h - 1 - margin);
      bool clear = true;
      for (const auto& other : result.cells) {
        const double need = r + other.radius + spec.min_cell_gap_px;
        if (std::hypot(cx - other.cx, cy - other.cy) < need) {
          clear = false;
          break;
        }
      }
      if (clear) break;
    }

    struct Granule {
      double x, y, s;
    };
    std::vector<Granule> granules(3 + static_cast<int>(unit(gen) * 6));
    for (auto& g : granules) {
      const double a = uniform(0.0, 2.0 * std::numbers::pi);
      const double d = uniform(0.5, 0.85) * ry;
      g = Granule{cx + d * std::cos(a), cy + d * std::sin(a), uniform(0.8, 1.4)};
    }

    const double cos_t = std::cos(theta);
    const double sin_t = std::sin(theta);
    const double nucleus_scale = 0.45;
    const double cyto = spec.background_level - contrast;
    const double nucleus = std::max(0.05, spec.background_level - 1.9 * contrast);
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - r - 2)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + r + 2)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - r - 2)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + r + 2)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - cx;
        const double dy = y - cy;
        const double u = dx * cos_t + dy * sin_t;
        const double v = -dx * sin_t + dy * cos_t;
        const double d = std::sqrt((u / r) * (u / r) + (v / ry) * (v / ry));
        const double m = ramp((1.0 - d) * ry);
        if (m <= 0.0) continue;
        const double mn = ramp((1.0 - d / nucleus_scale) * nucleus_scale * ry);
        double value = (1.0 - mn) * cyto + mn * nucleus;
        for (const auto& g : granules) {
          const double gd2 = (x - g.x) * (x - g.x) + (y - g.y) * (y - g.y);
          value -= 0.12 * (1.0 - mn) * std::exp(-gd2 / (2.0 * g.s * g.s));
        }
        value = std::clamp(value, 0.0, 1.0);
        composite.at(x, y) = (1.0 - m) * composite.at(x, y) + m * value;
        for (auto& a : alpha) a.at(x, y) *= (1.0 - m);
        alpha[depth + half].at(x, y) += m;
      }
    }
    result.cells.push_back(PhantomCell{cx, cy, r, depth});
  }

  result.sample.layer_spacing_um = 0.5;
  result.sample.in_focus_index = 0;
  for (int l = 0; l < layers; ++l) {
    const auto apx = alpha[l].pixels();
    const bool used = std::any_of(apx.begin(), apx.end(), [](double a) { return a > 0.0; });
    if (!used && l != half) continue;
    Image layer(w, h);
    for (std::size_t i = 0; i < layer.size(); ++i) {
      layer.pixels()[i] = std::clamp(apx[i] * composite.pixels()[i], 0.0, 1.0);
    }
    result.sample.layers.push_back(DepthLayer{l - half, std::move(layer)});
  }
  return result;
}

double sample_absolute_offset(std::uint64_t rng_seed) {
  std::mt19937_64 gen(rng_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double z = normal(gen);
  const double snapped = std::round(z / kOffsetGridUm) * kOffsetGridUm;
  return std::clamp(snapped, -kOffsetClampUm, kOffsetClampUm) + 0.0;
}

double offset_probability(double offset_um) {
  const double k = std::round(offset_um / kOffsetGridUm);
  if (std::abs(offset_um - k * kOffsetGridUm) > 1e-9 || std::abs(offset_um) > kOffsetClampUm + 1e-9) {
    return 0.0;
  }
  auto cdf = [](double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); };
  const double lo = (k - 0.5) * kOffsetGridUm;
  const double hi = (k + 0.5) * kOffsetGridUm;
  const double top = kOffsetClampUm / kOffsetGridUm;
  if (k >= top) return 1.0 - cdf(lo);
  if (k <= -top) return cdf(hi);
  return cdf(hi) - cdf(lo);
}

std::string PatchRecord::id() const {
  return "p" + std::to_string(source_phantom) + "_x" + std::to_string(tile_x) + "_y" +
         std::to_string(tile_y) + "_r" + std::to_string(rotation * 90);
}

std::vector<PatchRecord> tile_capture(const CapturePair& capture, int patch_px,
                                      int source_phantom, int true_cell_count) {
  const Image& minus = capture.y1_is_minus_side ? capture.y1 : capture.y2;
  const Image& plus = capture.y1_is_minus_side ? capture.y2 : capture.y1;
  const int w = capture.ground_truth.width();
  const int h = capture.ground_truth.height();
  if (patch_px < 1 || patch_px > w || patch_px > h) {
    throw ShapeError("patch size exceeds the captured image");
  }
  if (w % patch_px != 0 || h % patch_px != 0) {
    throw ShapeError("patch size must divide the image dimensions");
  }
  std::vector<PatchRecord> out;
  for (int ty = 0; ty < h / patch_px; ++ty) {
    for (int tx = 0; tx < w / patch_px; ++tx) {
      const Image m = crop(minus, tx * patch_px, ty * patch_px, patch_px, patch_px);
      const Image p = crop(plus, tx * patch_px, ty * patch_px, patch_px, patch_px);
      const Image g = crop(capture.ground_truth, tx * patch_px, ty * patch_px, patch_px, patch_px);
      for (int rot = 0; rot < 4; ++rot) {
        SharperPair ordered = select_sharper(rotate90(m, rot), rotate90(p, rot));
        PatchRecord rec;
        rec.y1 = std::move(ordered.y1);
        rec.y2 = std::move(ordered.y2);
        rec.y1_is_minus_side = ordered.first_is_y1;
        rec.ground_truth = rotate90(g, rot);
        rec.delta_d_um = capture.delta_d_um;
        rec.absolute_offset_um = capture.absolute_offset_um;
        rec.source_phantom = source_phantom;
        rec.tile_x = tx;
        rec.tile_y = ty;
        rec.rotation = rot;
        rec.true_cell_count = true_cell_count;
        out.push_back(std::move(rec));
      }
    }
  }
  return out;
}

DatasetSplit build_dataset(const std::vector<PhantomSpec>& specs, const DatasetOptions& options,
                           const OpticalConfig& cfg) {
  if (specs.empty()) throw DomainError("build_dataset: no phantoms given");
  if (!(options.train_fraction > 0.0 && options.train_fraction < 1.0)) {
    throw DomainError("train fraction must lie in (0, 1)");
  }
  KernelBank bank(cfg, 0.5);
  std::vector<PatchRecord> records;
  DatasetSplit split;
  split.options = options;
  split.optics = cfg;
  split.split_seed = options.split_seed;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const Phantom phantom = synth_phantom(specs[i]);
    PhantomSource source;
    source.spec = specs[i];
    source.absolute_offset_um = sample_absolute_offset(derive_seed(options.seed, 2 * i));
    source.noise_seed = derive_seed(options.seed, 2 * i + 1);
    source.true_cell_count = phantom.true_cell_count();
    const CapturePair capture =
        capture_pair(phantom.sample, source.absolute_offset_um, options.delta_d_um, bank,
                     NoiseSpec{options.noise_sigma, source.noise_seed});
    auto tiles = tile_capture(capture, options.patch_px, static_cast<int>(i),
                              source.true_cell_count);
    std::move(tiles.begin(), tiles.end(), std::back_inserter(records));
    split.sources.push_back(source);
  }

  // Split by ground-truth tile so no tile (in any rotation) lands on both sides.
  std::vector<std::pair<int, int>> tiles;  // (phantom, tile index)
  std::vector<int> tile_of(records.size());
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    const int per_row = specs[rec.source_phantom].width / options.patch_px;
    std::pair<int, int> key{rec.source_phantom, rec.tile_y * per_row + rec.tile_x};
    if (tiles.empty() || tiles.back() != key) tiles.push_back(key);
    tile_of[r] = static_cast<int>(tiles.size()) - 1;
  }
  std::vector<int> order(tiles.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 gen(options.split_seed);
  std::shuffle(order.begin(), order.end(), gen);
  const auto n_train = static_cast<std::size_t>(
      std::llround(options.train_fraction * static_cast<double>(tiles.size())));
  std::vector<bool> in_train(tiles.size(), false);
  for (std::size_t k = 0; k < n_train && k < order.size(); ++k) in_train[order[k]] = true;
  for (std::size_t r = 0; r < records.size(); ++r) {
    (in_train[tile_of[r]] ? split.train : split.validation).push_back(std::move(records[r]));
  }
  return split;
}

std::vector<PhantomSpec> phantom_series(const PhantomSpec& base, int count,
                                        std::uint64_t first_seed) {
  std::vector<PhantomSpec> specs(count, base);
  for (int i = 0; i < count; ++i) specs[i].seed = first_seed + static_cast<std::uint64_t>(i);
  return specs;
}

}  // namespace vaf
