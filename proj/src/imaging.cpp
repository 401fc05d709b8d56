#include "vaf/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>

#include "vaf/error.hpp"
#include "vaf/rng.hpp"

namespace vaf {

Image convolve2d(const Image& image, const Image& kernel) {
  if (kernel.width() % 2 == 0 || kernel.height() % 2 == 0) {
    throw ShapeError("convolve2d: kernel sides must be odd");
  }
  if (kernel.width() > image.width() || kernel.height() > image.height()) {
    throw ShapeError("convolve2d: kernel larger than image");
  }
  const int rx = kernel.width() / 2;
  const int ry = kernel.height() / 2;
  const Image padded = pad_reflect(image, rx, ry, rx, ry);
  const int w = image.width();
  const int h = image.height();
  const int pw = padded.width();
  Image out(w, h);
  // out(x, y) = sum k(kx, ky) * in(x - (kx - rx), y - (ky - ry)), accumulated
  // tap by tap so the inner loop runs over contiguous rows.
  for (int ky = 0; ky < kernel.height(); ++ky) {
    for (int kx = 0; kx < kernel.width(); ++kx) {
      const double wgt = kernel.at(kx, ky);
      if (wgt == 0.0) continue;
      const int oy = 2 * ry - ky;
      const int ox = 2 * rx - kx;
      for (int y = 0; y < h; ++y) {
        const double* src = padded.data() + static_cast<std::size_t>(y + oy) * pw + ox;
        double* dst = out.data() + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x) dst[x] += wgt * src[x];
      }
    }
  }
  return out;
}

void DepthLayeredSample::validate() const {
  if (layers.empty()) throw DomainError("depth-layered sample has no layers");
  if (!(layer_spacing_um > 0.0)) throw DomainError("layer spacing must be positive");
  std::set<int> seen;
  for (const auto& layer : layers) {
    if (!seen.insert(layer.depth).second) {
      throw DomainError("duplicate depth index " + std::to_string(layer.depth));
    }
    if (!layer.image.same_shape(layers.front().image) || layer.image.empty()) {
      throw ShapeError("all depth layers must share one non-empty shape");
    }
    for (double v : layer.image.pixels()) {
      if (!(v >= 0.0 && v <= 1.0)) throw DomainError("layer pixel outside [0, 1]");
    }
  }
}

Image DepthLayeredSample::flatten() const {
  if (layers.empty()) throw DomainError("depth-layered sample has no layers");
  Image sum(width(), height());
  for (const auto& layer : layers) sum += layer.image;
  return sum;
}

KernelBank::KernelBank(OpticalConfig cfg, double step_um) : cfg_(cfg), step_um_(step_um) {
  cfg_.validate();
  if (!(step_um > 0.0)) throw DomainError("kernel bank step must be positive");
}

const PsfKernel& KernelBank::get(int steps) {
  auto it = cache_.find(steps);
  if (it == cache_.end()) {
    it = cache_.emplace(steps, build_kernel(steps * step_um_, cfg_)).first;
  }
  return it->second;
}

void KernelBank::set(int steps, PsfKernel kernel) {
  if (kernel.samples.width() % 2 == 0 || kernel.samples.height() % 2 == 0) {
    throw ShapeError("kernel sides must be odd");
  }
  cache_.insert_or_assign(steps, std::move(kernel));
}

int to_grid_steps(double value_um, double step_um) {
  if (!std::isfinite(value_um)) throw DomainError("non-finite offset");
  const double ratio = value_um / step_um;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-9) {
    throw DomainError("offset " + std::to_string(value_um) + " um is not a multiple of " +
                      std::to_string(step_um) + " um");
  }
  return static_cast<int>(rounded);
}

Image render(const DepthLayeredSample& sample, int shift_layers, KernelBank& bank) {
  sample.validate();
  if (std::abs(bank.step_um() - sample.layer_spacing_um) > 1e-12) {
    throw DomainError("kernel bank step does not match the sample layer spacing");
  }
  Image out(sample.width(), sample.height());
  // Fixed summation order: layers in stored order.
  for (const auto& layer : sample.layers) {
    const int m = layer.depth - sample.in_focus_index - shift_layers;
    out += convolve2d(layer.image, bank.get(m).samples);
  }
  return out;
}

Image render(const DepthLayeredSample& sample, int shift_layers, const OpticalConfig& cfg) {
  KernelBank bank(cfg, sample.layer_spacing_um);
  return render(sample, shift_layers, bank);
}

Image add_sensor_noise(const Image& image, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw DomainError("noise sigma must be non-negative");
  if (sigma == 0.0) return image;
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> dist(0.0, sigma);
  Image out = image;
  for (double& v : out.pixels()) v = std::clamp(v + dist(gen), 0.0, 1.0);
  return out;
}

CapturePair capture_pair(const DepthLayeredSample& sample, double absolute_offset_um,
                         double delta_d_um, KernelBank& bank, const NoiseSpec& noise) {
  sample.validate();
  if (!(delta_d_um > 0.0)) throw DomainError("capture_pair: delta D must be positive");
  const double spacing = sample.layer_spacing_um;
  const int offset = to_grid_steps(absolute_offset_um, spacing);
  const int dd = to_grid_steps(delta_d_um, spacing);

  Image minus = render(sample, offset - dd, bank);
  Image plus = render(sample, offset + dd, bank);
  if (noise.sigma > 0.0) {
    minus = add_sensor_noise(minus, noise.sigma, derive_seed(noise.seed, 0));
    plus = add_sensor_noise(plus, noise.sigma, derive_seed(noise.seed, 1));
  }
  SharperPair ordered = select_sharper(minus, plus);
  CapturePair pair;
  pair.y1 = std::move(ordered.y1);
  pair.y2 = std::move(ordered.y2);
  pair.y1_is_minus_side = ordered.first_is_y1;
  pair.ground_truth = render(sample, 0, bank);
  pair.delta_d_um = delta_d_um;
  pair.absolute_offset_um = absolute_offset_um;
  return pair;
}

CapturePair capture_pair(const DepthLayeredSample& sample, double absolute_offset_um,
                         double delta_d_um, const OpticalConfig& cfg, const NoiseSpec& noise) {
  KernelBank bank(cfg, sample.layer_spacing_um);
  return capture_pair(sample, absolute_offset_um, delta_d_um, bank, noise);
}

ZStack generate_zstack(const DepthLayeredSample& sample, double min_um, double max_um,
                       double step_um, KernelBank& bank, const NoiseSpec& noise) {
  if (!(step_um > 0.0)) throw DomainError("z-stack step must be positive");
  if (max_um < min_um) throw DomainError("z-stack range is empty");
  const int step = to_grid_steps(step_um, sample.layer_spacing_um);
  const int lo = to_grid_steps(min_um, sample.layer_spacing_um);
  const int hi = to_grid_steps(max_um, sample.layer_spacing_um);
  if ((hi - lo) % step != 0) throw DomainError("z-stack step does not divide the range");
  ZStack stack;
  std::uint64_t index = 0;
  for (int s = lo; s <= hi; s += step, ++index) {
    Image img = render(sample, s, bank);
    if (noise.sigma > 0.0) img = add_sensor_noise(img, noise.sigma, derive_seed(noise.seed, index));
    stack.push_back(StackEntry{s * sample.layer_spacing_um, std::move(img)});
  }
  return stack;
}

ZStack generate_zstack(const DepthLayeredSample& sample, double min_um, double max_um,
                       double step_um, const OpticalConfig& cfg, const NoiseSpec& noise) {
  KernelBank bank(cfg, sample.layer_spacing_um);
  return generate_zstack(sample, min_um, max_um, step_um, bank, noise);
}

}  // namespace vaf
