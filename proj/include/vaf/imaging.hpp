#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "vaf/focus.hpp"
#include "vaf/image.hpp"
#include "vaf/optics.hpp"

namespace vaf {

/// Direct spatial convolution with half-sample reflective borders. The kernel
/// must have odd sides no larger than the image. Output has the input shape.
Image convolve2d(const Image& image, const Image& kernel);

struct DepthLayer {
  int depth = 0;  // layer index m
  Image image;
};

/// Thick specimen approximated by discrete depth layers spaced
/// `layer_spacing_um` apart. Layer m is in focus when m == in_focus_index.
struct DepthLayeredSample {
  std::vector<DepthLayer> layers;
  double layer_spacing_um = 0.5;
  int in_focus_index = 0;

  void validate() const;
  int width() const { return layers.empty() ? 0 : layers.front().image.width(); }
  int height() const { return layers.empty() ? 0 : layers.front().image.height(); }
  /// Pixel-wise sum of all layers.
  Image flatten() const;
};

/// Lazily built PSF kernels indexed by integer defocus steps. Not safe for
/// concurrent use; give each worker its own bank.
class KernelBank {
 public:
  KernelBank(OpticalConfig cfg, double step_um);

  const PsfKernel& get(int steps);
  /// Replaces the kernel used for `steps` (e.g. an identity kernel).
  void set(int steps, PsfKernel kernel);
  const OpticalConfig& config() const noexcept { return cfg_; }
  double step_um() const noexcept { return step_um_; }

 private:
  OpticalConfig cfg_;
  double step_um_;
  std::map<int, PsfKernel> cache_;
};

/// Converts a physical distance to an integer count of `step_um`; throws
/// DomainError when it is not grid-aligned.
int to_grid_steps(double value_um, double step_um);

/// sum_m x_{m+shift} (*) h_m. Layers shifted past the stack contribute nothing.
Image render(const DepthLayeredSample& sample, int shift_layers, KernelBank& bank);
Image render(const DepthLayeredSample& sample, int shift_layers, const OpticalConfig& cfg);

struct NoiseSpec {
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

/// Adds i.i.d. N(0, sigma^2) noise and clamps to [0, 1]. sigma == 0 returns
/// the input untouched.
Image add_sensor_noise(const Image& image, double sigma, std::uint64_t seed);

struct CapturePair {
  Image y1;
  Image y2;
  Image ground_truth;
  double delta_d_um = 0.0;
  double absolute_offset_um = 0.0;
  bool y1_is_minus_side = true;
};

/// Renders captures at (offset - dd) and (offset + dd), plus the in-focus
/// ground truth, then orders them by Brenner score (minus side wins ties).
CapturePair capture_pair(const DepthLayeredSample& sample, double absolute_offset_um,
                         double delta_d_um, KernelBank& bank, const NoiseSpec& noise = {});
CapturePair capture_pair(const DepthLayeredSample& sample, double absolute_offset_um,
                         double delta_d_um, const OpticalConfig& cfg,
                         const NoiseSpec& noise = {});

/// One rendering per offset in [min_um, max_um] at step_um, inclusive.
ZStack generate_zstack(const DepthLayeredSample& sample, double min_um, double max_um,
                       double step_um, KernelBank& bank, const NoiseSpec& noise = {});
ZStack generate_zstack(const DepthLayeredSample& sample, double min_um, double max_um,
                       double step_um, const OpticalConfig& cfg, const NoiseSpec& noise = {});

}  // namespace vaf
