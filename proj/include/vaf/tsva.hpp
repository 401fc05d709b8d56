#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "vaf/image.hpp"
#include "vaf/nncore.hpp"
#include "vaf/phantom.hpp"

namespace vaf {

struct TsvaConfig {
  int depth_levels = 3;    // number of 2x2 downsamplings
  int base_channels = 16;  // channels at full resolution, doubled per level
  int input_channels = 1;
  /// Ablation: the same architecture fed Y1 on both contracting paths.
  bool single_input = false;

  void validate() const;
  int channels_at(int level) const { return base_channels << level; }
  int size_divisor() const { return 1 << depth_levels; }

  friend bool operator==(const TsvaConfig&, const TsvaConfig&) = default;
};

struct BlockTrace {
  nn::Tensor4 conv;  // pre-normalization
  nn::BatchNormCache bn;
  nn::Tensor4 act;
};

struct EncoderLevelTrace {
  BlockTrace a;
  BlockTrace b;  // b.act is the skip feature
  nn::Tensor4 pooled;
  nn::PoolIndices pool;
};

struct DecoderLevelTrace {
  nn::Tensor4 up;
  nn::Tensor4 cat;  // (decoder, left skip, right skip)
  BlockTrace a;
  BlockTrace b;
};

/// Everything forward() keeps for backward(). The encoder runs once on the
/// stacked batch [Y1; Y2], so its traces carry 2N samples.
struct TsvaTrace {
  int batch = 0;
  nn::Mode mode = nn::Mode::kEval;
  nn::Tensor4 stacked_input;
  std::vector<EncoderLevelTrace> encoder;
  nn::Tensor4 bottleneck_input;
  BlockTrace bottleneck_a;
  BlockTrace bottleneck_b;
  std::vector<DecoderLevelTrace> decoder;  // indexed by level
  nn::Tensor4 projection;
};

class TsvaModel {
 public:
  static TsvaModel build(const TsvaConfig& config, std::uint64_t seed);
  /// Parameters and buffers allocated but left at zero; used when loading.
  static TsvaModel allocate(const TsvaConfig& config);

  const TsvaConfig& config() const noexcept { return config_; }
  nn::ParamStore& params() noexcept { return params_; }
  const nn::ParamStore& params() const noexcept { return params_; }
  nn::BufferStore& buffers() noexcept { return buffers_; }
  const nn::BufferStore& buffers() const noexcept { return buffers_; }

  /// network(y1, y2) + y1. Train mode uses batch statistics and updates the
  /// running ones.
  nn::Tensor4 forward(const nn::Tensor4& y1, const nn::Tensor4& y2, nn::Mode mode);
  nn::Tensor4 forward(const nn::Tensor4& y1, const nn::Tensor4& y2, nn::Mode mode,
                      TsvaTrace& trace);
  /// Accumulates parameter gradients for d(output).
  void backward(const TsvaTrace& trace, const nn::Tensor4& doutput);

  std::uint64_t region_signature(const TsvaTrace& trace) const;

  /// Zeroes the final projection so forward() reduces to the identity on Y1.
  void zero_projection();

  static std::size_t analytic_parameter_count(const TsvaConfig& config);

 private:
  explicit TsvaModel(TsvaConfig config) : config_(config) {}
  void declare(bool initialise, std::uint64_t seed);

  TsvaConfig config_;
  nn::ParamStore params_;
  nn::BufferStore buffers_;
};

nn::Tensor4 images_to_tensor(const std::vector<const Image*>& images);
Image tensor_to_image(const nn::Tensor4& t, int n);

struct TrainOptions {
  int epochs = 50;
  int batch_size = 20;
  std::uint64_t seed = 11;
  double learning_rate = 0.0005;
  /// Called after each epoch with (epoch, train loss, validation loss).
  std::function<void(int, double, double)> on_epoch;
};

struct TrainingReport {
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  int best_epoch = 0;  // 1-based
};

struct TrainResult {
  TsvaModel best;  // best-validation weights
  nn::AdamState optimizer;
  TrainingReport report;
};

TrainResult train(TsvaModel model, const DatasetSplit& dataset, const TrainOptions& options);

/// Mean per-image squared error (the training loss) in eval mode.
double evaluation_loss(TsvaModel& model, const std::vector<PatchRecord>& records, int batch_size);

/// Eval-mode recovery of the in-focus image. Inputs are re-ordered by Brenner
/// score, reflect-padded to the size divisor and cropped back; output is
/// clamped to [0, 1].
Image infer(TsvaModel& model, const Image& a, const Image& b);

}  // namespace vaf
