#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace vaf::nn {

struct Shape4 {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const noexcept {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
  std::size_t sample() const noexcept { return static_cast<std::size_t>(c) * h * w; }
  std::string str() const;
  friend bool operator==(const Shape4&, const Shape4&) = default;
};

/// Allocator with cache-line alignment, so vectorized kernels see the same
/// memory layout on every run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlignment));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <class U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept {
    return true;
  }
};

using AlignedBuffer = std::vector<double, AlignedAllocator<double>>;

/// Dense NCHW array of doubles.
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(Shape4 shape, double fill = 0.0);
  Tensor4(Shape4 shape, std::vector<double> values);

  const Shape4& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  double* sample(int n) noexcept { return values_.data() + n * shape_.sample(); }
  const double* sample(int n) const noexcept { return values_.data() + n * shape_.sample(); }
  double* plane(int n, int c) noexcept { return sample(n) + c * shape_.plane(); }
  const double* plane(int n, int c) const noexcept { return sample(n) + c * shape_.plane(); }

  double& at(int n, int c, int h, int w) noexcept {
    return values_[((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }
  double at(int n, int c, int h, int w) const noexcept {
    return values_[((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }

  void fill(double v);
  Tensor4& operator+=(const Tensor4& other);

  friend bool operator==(const Tensor4&, const Tensor4&) = default;

 private:
  Shape4 shape_{0, 0, 0, 0};
  AlignedBuffer values_;
};

/// Batch rows [begin, begin + count) as a new tensor.
Tensor4 slice_batch(const Tensor4& t, int begin, int count);
/// Stacks tensors with equal C, H, W along the batch axis.
Tensor4 stack_batch(const std::vector<const Tensor4*>& parts);

struct Parameter {
  Tensor4 value;
  Tensor4 grad;
};

/// Named learnable tensors with paired gradients, iterated in name order.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Shape4 shape);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  void zero_grad();
  std::size_t scalar_count() const;
  std::size_t size() const noexcept { return params_.size(); }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Parameter> params_;
};

/// Non-learnable named state (batch-norm running statistics).
using BufferStore = std::map<std::string, Tensor4>;

// ---- layers ---------------------------------------------------------------
// Backward functions accumulate parameter gradients into the given buffers
// and return the gradient with respect to the layer input.

/// 3x3 convolution, stride 1, zero padding 1. weight (Cout, Cin, 3, 3), bias (1, Cout, 1, 1).
Tensor4 conv3x3_forward(const Tensor4& x, const Tensor4& weight, const Tensor4& bias);
Tensor4 conv3x3_backward(const Tensor4& x, const Tensor4& weight, const Tensor4& dy,
                         Tensor4& dweight, Tensor4& dbias, bool need_dx = true);

/// Pointwise projection. weight (Cout, Cin, 1, 1), bias (1, Cout, 1, 1).
Tensor4 conv1x1_forward(const Tensor4& x, const Tensor4& weight, const Tensor4& bias);
Tensor4 conv1x1_backward(const Tensor4& x, const Tensor4& weight, const Tensor4& dy,
                         Tensor4& dweight, Tensor4& dbias);

Tensor4 relu_forward(const Tensor4& x);
/// `y` is the forward output; the gradient passes where y > 0.
Tensor4 relu_backward(const Tensor4& y, const Tensor4& dy);

struct PoolIndices {
  std::vector<std::int32_t> argmax;  // flat index within the input plane
};
Tensor4 maxpool2x2_forward(const Tensor4& x, PoolIndices& indices);
Tensor4 maxpool2x2_backward(const Tensor4& dy, const PoolIndices& indices, const Shape4& input);

/// Transposed convolution, kernel 2, stride 2. weight (Cin, Cout, 2, 2), bias (1, Cout, 1, 1).
Tensor4 upconv2x2_forward(const Tensor4& x, const Tensor4& weight, const Tensor4& bias);
Tensor4 upconv2x2_backward(const Tensor4& x, const Tensor4& weight, const Tensor4& dy,
                           Tensor4& dweight, Tensor4& dbias);

Tensor4 concat_channels(const std::vector<const Tensor4*>& parts);
std::vector<Tensor4> split_channels(const Tensor4& dy, const std::vector<int>& channels);

enum class Mode { kTrain, kEval };

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

struct BatchNormCache {
  std::vector<double> mean;
  std::vector<double> inv_std;
  Mode mode = Mode::kTrain;
};

/// Per-channel normalization over (N, H, W). Train mode uses batch statistics
/// and updates the running ones (unbiased variance); eval mode uses running stats.
Tensor4 batchnorm_forward(const Tensor4& x, const Tensor4& gamma, const Tensor4& beta, Mode mode,
                          Tensor4& running_mean, Tensor4& running_var, BatchNormCache& cache);
Tensor4 batchnorm_backward(const Tensor4& x, const Tensor4& gamma, const Tensor4& dy,
                           const BatchNormCache& cache, Tensor4& dgamma, Tensor4& dbeta);

struct LossResult {
  double value = 0.0;
  Tensor4 grad;  // dL / d prediction
};

/// L = (1/N) * sum_i ||target_i - prediction_i||^2 with N the batch size.
LossResult mse_loss(const Tensor4& prediction, const Tensor4& target);

// ---- optimizer ------------------------------------------------------------

struct AdamState {
  double learning_rate = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::map<std::string, Tensor4> first_moment;
  std::map<std::string, Tensor4> second_moment;
};

void adam_step(ParamStore& params, AdamState& state);

// ---- gradient checking ----------------------------------------------------

struct GradCheckEval {
  double loss = 0.0;
  /// Identifies the active piecewise-linear region (ReLU masks, pool argmax).
  /// Coordinates whose +h / -h evaluations land in different regions are
  /// skipped as non-differentiable.
  std::uint64_t region = 0;
};

struct GradCheckTarget {
  std::string name;
  Tensor4* value = nullptr;           // perturbed in place
  const Tensor4* analytic = nullptr;  // gradient to compare
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

/// Central finite differences on every coordinate of every target.
/// relative error = |a - n| / max(|a|, |n|, abs_floor).
GradCheckReport grad_check(const std::function<GradCheckEval()>& evaluate,
                           const std::vector<GradCheckTarget>& targets, double step = 1e-5,
                           double abs_floor = 1e-6);

std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) noexcept;
std::uint64_t relu_region_hash(std::uint64_t seed, const Tensor4& activated);
std::uint64_t pool_region_hash(std::uint64_t seed, const PoolIndices& indices);

}  // namespace vaf::nn
