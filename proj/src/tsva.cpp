#include "vaf/tsva.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <string>

#include "vaf/error.hpp"
#include "vaf/focus.hpp"

namespace vaf {

using nn::Mode;
using nn::Shape4;
using nn::Tensor4;

namespace {

std::string level_name(const char* part, int level) {
  return std::string(part) + "." + std::to_string(level);
}

struct BlockParams {
  nn::Parameter* weight;
  nn::Parameter* bias;
  nn::Parameter* gamma;
  nn::Parameter* beta;
  Tensor4* running_mean;
  Tensor4* running_var;
};

BlockParams block_params(nn::ParamStore& params, nn::BufferStore& buffers,
                         const std::string& prefix) {
  return BlockParams{&params.at(prefix + ".conv.weight"), &params.at(prefix + ".conv.bias"),
                     &params.at(prefix + ".bn.gamma"),    &params.at(prefix + ".bn.beta"),
                     &buffers.at(prefix + ".bn.running_mean"),
                     &buffers.at(prefix + ".bn.running_var")};
}

// conv3x3 -> batch norm -> ReLU
void block_forward(const BlockParams& p, const Tensor4& in, Mode mode, BlockTrace& t) {
  t.conv = nn::conv3x3_forward(in, p.weight->value, p.bias->value);
  Tensor4 normed = nn::batchnorm_forward(t.conv, p.gamma->value, p.beta->value, mode,
                                         *p.running_mean, *p.running_var, t.bn);
  t.act = nn::relu_forward(normed);
}

Tensor4 block_backward(const BlockParams& p, const Tensor4& in, const BlockTrace& t,
                       const Tensor4& dact, bool need_dx) {
  Tensor4 dnorm = nn::relu_backward(t.act, dact);
  Tensor4 dconv = nn::batchnorm_backward(t.conv, p.gamma->value, dnorm, t.bn, p.gamma->grad,
                                         p.beta->grad);
  return nn::conv3x3_backward(in, p.weight->value, dconv, p.weight->grad, p.bias->grad, need_dx);
}

std::uint64_t block_region(std::uint64_t seed, const BlockTrace& t) {
  return nn::relu_region_hash(seed, t.act);
}

// Writes `part` into batch rows [begin, begin + part.n) of `dst`, accumulating.
void accumulate_batch_rows(Tensor4& dst, const Tensor4& part, int begin) {
  double* d = dst.sample(begin);
  const double* s = part.data();
  for (std::size_t i = 0; i < part.size(); ++i) d[i] += s[i];
}

}  // namespace

void TsvaConfig::validate() const {
  if (depth_levels < 2) throw DomainError("depth_levels must be >= 2");
  if (base_channels < 4) throw DomainError("base_channels must be >= 4");
  if (input_channels < 1) throw DomainError("input_channels must be >= 1");
  if (depth_levels > 10) throw DomainError("depth_levels is unreasonably large");
}

void TsvaModel::declare(bool initialise, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  auto conv_init = [&](nn::Parameter& p, double fan_in, double gain) {
    if (!initialise) return;
    std::normal_distribution<double> dist(0.0, std::sqrt(gain / fan_in));
    for (double& v : p.value.values()) v = dist(gen);
  };
  auto add_block = [&](const std::string& prefix, int cin, int cout) {
    auto& w = params_.add(prefix + ".conv.weight", Shape4{cout, cin, 3, 3});
    params_.add(prefix + ".conv.bias", Shape4{1, cout, 1, 1});
    auto& gamma = params_.add(prefix + ".bn.gamma", Shape4{1, cout, 1, 1});
    params_.add(prefix + ".bn.beta", Shape4{1, cout, 1, 1});
    buffers_.emplace(prefix + ".bn.running_mean", Tensor4(Shape4{1, cout, 1, 1}, 0.0));
    buffers_.emplace(prefix + ".bn.running_var", Tensor4(Shape4{1, cout, 1, 1}, 1.0));
    conv_init(w, 9.0 * cin, 2.0);
    if (initialise) gamma.value.fill(1.0);
  };

  const int levels = config_.depth_levels;
  for (int l = 0; l < levels; ++l) {
    const int cin = l == 0 ? config_.input_channels : config_.channels_at(l - 1);
    add_block(level_name("enc", l) + ".a", cin, config_.channels_at(l));
    add_block(level_name("enc", l) + ".b", config_.channels_at(l), config_.channels_at(l));
  }
  const int deep = config_.channels_at(levels);
  add_block("mid.a", 2 * config_.channels_at(levels - 1), deep);
  add_block("mid.b", deep, deep);
  for (int l = levels - 1; l >= 0; --l) {
    const int c = config_.channels_at(l);
    const int cin = config_.channels_at(l + 1);
    auto& up = params_.add(level_name("dec", l) + ".up.weight", Shape4{cin, c, 2, 2});
    params_.add(level_name("dec", l) + ".up.bias", Shape4{1, c, 1, 1});
    conv_init(up, cin, 2.0);
    add_block(level_name("dec", l) + ".a", 3 * c, c);
    add_block(level_name("dec", l) + ".b", c, c);
  }
  auto& head = params_.add("head.weight", Shape4{config_.input_channels, config_.base_channels, 1, 1});
  params_.add("head.bias", Shape4{1, config_.input_channels, 1, 1});
  conv_init(head, config_.base_channels, 1e-4);
}

TsvaModel TsvaModel::build(const TsvaConfig& config, std::uint64_t seed) {
  config.validate();
  TsvaModel model(config);
  model.declare(true, seed);
  return model;
}

TsvaModel TsvaModel::allocate(const TsvaConfig& config) {
  config.validate();
  TsvaModel model(config);
  model.declare(false, 0);
  return model;
}

std::size_t TsvaModel::analytic_parameter_count(const TsvaConfig& cfg) {
  // conv3x3 block: 9*cin*cout weights + cout bias + 2*cout batch-norm affine.
  auto block = [](std::size_t cin, std::size_t cout) { return 9 * cin * cout + 3 * cout; };
  const std::size_t levels = cfg.depth_levels;
  std::size_t total = 0;
  for (std::size_t l = 0; l < levels; ++l) {
    const std::size_t c = cfg.channels_at(static_cast<int>(l));
    const std::size_t cin = l == 0 ? cfg.input_channels : c / 2;
    total += block(cin, c) + block(c, c);
  }
  const std::size_t deep = cfg.channels_at(cfg.depth_levels);
  total += block(deep, deep) * 2;  // bottleneck input is 2 * (deep / 2) = deep channels
  for (std::size_t l = 0; l < levels; ++l) {
    const std::size_t c = cfg.channels_at(static_cast<int>(l));
    total += 2 * c * c * 4 + c;  // up-convolution from 2c to c
    total += block(3 * c, c) + block(c, c);
  }
  total += static_cast<std::size_t>(cfg.base_channels) * cfg.input_channels + cfg.input_channels;
  return total;
}

Tensor4 TsvaModel::forward(const Tensor4& y1, const Tensor4& y2, Mode mode) {
  TsvaTrace trace;
  return forward(y1, y2, mode, trace);
}

Tensor4 TsvaModel::forward(const Tensor4& y1, const Tensor4& y2, Mode mode, TsvaTrace& trace) {
  const Shape4 s = y1.shape();
  if (!(y2.shape() == s)) {
    throw ShapeError("forward: y1 " + s.str() + " and y2 " + y2.shape().str() + " differ");
  }
  if (s.c != config_.input_channels) throw ShapeError("forward: wrong input channel count");
  const int div = config_.size_divisor();
  if (s.h % div != 0 || s.w % div != 0) {
    throw ShapeError("forward: spatial size " + s.str() + " not divisible by " + std::to_string(div));
  }
  const int levels = config_.depth_levels;
  const int n = s.n;
  trace = TsvaTrace{};
  trace.batch = n;
  trace.mode = mode;
  trace.stacked_input = nn::stack_batch({&y1, &y2});
  trace.encoder.resize(levels);
  trace.decoder.resize(levels);

  const Tensor4* in = &trace.stacked_input;
  for (int l = 0; l < levels; ++l) {
    auto& lt = trace.encoder[l];
    const std::string prefix = level_name("enc", l);
    block_forward(block_params(params_, buffers_, prefix + ".a"), *in, mode, lt.a);
    block_forward(block_params(params_, buffers_, prefix + ".b"), lt.a.act, mode, lt.b);
    lt.pooled = nn::maxpool2x2_forward(lt.b.act, lt.pool);
    in = &lt.pooled;
  }
  {
    const Tensor4 left = nn::slice_batch(*in, 0, n);
    const Tensor4 right = nn::slice_batch(*in, n, n);
    trace.bottleneck_input = nn::concat_channels({&left, &right});
  }
  block_forward(block_params(params_, buffers_, "mid.a"), trace.bottleneck_input, mode,
                trace.bottleneck_a);
  block_forward(block_params(params_, buffers_, "mid.b"), trace.bottleneck_a.act, mode,
                trace.bottleneck_b);

  const Tensor4* x = &trace.bottleneck_b.act;
  for (int l = levels - 1; l >= 0; --l) {
    auto& dt = trace.decoder[l];
    const std::string prefix = level_name("dec", l);
    dt.up = nn::upconv2x2_forward(*x, params_.at(prefix + ".up.weight").value,
                                  params_.at(prefix + ".up.bias").value);
    const Tensor4& skip = trace.encoder[l].b.act;
    const Tensor4 left = nn::slice_batch(skip, 0, n);
    const Tensor4 right = nn::slice_batch(skip, n, n);
    dt.cat = nn::concat_channels({&dt.up, &left, &right});
    block_forward(block_params(params_, buffers_, prefix + ".a"), dt.cat, mode, dt.a);
    block_forward(block_params(params_, buffers_, prefix + ".b"), dt.a.act, mode, dt.b);
    x = &dt.b.act;
  }
  trace.projection =
      nn::conv1x1_forward(*x, params_.at("head.weight").value, params_.at("head.bias").value);
  Tensor4 out = trace.projection;
  out += y1;
  return out;
}

void TsvaModel::backward(const TsvaTrace& trace, const Tensor4& doutput) {
  const int levels = config_.depth_levels;
  const int n = trace.batch;
  auto& head_w = params_.at("head.weight");
  auto& head_b = params_.at("head.bias");
  Tensor4 d = nn::conv1x1_backward(trace.decoder[0].b.act, head_w.value, doutput, head_w.grad,
                                   head_b.grad);

  // Skip gradients in stacked (2N) layout, one per encoder level.
  std::vector<Tensor4> dskip(levels);
  for (int l = 0; l < levels; ++l) {
    const auto& dt = trace.decoder[l];
    const std::string prefix = level_name("dec", l);
    d = block_backward(block_params(params_, buffers_, prefix + ".b"), dt.a.act, dt.b, d, true);
    d = block_backward(block_params(params_, buffers_, prefix + ".a"), dt.cat, dt.a, d, true);
    const int c = config_.channels_at(l);
    auto parts = nn::split_channels(d, {c, c, c});
    dskip[l] = Tensor4(trace.encoder[l].b.act.shape());
    accumulate_batch_rows(dskip[l], parts[1], 0);
    accumulate_batch_rows(dskip[l], parts[2], n);
    const Tensor4& up_in = l == levels - 1 ? trace.bottleneck_b.act : trace.decoder[l + 1].b.act;
    auto& uw = params_.at(prefix + ".up.weight");
    auto& ub = params_.at(prefix + ".up.bias");
    d = nn::upconv2x2_backward(up_in, uw.value, parts[0], uw.grad, ub.grad);
  }
  d = block_backward(block_params(params_, buffers_, "mid.b"), trace.bottleneck_a.act,
                     trace.bottleneck_b, d, true);
  d = block_backward(block_params(params_, buffers_, "mid.a"), trace.bottleneck_input,
                     trace.bottleneck_a, d, true);
  {
    const int c = config_.channels_at(levels - 1);
    auto parts = nn::split_channels(d, {c, c});
    d = nn::stack_batch({&parts[0], &parts[1]});
  }
  for (int l = levels - 1; l >= 0; --l) {
    const auto& lt = trace.encoder[l];
    const std::string prefix = level_name("enc", l);
    Tensor4 dact = nn::maxpool2x2_backward(d, lt.pool, lt.b.act.shape());
    dact += dskip[l];
    d = block_backward(block_params(params_, buffers_, prefix + ".b"), lt.a.act, lt.b, dact, true);
    const Tensor4& in = l == 0 ? trace.stacked_input : trace.encoder[l - 1].pooled;
    d = block_backward(block_params(params_, buffers_, prefix + ".a"), in, lt.a, d, l > 0);
  }
}

std::uint64_t TsvaModel::region_signature(const TsvaTrace& trace) const {
  std::uint64_t h = 0x1234567ull;
  for (const auto& lt : trace.encoder) {
    h = block_region(h, lt.a);
    h = block_region(h, lt.b);
    h = nn::pool_region_hash(h, lt.pool);
  }
  h = block_region(h, trace.bottleneck_a);
  h = block_region(h, trace.bottleneck_b);
  for (const auto& dt : trace.decoder) {
    h = block_region(h, dt.a);
    h = block_region(h, dt.b);
  }
  return h;
}

void TsvaModel::zero_projection() {
  params_.at("head.weight").value.fill(0.0);
  params_.at("head.bias").value.fill(0.0);
}

Tensor4 images_to_tensor(const std::vector<const Image*>& images) {
  if (images.empty()) throw ShapeError("images_to_tensor: no images");
  const int w = images.front()->width();
  const int h = images.front()->height();
  Tensor4 t(Shape4{static_cast<int>(images.size()), 1, h, w});
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i]->width() != w || images[i]->height() != h) {
      throw ShapeError("images_to_tensor: images differ in shape");
    }
    std::memcpy(t.sample(static_cast<int>(i)), images[i]->data(), sizeof(double) * images[i]->size());
  }
  return t;
}

Image tensor_to_image(const Tensor4& t, int n) {
  const Shape4 s = t.shape();
  if (s.c != 1 || n < 0 || n >= s.n) throw ShapeError("tensor_to_image: expects one channel");
  return Image(s.w, s.h, std::vector<double>(t.sample(n), t.sample(n) + s.plane()));
}

namespace {

struct Batch {
  Tensor4 y1;
  Tensor4 y2;
  Tensor4 gt;
};

Batch gather(const std::vector<PatchRecord>& records, std::span<const std::size_t> idx,
             bool single_input) {
  std::vector<const Image*> a;
  std::vector<const Image*> b;
  std::vector<const Image*> g;
  for (std::size_t i : idx) {
    a.push_back(&records[i].y1);
    b.push_back(single_input ? &records[i].y1 : &records[i].y2);
    g.push_back(&records[i].ground_truth);
  }
  return Batch{images_to_tensor(a), images_to_tensor(b), images_to_tensor(g)};
}

}  // namespace

double evaluation_loss(TsvaModel& model, const std::vector<PatchRecord>& records, int batch_size) {
  if (records.empty()) return 0.0;
  std::vector<std::size_t> idx(records.size());
  std::iota(idx.begin(), idx.end(), 0);
  double total = 0.0;
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    const std::size_t count = std::min<std::size_t>(batch_size, idx.size() - start);
    Batch b = gather(records, std::span(idx).subspan(start, count), model.config().single_input);
    Tensor4 out = model.forward(b.y1, b.y2, Mode::kEval);
    total += nn::mse_loss(out, b.gt).value * static_cast<double>(count);
  }
  return total / static_cast<double>(records.size());
}

TrainResult train(TsvaModel model, const DatasetSplit& dataset, const TrainOptions& options) {
  if (dataset.train.empty()) throw DomainError("train: empty training set");
  if (options.batch_size < 1 || static_cast<std::size_t>(options.batch_size) > dataset.train.size()) {
    throw DomainError("train: batch size must be in [1, training set size]");
  }
  if (options.epochs < 1) throw DomainError("train: epochs must be >= 1");
  const bool single = model.config().single_input;
  nn::AdamState adam;
  adam.learning_rate = options.learning_rate;
  TrainingReport report;
  std::optional<TsvaModel> best;
  double best_loss = 0.0;
  std::vector<std::size_t> order(dataset.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 gen(options.seed);

  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), gen);
    double epoch_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t count = std::min<std::size_t>(options.batch_size, order.size() - start);
      Batch b = gather(dataset.train, std::span(order).subspan(start, count), single);
      TsvaTrace trace;
      model.params().zero_grad();
      Tensor4 out = model.forward(b.y1, b.y2, Mode::kTrain, trace);
      nn::LossResult loss = nn::mse_loss(out, b.gt);
      model.backward(trace, loss.grad);
      nn::adam_step(model.params(), adam);
      epoch_sum += loss.value * static_cast<double>(count);
      seen += count;
    }
    const double train_loss = epoch_sum / static_cast<double>(seen);
    const double val_loss = dataset.validation.empty()
                                ? train_loss
                                : evaluation_loss(model, dataset.validation, options.batch_size);
    report.train_loss.push_back(train_loss);
    report.validation_loss.push_back(val_loss);
    if (!best || val_loss < best_loss) {
      best = model;
      best_loss = val_loss;
      report.best_epoch = epoch;
    }
    if (options.on_epoch) options.on_epoch(epoch, train_loss, val_loss);
  }
  model.params().zero_grad();
  best->params().zero_grad();
  return TrainResult{std::move(*best), std::move(adam), std::move(report)};
}

Image infer(TsvaModel& model, const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ShapeError("infer: input shapes differ");
  SharperPair ordered = select_sharper(a, b);
  const int div = model.config().size_divisor();
  const int w = a.width();
  const int h = a.height();
  const int pw = (w + div - 1) / div * div;
  const int ph = (h + div - 1) / div * div;
  Image y1 = ordered.y1;
  Image y2 = model.config().single_input ? ordered.y1 : ordered.y2;
  if (pw != w || ph != h) {
    y1 = pad_reflect(y1, 0, 0, pw - w, ph - h);
    y2 = pad_reflect(y2, 0, 0, pw - w, ph - h);
  }
  Tensor4 out = model.forward(images_to_tensor({&y1}), images_to_tensor({&y2}), Mode::kEval);
  Image result = tensor_to_image(out, 0);
  if (pw != w || ph != h) result = crop(result, 0, 0, w, h);
  return clamp01(std::move(result));
}

}  // namespace vaf
