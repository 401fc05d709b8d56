#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "vaf/checkpoint.hpp"
#include "vaf/error.hpp"
#include "vaf/phantom.hpp"
#include "vaf/tsva.hpp"

using namespace vaf;
using namespace vaf::nn;
namespace fs = std::filesystem;

namespace {

Tensor4 random_images(int n, int side, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> d(0.0, 1.0);
  Tensor4 t(Shape4{n, 1, side, side});
  for (double& v : t.values()) v = d(gen);
  return t;
}

TsvaConfig toy_config() {
  TsvaConfig c;
  c.depth_levels = 2;
  c.base_channels = 4;
  return c;
}

/// Parameter count from the block recipe, written independently of the model.
std::size_t recipe_count(int depth, int base, int in) {
  auto ch = [&](int l) { return static_cast<std::size_t>(base) << l; };
  auto block = [](std::size_t cin, std::size_t cout) {
    return cin * cout * 9 + cout /*bias*/ + 2 * cout /*gamma, beta*/;
  };
  std::size_t total = 0;
  std::size_t cin = in;
  for (int l = 0; l < depth; ++l) {  // one shared encoder
    total += block(cin, ch(l)) + block(ch(l), ch(l));
    cin = ch(l);
  }
  total += block(2 * ch(depth - 1), ch(depth)) + block(ch(depth), ch(depth));
  for (int l = depth - 1; l >= 0; --l) {
    total += ch(l + 1) * ch(l) * 4 + ch(l);                         // up-convolution
    total += block(3 * ch(l), ch(l)) + block(ch(l), ch(l));         // after dual skips
  }
  total += static_cast<std::size_t>(base) * in + in;                // 1x1 projection
  return total;
}

DatasetSplit toy_dataset(int phantoms) {
  PhantomSpec spec;
  spec.width = 64;
  spec.height = 64;
  spec.cell_count_range = {4, 6};
  DatasetOptions opt;
  opt.patch_px = 32;
  return build_dataset(phantom_series(spec, phantoms, 300), opt, OpticalConfig{});
}

}  // namespace

TEST_CASE("parameter count follows the block recipe with one shared encoder") {
  const TsvaConfig c = toy_config();
  TsvaConfig eight = c;
  eight.base_channels = 8;
  const TsvaModel m = TsvaModel::build(eight, 1);
  CHECK(m.params().scalar_count() == recipe_count(2, 8, 1));
  CHECK(TsvaModel::analytic_parameter_count(eight) == recipe_count(2, 8, 1));
  CHECK(TsvaModel::analytic_parameter_count(TsvaConfig{}) == recipe_count(3, 16, 1));
  CHECK(TsvaModel::build(TsvaConfig{}, 2).params().scalar_count() == recipe_count(3, 16, 1));

  // Encoder parameters appear once: no name carries a path marker.
  std::set<std::string> encoder;
  for (const auto& [name, p] : m.params()) {
    if (name.rfind("enc.", 0) == 0) encoder.insert(name);
    CHECK(name.find("left") == std::string::npos);
    CHECK(name.find("right") == std::string::npos);
  }
  CHECK(encoder.size() == 2 * 2 * 4);
}

TEST_CASE("config validation") {
  TsvaConfig c;
  c.depth_levels = 1;
  CHECK_THROWS_AS(TsvaModel::build(c, 0), DomainError);
  c = TsvaConfig{};
  c.base_channels = 2;
  CHECK_THROWS_AS(TsvaModel::build(c, 0), DomainError);
  CHECK(TsvaConfig{}.size_divisor() == 8);
}

TEST_CASE("builds are deterministic per seed") {
  const TsvaModel a = TsvaModel::build(toy_config(), 7);
  const TsvaModel b = TsvaModel::build(toy_config(), 7);
  const TsvaModel c = TsvaModel::build(toy_config(), 8);
  const Checkpoint ca{a, std::nullopt, {}};
  const Checkpoint cb{b, std::nullopt, {}};
  const Checkpoint cc{c, std::nullopt, {}};
  CHECK(serialize_checkpoint(ca) == serialize_checkpoint(cb));
  CHECK(serialize_checkpoint(ca) != serialize_checkpoint(cc));
}

TEST_CASE("output shape equals input shape") {
  std::mt19937_64 gen(3);
  TsvaModel m = TsvaModel::build(toy_config(), 3);
  for (int side : {32, 64, 128}) {
    const Tensor4 y1 = random_images(1, side, gen);
    const Tensor4 y2 = random_images(1, side, gen);
    CHECK(m.forward(y1, y2, Mode::kEval).shape() == y1.shape());
  }
  CHECK_THROWS_AS(m.forward(random_images(1, 30, gen), random_images(1, 30, gen), Mode::kEval), ShapeError);
  CHECK_THROWS_AS(m.forward(random_images(1, 32, gen), random_images(1, 16, gen), Mode::kEval), ShapeError);
}

TEST_CASE("zeroed projection makes forward the identity on y1") {
  std::mt19937_64 gen(4);
  TsvaModel m = TsvaModel::build(TsvaConfig{}, 4);
  m.zero_projection();
  for (int i = 0; i < 3; ++i) {
    const Tensor4 y1 = random_images(2, 32, gen);
    const Tensor4 y2 = random_images(2, 32, gen);
    CHECK(m.forward(y1, y2, Mode::kEval) == y1);
    CHECK(m.forward(y1, y2, Mode::kTrain) == y1);
  }
}

TEST_CASE("full network gradient check at toy size") {
  std::mt19937_64 gen(5);
  TsvaModel m = TsvaModel::build(toy_config(), 5);
  // Give the projection real weights so every layer carries gradient.
  std::normal_distribution<double> d(0.0, 0.5);
  for (double& v : m.params().at("head.weight").value.values()) v = d(gen);
  const Tensor4 y1 = random_images(2, 16, gen);
  const Tensor4 y2 = random_images(2, 16, gen);
  const Tensor4 target = random_images(2, 16, gen);

  m.params().zero_grad();
  TsvaTrace trace;
  const Tensor4 out = m.forward(y1, y2, Mode::kTrain, trace);
  m.backward(trace, mse_loss(out, target).grad);

  std::vector<GradCheckTarget> targets;
  double largest = 0.0;
  for (auto& [name, p] : m.params()) {
    targets.push_back({name, &p.value, &p.grad});
    for (double g : p.grad.values()) largest = std::max(largest, std::abs(g));
  }
  // Biases ahead of batch norm have zero true gradient; finite differences
  // there return rounding noise, so the floor follows the gradient scale.
  const double floor = 1e-4 * largest;
  const auto rep = grad_check(
      [&] {
        TsvaTrace t;
        const Tensor4 o = m.forward(y1, y2, Mode::kTrain, t);
        return GradCheckEval{mse_loss(o, target).value, m.region_signature(t)};
      },
      targets, 1e-5, floor);
  CAPTURE(rep.worst);
  CHECK(rep.checked > rep.skipped);
  CHECK(rep.max_relative_error < 1e-4);
}

TEST_CASE("checkpoint round trip") {
  std::mt19937_64 gen(6);
  TsvaModel m = TsvaModel::build(toy_config(), 6);
  TrainingMetadata meta;
  meta.epoch = 3;
  meta.train_loss = {1.0, 0.5, 0.25};
  AdamState adam;
  adam.step = 4;
  adam.first_moment["head.bias"] = Tensor4(Shape4{1, 1, 1, 1}, 0.125);
  adam.second_moment["head.bias"] = Tensor4(Shape4{1, 1, 1, 1}, 0.5);
  const Checkpoint ck{m, adam, meta};
  const std::string bytes = serialize_checkpoint(ck);
  Checkpoint back = parse_checkpoint(bytes);
  CHECK(serialize_checkpoint(back) == bytes);
  CHECK(back.metadata.train_loss == meta.train_loss);
  REQUIRE(back.optimizer.has_value());
  CHECK(back.optimizer->step == 4);

  const Tensor4 y1 = random_images(1, 32, gen);
  const Tensor4 y2 = random_images(1, 32, gen);
  CHECK(back.model.forward(y1, y2, Mode::kEval) == m.forward(y1, y2, Mode::kEval));

  const fs::path path = fs::temp_directory_path() / "vaf_test_ckpt.bin";
  save_checkpoint(ck, path);
  CHECK(serialize_checkpoint(load_checkpoint(path)) == bytes);
  fs::remove(path);

  CHECK_THROWS_AS(parse_checkpoint(bytes.substr(0, bytes.size() - 9)), FormatError);
  CHECK_THROWS_AS(parse_checkpoint(bytes.substr(0, 40)), FormatError);
  CHECK_THROWS_AS(parse_checkpoint("not a checkpoint"), FormatError);
  std::string bumped = bytes;
  const auto pos = bumped.find("\"format_version\":1");
  REQUIRE(pos != std::string::npos);
  bumped[pos + std::string("\"format_version\":").size()] = '9';
  CHECK_THROWS_AS(parse_checkpoint(bumped), VersionError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.bin"), IoError);
}

TEST_CASE("training improves, is deterministic and keeps the degenerate fit at zero") {
  DatasetSplit ds = toy_dataset(1);
  ds.train.resize(10);
  TrainOptions opt;
  opt.epochs = 50;
  opt.batch_size = 5;
  opt.seed = 3;
  const TrainResult a = train(TsvaModel::build(toy_config(), 1), ds, opt);
  CHECK(a.report.train_loss.size() == 50);
  CHECK(a.report.train_loss.back() < a.report.train_loss.front());
  const TrainResult b = train(TsvaModel::build(toy_config(), 1), ds, opt);
  CHECK(a.report.train_loss == b.report.train_loss);
  CHECK(a.report.validation_loss == b.report.validation_loss);
  CHECK(serialize_checkpoint({a.best, a.optimizer, {}}) == serialize_checkpoint({b.best, b.optimizer, {}}));

  DatasetSplit same = ds;
  for (auto& r : same.train) r.ground_truth = r.y1;
  for (auto& r : same.validation) r.ground_truth = r.y1;
  TsvaModel zero = TsvaModel::build(toy_config(), 1);
  zero.zero_projection();
  opt.epochs = 5;
  const TrainResult z = train(std::move(zero), same, opt);
  for (double l : z.report.train_loss) CHECK(l == 0.0);

  opt.batch_size = 11;
  CHECK_THROWS_AS(train(TsvaModel::build(toy_config(), 1), ds, opt), DomainError);
  DatasetSplit empty;
  CHECK_THROWS_AS(train(TsvaModel::build(toy_config(), 1), empty, opt), DomainError);
}

TEST_CASE("infer orders inputs, pads odd sizes and clamps") {
  std::mt19937_64 gen(9);
  TsvaModel m = TsvaModel::build(toy_config(), 9);
  m.zero_projection();
  Image sharp(37, 29);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  for (double& v : sharp.pixels()) v = d(gen);
  const Image flat(37, 29, 0.5);
  const Image out = infer(m, flat, sharp);
  CHECK(out.width() == 37);
  CHECK(out.height() == 29);
  CHECK(out == sharp);

  // A trained model reacts to the second input.
  TsvaModel t = TsvaModel::build(toy_config(), 10);
  for (double& v : t.params().at("head.weight").value.values()) v = 0.3;
  CHECK(infer(t, sharp, flat) != infer(t, sharp, Image(37, 29, 0.2)));
  CHECK_THROWS_AS(infer(m, sharp, Image(8, 8)), ShapeError);
}
