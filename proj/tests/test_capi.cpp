#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vaf/vaf.h"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("vaf_capi_" + name);
  fs::remove_all(p);
  return p;
}

vaf_model_config toy_config() {
  vaf_model_config c;
  vaf_model_config_default(&c);
  c.depth_levels = 2;
  c.base_channels = 4;
  return c;
}

}  // namespace

TEST_CASE("status names and defaults") {
  CHECK(std::string(vaf_status_name(VAF_OK)) == "ok");
  CHECK(std::string(vaf_version()).size() > 0);
  vaf_optics o;
  vaf_optics_default(&o);
  CHECK(o.numerical_aperture > 0.0);
  vaf_dataset_options d;
  vaf_dataset_options_default(&d);
  CHECK(d.phantom_count == 37);
  CHECK(d.delta_d_um == 0.5);
  CHECK(d.patch_px == 64);
  vaf_train_options t;
  vaf_train_options_default(&t);
  CHECK(t.epochs == 50);
  CHECK(t.batch_size == 20);
  CHECK(t.learning_rate == 0.0005);
  CHECK(t.model.depth_levels == 3);
  CHECK(t.model.base_channels == 16);
}

TEST_CASE("argument and domain errors set the last error message") {
  double v = 0.0;
  CHECK(vaf_psf_value(0.0, 0.0, nullptr, nullptr) == VAF_ERR_ARGUMENT);
  CHECK(std::string(vaf_last_error()).find("NULL") != std::string::npos);
  vaf_optics o;
  vaf_optics_default(&o);
  o.numerical_aperture = 2.0;
  CHECK(vaf_psf_value(0.0, 0.0, &o, &v) == VAF_ERR_DOMAIN);
  CHECK(std::strlen(vaf_last_error()) > 0);
  CHECK(vaf_psf_value(0.0, 0.0, nullptr, &v) == VAF_OK);
  CHECK(v > 0.0);

  vaf_image* img = nullptr;
  CHECK(vaf_image_create(0, 4, nullptr, &img) == VAF_ERR_ARGUMENT);
  CHECK(img == nullptr);
  CHECK(vaf_image_load("/nonexistent/x.pgm", &img) == VAF_ERR_IO);
  vaf_model* m = nullptr;
  CHECK(vaf_model_load("/nonexistent/ckpt.bin", &m) == VAF_ERR_IO);
}

TEST_CASE("images, psf kernels and metrics") {
  std::vector<double> px(64, 0.5);
  vaf_image* a = nullptr;
  vaf_image* b = nullptr;
  REQUIRE(vaf_image_create(8, 8, px.data(), &a) == VAF_OK);
  for (double& p : px) p = 0.6;
  REQUIRE(vaf_image_create(8, 8, px.data(), &b) == VAF_OK);
  CHECK(vaf_image_width(a) == 8);
  CHECK(vaf_image_height(a) == 8);
  double db = 0.0;
  CHECK(vaf_psnr(a, b, 1.0, &db) == VAF_OK);
  CHECK(db == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(vaf_psnr(a, a, 1.0, &db) == VAF_OK);
  CHECK(db == 99.0);

  vaf_image* small = nullptr;
  REQUIRE(vaf_image_create(4, 4, nullptr, &small) == VAF_OK);
  CHECK(vaf_psnr(a, small, 1.0, &db) == VAF_ERR_SHAPE);

  vaf_image* k = nullptr;
  REQUIRE(vaf_psf_kernel(1.0, nullptr, &k) == VAF_OK);
  const int side = vaf_image_width(k);
  CHECK(side % 2 == 1);
  double sum = 0.0;
  for (int i = 0; i < side * side; ++i) sum += vaf_image_data(k)[i];
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  const fs::path dir = scratch("img");
  fs::create_directories(dir);
  CHECK(vaf_image_save(a, (dir / "a.pgm").c_str(), 16) == VAF_OK);
  CHECK(vaf_image_save(a, (dir / "a.pgm").c_str(), 12) == VAF_ERR_ARGUMENT);
  vaf_image* back = nullptr;
  REQUIRE(vaf_image_load((dir / "a.pgm").c_str(), &back) == VAF_OK);
  CHECK(std::abs(vaf_image_data(back)[0] - 0.5) <= 0.5 / 65535.0);
  std::ofstream(dir / "bad.pgm") << "P5 garbage";
  vaf_image* bad = nullptr;
  CHECK(vaf_image_load((dir / "bad.pgm").c_str(), &bad) == VAF_ERR_FORMAT);
  fs::remove_all(dir);

  for (vaf_image* p : {a, b, small, k, back}) vaf_image_free(p);
  vaf_image_free(nullptr);
}

TEST_CASE("phantom, capture and z-stack focus") {
  vaf_phantom_spec spec;
  vaf_phantom_spec_default(&spec);
  spec.seed = 12;
  spec.width = 64;
  spec.height = 64;
  spec.cell_count_min = 5;
  spec.cell_count_max = 5;
  vaf_sample* s = nullptr;
  REQUIRE(vaf_phantom_synth(&spec, &s) == VAF_OK);
  CHECK(vaf_sample_true_cell_count(s) == 5);

  vaf_capture cap{};
  REQUIRE(vaf_capture_pair(s, 0.0, 0.5, 0.0, 1, nullptr, &cap) == VAF_OK);
  CHECK(cap.brenner_y1 >= cap.brenner_y2);
  vaf_image* focused = nullptr;
  REQUIRE(vaf_sample_render(s, 0.0, nullptr, &focused) == VAF_OK);
  double db = 0.0;
  REQUIRE(vaf_psnr(cap.ground_truth, focused, 1.0, &db) == VAF_OK);
  CHECK(db == 99.0);
  vaf_capture_release(&cap);
  CHECK(cap.y1 == nullptr);

  const fs::path dir = scratch("stack");
  REQUIRE(vaf_zstack_write(s, -2.0, 2.0, 0.5, 0.0, 3, nullptr, dir.c_str()) == VAF_OK);
  double f = 99.0;
  REQUIRE(vaf_zstack_find_focus(dir.c_str(), &f) == VAF_OK);
  CHECK(f == 0.0);
  fs::remove_all(dir);

  const fs::path sd = scratch("sample");
  REQUIRE(vaf_sample_save(s, sd.c_str()) == VAF_OK);
  vaf_sample* loaded = nullptr;
  REQUIRE(vaf_sample_load(sd.c_str(), &loaded) == VAF_OK);
  CHECK(vaf_sample_true_cell_count(loaded) == 5);
  fs::remove_all(sd);

  vaf_image_free(focused);
  vaf_sample_free(s);
  vaf_sample_free(loaded);
}

TEST_CASE("model handles: identity projection, checkpoint round trip, inference") {
  const vaf_model_config c = toy_config();
  vaf_model* m = nullptr;
  REQUIRE(vaf_model_build(&c, 4, &m) == VAF_OK);
  CHECK(vaf_model_parameter_count(m) > 0);
  REQUIRE(vaf_model_zero_projection(m) == VAF_OK);

  std::vector<double> px(20 * 12);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = (i % 7) / 7.0;
  vaf_image* sharp = nullptr;
  vaf_image* flat = nullptr;
  REQUIRE(vaf_image_create(20, 12, px.data(), &sharp) == VAF_OK);
  REQUIRE(vaf_image_create(20, 12, nullptr, &flat) == VAF_OK);
  vaf_image* out = nullptr;
  REQUIRE(vaf_infer(m, flat, sharp, &out) == VAF_OK);
  CHECK(vaf_image_width(out) == 20);
  CHECK(std::memcmp(vaf_image_data(out), px.data(), px.size() * sizeof(double)) == 0);

  const fs::path ck = scratch("ckpt.bin");
  REQUIRE(vaf_model_save(m, ck.c_str()) == VAF_OK);
  vaf_model* back = nullptr;
  REQUIRE(vaf_model_load(ck.c_str(), &back) == VAF_OK);
  CHECK(vaf_model_parameter_count(back) == vaf_model_parameter_count(m));
  fs::resize_file(ck, fs::file_size(ck) / 2);
  vaf_model* broken = nullptr;
  CHECK(vaf_model_load(ck.c_str(), &broken) == VAF_ERR_FORMAT);
  CHECK(broken == nullptr);
  fs::remove(ck);

  vaf_model_config bad = c;
  bad.depth_levels = 1;
  vaf_model* none = nullptr;
  CHECK(vaf_model_build(&bad, 1, &none) == VAF_ERR_DOMAIN);

  for (vaf_image* p : {sharp, flat, out}) vaf_image_free(p);
  vaf_model_free(m);
  vaf_model_free(back);
}

TEST_CASE("shot counts") {
  long long two = 0;
  long long conv = 0;
  REQUIRE(vaf_shot_counts(10, 41, 2, 21, &two, &conv) == VAF_OK);
  CHECK(two == 59);
  CHECK(conv == 210);
  CHECK(vaf_shot_counts(0, 41, 2, 21, &two, &conv) == VAF_ERR_DOMAIN);
}

TEST_CASE("dataset build, short training and evaluation through the C API") {
  vaf_dataset_options d;
  vaf_dataset_options_default(&d);
  d.phantom_count = 2;
  d.patch_px = 32;
  vaf_phantom_spec spec;
  vaf_phantom_spec_default(&spec);
  spec.width = 64;
  spec.height = 64;
  spec.cell_count_min = 4;
  spec.cell_count_max = 6;
  const fs::path dir = scratch("dataset");
  size_t ntrain = 0;
  size_t nval = 0;
  REQUIRE(vaf_dataset_build(&d, &spec, nullptr, dir.c_str(), &ntrain, &nval) == VAF_OK);
  CHECK(ntrain + nval == 2 * 4 * 4);

  vaf_train_options t;
  vaf_train_options_default(&t);
  t.epochs = 2;
  t.batch_size = 4;
  t.model = toy_config();
  int calls = 0;
  t.on_epoch = [](int, double, double, void* user) { ++*static_cast<int*>(user); };
  t.user = &calls;
  const fs::path ck = scratch("trained.bin");
  double best = 0.0;
  REQUIRE(vaf_train(dir.c_str(), &t, ck.c_str(), &best) == VAF_OK);
  CHECK(calls == 2);
  CHECK(std::isfinite(best));

  vaf_model* m = nullptr;
  REQUIRE(vaf_model_load(ck.c_str(), &m) == VAF_OK);
  vaf_eval_options e;
  vaf_eval_options_default(&e);
  const double sweep[] = {0.5, 3.0};
  e.delta_d_sweep = sweep;
  e.delta_d_count = 2;
  e.cell_count_phantoms = 2;
  const fs::path out = scratch("eval");
  vaf_eval_summary sum{};
  REQUIRE(vaf_evaluate(dir.c_str(), m, nullptr, &e, out.c_str(), &sum) == VAF_OK);
  CHECK(fs::exists(out / "report.csv"));
  CHECK(fs::exists(out / "summary.json"));
  CHECK(sum.rows == 2 * nval);
  CHECK(std::isnan(sum.mean_psnr_ablation));

  CHECK(vaf_train("/nonexistent/dataset", &t, ck.c_str(), &best) == VAF_ERR_IO);
  vaf_model_free(m);
  fs::remove_all(dir);
  fs::remove_all(out);
  fs::remove(ck);
}
