#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <limits>
#include <set>

#include "cdnn/train.hpp"
#include "doctest.h"

using namespace cdnn;

namespace {

template <typename T>
bool same_bits(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape == b.shape &&
         std::memcmp(a.data.data(), b.data.data(),
                     size_t(a.numel()) * sizeof(T)) == 0;
}

// bright disk on a dark background; mask marks the disk
TrainItem disk_item(int64_t c, int64_t h, int64_t w, double cy, double cx,
                    double r, uint64_t seed) {
  TrainItem item;
  item.image = Tensor<float>({1, c, h, w});
  item.mask = Tensor<float>({1, 1, h, w});
  Rng rng(seed);
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j) {
        const bool in = (double(i) - cy) * (double(i) - cy) +
                            (double(j) - cx) * (double(j) - cx) <
                        r * r;
        item.image.at(0, ch, i, j) =
            float((in ? 0.75 : 0.25) + rng.uniform(-0.05, 0.05));
      }
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j)
      item.mask.at(0, 0, i, j) = (double(i) - cy) * (double(i) - cy) +
                                             (double(j) - cx) *
                                                 (double(j) - cx) <
                                         r * r
                                     ? 1.0f
                                     : 0.0f;
  return item;
}

Dataset disk_dataset(int64_t c, int64_t n, int64_t h, int64_t w) {
  Dataset d;
  for (int64_t k = 0; k < n; ++k) {
    const double cy = h / 2.0 + (k % 2 ? 3 : -3);
    const double cx = w / 2.0 + (k % 3 ? 4 : -4);
    d.push_back(disk_item(c, h, w, cy, cx, h / 4.0, 100 + uint64_t(k)));
  }
  return d;
}

TrainConfig tiny_config(int channels) {
  TrainConfig cfg;
  cfg.input_channels = channels;
  cfg.batch_size = 2;
  cfg.epochs = 2;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST_CASE("adam: first step has magnitude lr against any constant gradient") {
  const double lr = 0.003;
  AdamConfig ac;
  ac.lr = lr;
  Adam<double> opt(ac);
  Tensor<double> a({1, 1, 1, 2}, 1.0), b({1, 1, 1, 2}, 1.0);
  Tensor<double> ga({1, 1, 1, 2}, 0.5), gb({1, 1, 1, 2}, 5.0);
  opt.step({&a, &b}, {&ga, &gb});
  CHECK(opt.steps_taken() == 1);
  for (double v : a.data) {
    const double step = 1.0 - v;
    CHECK(step >= 0.99 * lr);
    CHECK(step <= lr);
  }
  // ten times the gradient, near-identical step size
  for (int k = 0; k < 2; ++k) {
    const double sa = 1.0 - a.data[k];
    const double sb = 1.0 - b.data[k];
    CHECK(std::abs(sa - sb) < 1e-4 * lr);
  }
}

TEST_CASE("adam: negative gradient moves parameters up") {
  AdamConfig ac;
  ac.lr = 0.01;
  Adam<float> opt(ac);
  Tensor<float> p({1, 1, 1, 1}, 0.0f);
  Tensor<float> g({1, 1, 1, 1}, -2.0f);
  opt.step({&p}, {&g});
  CHECK(p.data[0] > 0.0f);
}

TEST_CASE("adam: zero gradients are a fixed point") {
  AdamConfig ac;
  Adam<float> opt(ac);
  Rng rng(3);
  Tensor<float> p({2, 3, 2, 2});
  for (auto& v : p.data) v = float(rng.uniform(-1, 1));
  const Tensor<float> orig = p;
  Tensor<float> zero(p.shape);
  Tensor<float> empty;
  opt.step({&p}, {&zero});
  opt.step({&p}, {&empty});   // unallocated gradient counts as zero
  opt.step({&p}, {nullptr});  // so does a missing one
  CHECK(opt.steps_taken() == 3);
  CHECK(same_bits(p, orig));
}

TEST_CASE("bootstrap sampling") {
  Rng one(5);
  CHECK(bootstrap_sample(1, one) == std::vector<size_t>{0});

  Rng a(11), b(11);
  CHECK(bootstrap_sample(50, a) == bootstrap_sample(50, b));

  // unique fraction approaches 1 - 1/e
  Rng rng(13);
  const size_t n = 1000;
  double frac = 0;
  const int trials = 50;
  for (int t = 0; t < trials; ++t) {
    auto s = bootstrap_sample(n, rng);
    frac += double(std::set<size_t>(s.begin(), s.end()).size()) / double(n);
  }
  frac /= trials;
  CHECK(frac == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(0.02 / 0.632));

  CHECK_THROWS_AS(bootstrap_sample(0, rng), ShapeError);
}

TEST_CASE("geometry: identity sample copies both planes exactly") {
  Rng rng(17);
  Tensor<float> img({1, 3, 9, 12}), mask({1, 1, 9, 12});
  for (auto& v : img.data) v = float(rng.uniform());
  for (auto& v : mask.data) v = rng.bernoulli(0.4) ? 1.0f : 0.0f;
  Tensor<float> io, mo;
  apply_geom(img, mask, GeomSample{}, io, mo);
  CHECK(same_bits(io, img));
  CHECK(same_bits(mo, mask));
}

TEST_CASE("geometry: a pure flip is an involution") {
  Rng rng(19);
  Tensor<float> img({1, 2, 8, 10}), mask({1, 1, 8, 10});
  for (auto& v : img.data) v = float(rng.uniform());
  for (auto& v : mask.data) v = rng.bernoulli(0.5) ? 1.0f : 0.0f;
  GeomSample flip;
  flip.flip_h = true;
  flip.flip_v = true;
  Tensor<float> i1, m1, i2, m2;
  apply_geom(img, mask, flip, i1, m1);
  CHECK(!same_bits(i1, img));
  apply_geom(i1, m1, flip, i2, m2);
  CHECK(same_bits(i2, img));
  CHECK(same_bits(m2, mask));
}

TEST_CASE("geometry: masks stay binary and images stay in range") {
  AugmentConfig cfg;
  Rng rng(23);
  Tensor<float> img({1, 3, 16, 20}), mask({1, 1, 16, 20});
  for (auto& v : img.data) v = float(rng.uniform());
  for (auto& v : mask.data) v = rng.bernoulli(0.3) ? 1.0f : 0.0f;
  Tensor<float> io, mo;
  for (int t = 0; t < 100; ++t) {
    augment(img, mask, cfg, rng, io, mo);
    for (float v : mo.data) CHECK((v == 0.0f || v == 1.0f));
    for (float v : io.data) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
}

TEST_CASE("contrast: gain one is identity, gain zero flattens to the mean") {
  Rng rng(29);
  Tensor<float> img({1, 2, 6, 6});
  for (auto& v : img.data) v = float(rng.uniform(0.2, 0.8));
  const Tensor<float> orig = img;

  AugmentConfig unit;
  unit.contrast_lo = unit.contrast_hi = 1.0;
  augment_contrast(img, unit, rng);
  for (int64_t k = 0; k < img.numel(); ++k)
    CHECK(img.data[k] == doctest::Approx(orig.data[k]).epsilon(1e-6));

  img = orig;
  AugmentConfig flat;
  flat.contrast_lo = flat.contrast_hi = 0.0;
  augment_contrast(img, flat, rng);
  for (int64_t c = 0; c < 2; ++c) {
    double mean = 0;
    for (int64_t k = 0; k < 36; ++k) mean += double(orig.data[c * 36 + k]);
    mean /= 36;
    for (int64_t k = 0; k < 36; ++k)
      CHECK(double(img.data[c * 36 + k]) == doctest::Approx(mean).epsilon(1e-6));
  }

  // constant plane is untouched by any gain
  Tensor<float> flat_img({1, 1, 4, 4}, 0.4f);
  AugmentConfig wild;
  wild.contrast_lo = 0.1;
  wild.contrast_hi = 2.0;
  augment_contrast(flat_img, wild, rng);
  for (float v : flat_img.data)
    CHECK(v == doctest::Approx(0.4f).epsilon(1e-6));
}

TEST_CASE("training with zero learning rate leaves parameters untouched") {
  const Dataset data = disk_dataset(3, 2, 16, 16);
  TrainConfig cfg = tiny_config(3);
  cfg.learning_rate = 0.0;
  cfg.epochs = 1;
  auto res = train_single(data, cfg, 42);

  Rng ref_rng(42);
  auto ref = build_cdnn<float>(3, ref_rng);
  bool all_equal = true;
  size_t k = 0;
  std::vector<const Tensor<float>*> got;
  res.net.for_each_param([&](const std::string&, const Tensor<float>& t) {
    got.push_back(&t);
  });
  ref.for_each_param([&](const std::string&, const Tensor<float>& t) {
    all_equal = all_equal && same_bits(t, *got[k++]);
  });
  CHECK(all_equal);
  CHECK(res.history.size() == 1);
}

TEST_CASE("same seed reproduces the run bit for bit") {
  const Dataset data = disk_dataset(3, 4, 16, 16);
  const TrainConfig cfg = tiny_config(3);
  auto r1 = train_single(data, cfg, 9);
  auto r2 = train_single(data, cfg, 9);

  CHECK(history_csv(r1.history) == history_csv(r2.history));
  std::vector<const Tensor<float>*> p1, p2;
  r1.net.for_each_param([&](const std::string&, const Tensor<float>& t) {
    p1.push_back(&t);
  });
  r2.net.for_each_param([&](const std::string&, const Tensor<float>& t) {
    p2.push_back(&t);
  });
  REQUIRE(p1.size() == p2.size());
  for (size_t i = 0; i < p1.size(); ++i) CHECK(same_bits(*p1[i], *p2[i]));

  auto r3 = train_single(data, cfg, 10);
  CHECK(history_csv(r1.history) != history_csv(r3.history));
}

TEST_CASE("loss falls on a learnable toy task") {
  const Dataset data = disk_dataset(3, 4, 16, 16);
  TrainConfig cfg = tiny_config(3);
  cfg.epochs = 8;
  cfg.augment_enabled = false;
  auto res = train_single(data, cfg, 21);
  REQUIRE(res.history.size() == 8);
  CHECK(res.history.back().mean_loss < res.history.front().mean_loss);
  for (const auto& e : res.history) {
    CHECK(std::isfinite(e.mean_loss));
    CHECK(e.mean_train_jaccard >= 0.0);
    CHECK(e.mean_train_jaccard <= 1.0);
  }
}

TEST_CASE("non-finite loss aborts with step and norm diagnostics") {
  Dataset data = disk_dataset(3, 2, 16, 16);
  // a NaN target reaches the loss directly; a NaN pixel would be absorbed
  // by relu(NaN) -> 0 long before the output
  data[0].mask.data[5] = std::numeric_limits<float>::quiet_NaN();
  TrainConfig cfg = tiny_config(3);
  cfg.augment_enabled = false;
  try {
    train_single(data, cfg, 1);
    FAIL("expected divergence abort");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("step") != std::string::npos);
    CHECK(msg.find("conv-1-1.w=") != std::string::npos);
    CHECK(msg.find("output.b=") != std::string::npos);
  }
}

TEST_CASE("history csv holds a header and one exact row per epoch") {
  std::vector<EpochStats> hist = {{1, 0.5, 0.25}, {2, 0.375, 0.5}};
  const std::string csv = history_csv(hist);
  CHECK(csv ==
        "epoch,mean_loss,mean_train_jaccard\n"
        "1,0.5,0.25\n"
        "2,0.375,0.5\n");
}

TEST_CASE("binary jaccard on thresholded predictions") {
  Tensor<float> t({1, 1, 1, 4}), p({1, 1, 1, 4});
  t.data = {1, 1, 0, 0};
  p.data = {0.9f, 0.3f, 0.7f, 0.1f};  // predicted set {0, 2}
  CHECK(binary_jaccard(t, p) == doctest::Approx(1.0 / 3.0));
  Tensor<float> z({1, 1, 1, 4});
  CHECK(binary_jaccard(z, z) == 1.0);
}

TEST_CASE("ensemble members differ and reproduce under the same seed") {
  const Dataset data = disk_dataset(3, 4, 16, 16);
  TrainConfig cfg = tiny_config(3);
  cfg.epochs = 1;
  cfg.ensemble_size = 2;
  auto e1 = train_ensemble(data, cfg);
  auto e2 = train_ensemble(data, cfg);
  REQUIRE(e1.size() == 2);
  REQUIRE(e2.size() == 2);
  CHECK(history_csv(e1[0].history) == history_csv(e2[0].history));
  CHECK(history_csv(e1[1].history) == history_csv(e2[1].history));
  CHECK(history_csv(e1[0].history) != history_csv(e1[1].history));
}
