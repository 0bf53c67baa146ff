#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cdnn/network.hpp"
#include "cdnn/weights_io.hpp"
#include "doctest.h"

using namespace cdnn;

namespace {

template <typename T>
bool same_bits(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape == b.shape &&
         (a.numel() == 0 ||
          std::memcmp(a.data.data(), b.data.data(),
                      size_t(a.numel()) * sizeof(T)) == 0);
}

template <typename T>
bool nets_identical(const Network<T>& a, const Network<T>& b) {
  if (a.params.size() != b.params.size()) return false;
  for (size_t i = 0; i < a.params.size(); ++i) {
    if (!same_bits(a.params[i].w, b.params[i].w)) return false;
    if (!same_bits(a.params[i].b, b.params[i].b)) return false;
    if (!same_bits(a.params[i].gamma, b.params[i].gamma)) return false;
    if (!same_bits(a.params[i].beta, b.params[i].beta)) return false;
    if (!same_bits(a.params[i].run_mean, b.params[i].run_mean)) return false;
    if (!same_bits(a.params[i].run_var, b.params[i].run_var)) return false;
  }
  return true;
}

Tensor<float> random_image(Shape4 s, uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t(s);
  for (auto& v : t.data) v = float(rng.uniform());
  return t;
}

std::string temp_path(const char* stem) {
  return std::string("/tmp/") + stem + "-" + std::to_string(::getpid());
}

// expected table, restated literally so drift in the source list is caught
struct Row {
  const char* name;
  int filter;
  int features;
  bool bn;
  double drop;
};
const Row kTable[] = {
    {"conv-1-1", 3, 16, true, 0.0},  {"conv-1-2", 3, 32, true, 0.0},
    {"pool-1", 2, 0, false, 0.0},    {"conv-2-1", 3, 64, true, 0.0},
    {"conv-2-2", 3, 64, true, 0.0},  {"pool-2", 2, 0, false, 0.0},
    {"conv-3-1", 3, 128, true, 0.0}, {"conv-3-2", 4, 128, true, 0.0},
    {"pool-3", 2, 0, false, 0.0},    {"conv-4-1", 3, 256, true, 0.5},
    {"conv-4-2", 3, 256, true, 0.0}, {"pool-4", 2, 0, false, 0.0},
    {"conv-5", 3, 512, true, 0.0},   {"decv-1", 3, 256, true, 0.0},
    {"ups-1", 2, 0, false, 0.0},     {"decv-2-1", 3, 256, true, 0.0},
    {"decv-2-2", 3, 128, true, 0.0}, {"ups-2", 2, 0, false, 0.0},
    {"decv-3-1", 4, 128, true, 0.0}, {"decv-3-2", 3, 128, true, 0.0},
    {"ups-3", 2, 0, false, 0.0},     {"decv-4-1", 3, 64, true, 0.0},
    {"decv-4-2", 3, 32, true, 0.0},  {"ups-4", 2, 0, false, 0.0},
    {"decv-5-1", 3, 16, true, 0.5},  {"output", 3, 1, false, 0.0},
};

// weight file pulled apart into records for targeted corruption
struct FileRec {
  std::string name;
  std::vector<uint32_t> extents;
  std::vector<uint32_t> payload;
};

uint32_t get_u32(const std::vector<uint8_t>& b, size_t& pos) {
  REQUIRE(pos + 4 <= b.size());
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t(b[pos + i]) << (8 * i);
  pos += 4;
  return v;
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

std::vector<FileRec> parse_file(const std::vector<uint8_t>& b) {
  REQUIRE(b.size() >= 12);
  REQUIRE(std::memcmp(b.data(), "CDNN", 4) == 0);
  size_t pos = 4;
  REQUIRE(get_u32(b, pos) == 1);
  const uint32_t count = get_u32(b, pos);
  std::vector<FileRec> recs(count);
  for (auto& r : recs) {
    const uint32_t nl = get_u32(b, pos);
    REQUIRE(pos + nl <= b.size());
    r.name.assign(reinterpret_cast<const char*>(b.data() + pos), nl);
    pos += nl;
    const uint32_t rank = get_u32(b, pos);
    uint64_t numel = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      r.extents.push_back(get_u32(b, pos));
      numel *= r.extents.back();
    }
    r.payload.resize(numel);
    for (auto& v : r.payload) v = get_u32(b, pos);
  }
  REQUIRE(pos == b.size());
  return recs;
}

void emit_file(const std::vector<FileRec>& recs, const std::string& path) {
  std::string out = "CDNN";
  put_u32(out, 1);
  put_u32(out, uint32_t(recs.size()));
  for (const auto& r : recs) {
    put_u32(out, uint32_t(r.name.size()));
    out += r.name;
    put_u32(out, uint32_t(r.extents.size()));
    for (uint32_t e : r.extents) put_u32(out, e);
    for (uint32_t v : r.payload) put_u32(out, v);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(out.data(), std::streamsize(out.size()));
  REQUIRE(bool(f));
}

std::vector<uint8_t> slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(bool(f));
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(f)),
                              std::istreambuf_iterator<char>());
}

void dump(const std::vector<uint8_t>& b, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size()));
  REQUIRE(bool(f));
}

}  // namespace

TEST_CASE("layer table matches the published architecture row for row") {
  const auto& rows = cdnn_layers();
  REQUIRE(rows.size() == 26);
  for (size_t i = 0; i < rows.size(); ++i) {
    CAPTURE(i);
    CHECK(rows[i].name == kTable[i].name);
    CHECK(rows[i].filter == kTable[i].filter);
    CHECK(rows[i].out_features == kTable[i].features);
    CHECK(rows[i].has_batchnorm == kTable[i].bn);
    CHECK(rows[i].dropout_before == kTable[i].drop);
  }
  CHECK(rows.back().kind == LayerKind::Output);
}

TEST_CASE("parameter count agrees with independent layer arithmetic") {
  // chained by hand from the table: k*k*in*out + out, plus 2*out when
  // batchnorm is present
  int64_t expect = 0;
  int64_t in_ch = 7;
  for (const Row& r : kTable) {
    if (r.features == 0) continue;
    expect += int64_t(r.filter) * r.filter * in_ch * r.features + r.features;
    if (r.bn) expect += 2 * r.features;
    in_ch = r.features;
  }
  CHECK(expect == 5039457);
  CHECK(expect >= 4900000);
  CHECK(expect <= 5200000);

  Rng rng(1);
  auto net = build_cdnn<float>(7, rng);
  CHECK(net.param_count() == expect);

  int64_t visited = 0;
  net.for_each_param([&](const std::string&, const Tensor<float>& t) {
    visited += t.numel();
  });
  CHECK(visited == expect);
}

TEST_CASE("single unnormalized 1x1 layer counts one weight and one bias") {
  Network<float> solo;
  solo.input_channels = 1;
  solo.layers = {{"solo", LayerKind::Conv, 1, 1, false, 0.0}};
  solo.params.resize(1);
  solo.params[0].w = Tensor<float>({1, 1, 1, 1});
  solo.params[0].b = Tensor<float>({1, 1, 1, 1});
  CHECK(solo.param_count() == 2);
}

TEST_CASE("first conv row alone carries 1056 parameters") {
  Rng rng(1);
  auto net = build_cdnn<float>(7, rng);
  const auto& p = net.params[0];
  CHECK(p.w.numel() + p.b.numel() + p.gamma.numel() + p.beta.numel() == 1056);
}

TEST_CASE("two builds from the same seed are bitwise identical") {
  Rng a(99), b(99);
  auto n1 = build_cdnn<float>(7, a);
  auto n2 = build_cdnn<float>(7, b);
  CHECK(nets_identical(n1, n2));
  Rng c(100);
  auto n3 = build_cdnn<float>(7, c);
  CHECK(!nets_identical(n1, n3));
}

TEST_CASE("initialization: fan-in scaled weights, neutral everything else") {
  Rng rng(7);
  auto net = build_cdnn<float>(7, rng);
  // conv-5 has the most draws, so its sample std is the tightest
  const auto& conv5 = net.params[12];
  REQUIRE(net.layers[12].name == "conv-5");
  double sum = 0, sumsq = 0;
  for (float v : conv5.w.data) {
    sum += v;
    sumsq += double(v) * v;
  }
  const double n = double(conv5.w.numel());
  const double mean = sum / n;
  const double sd = std::sqrt(sumsq / n - mean * mean);
  const double want = std::sqrt(2.0 / (256.0 * 9.0));
  CHECK(std::abs(mean) < 0.1 * want);
  CHECK(sd == doctest::Approx(want).epsilon(0.05));

  for (size_t i = 0; i < net.layers.size(); ++i) {
    const auto& p = net.params[i];
    for (float v : p.b.data) CHECK(v == 0.0f);
    for (float v : p.gamma.data) CHECK(v == 1.0f);
    for (float v : p.beta.data) CHECK(v == 0.0f);
    for (float v : p.run_mean.data) CHECK(v == 0.0f);
    for (float v : p.run_var.data) CHECK(v == 1.0f);
  }
  CHECK_THROWS_AS(build_cdnn<float>(0, rng), ShapeError);
}

TEST_CASE("forward: output shape, sigmoid range, healthy mean at init") {
  Rng rng(11);
  auto net = build_cdnn<float>(7, rng);
  const Tensor<float> x = random_image({2, 7, 32, 48}, 5);

  Rng drop_rng(21);
  const Tensor<float> yt = forward(net, x, FwdMode::Train, &drop_rng);
  REQUIRE(yt.shape == Shape4{2, 1, 32, 48});
  double mean = 0;
  for (float v : yt.data) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
    mean += v;
  }
  mean /= double(yt.numel());
  CHECK(mean > 0.2);
  CHECK(mean < 0.8);

  const Tensor<float> yi = forward(net, x, FwdMode::Infer);
  REQUIRE(yi.shape == Shape4{2, 1, 32, 48});
  CHECK(yi.all_finite());
  for (float v : yi.data) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }

  const Tensor<float> yi2 = forward(net, x, FwdMode::Infer);
  CHECK(same_bits(yi, yi2));

  Tensor<float> bad({1, 3, 32, 48});
  CHECK_THROWS_WITH_AS(forward(net, bad, FwdMode::Infer),
                       doctest::Contains("channels"), ShapeError);
}

TEST_CASE("spatial trace walks down to 12x16 and back up") {
  Rng rng(13);
  auto net = build_cdnn<float>(7, rng);
  const Tensor<float> x = random_image({1, 7, 192, 256}, 6);
  std::vector<std::pair<std::string, Shape4>> trace;
  const Tensor<float> y = forward(net, x, FwdMode::Infer, nullptr, &trace);
  REQUIRE(y.shape == Shape4{1, 1, 192, 256});
  REQUIRE(trace.size() == 26);

  auto extent_after = [&](const char* name) {
    for (const auto& [nm, s] : trace)
      if (nm == name) return std::pair<int64_t, int64_t>{s.h, s.w};
    FAIL("row not in trace: ", name);
    return std::pair<int64_t, int64_t>{0, 0};
  };
  CHECK(extent_after("pool-1") == std::pair<int64_t, int64_t>{96, 128});
  CHECK(extent_after("pool-2") == std::pair<int64_t, int64_t>{48, 64});
  CHECK(extent_after("pool-3") == std::pair<int64_t, int64_t>{24, 32});
  CHECK(extent_after("pool-4") == std::pair<int64_t, int64_t>{12, 16});
  CHECK(extent_after("conv-5") == std::pair<int64_t, int64_t>{12, 16});
  CHECK(extent_after("ups-1") == std::pair<int64_t, int64_t>{24, 32});
  CHECK(extent_after("ups-2") == std::pair<int64_t, int64_t>{48, 64});
  CHECK(extent_after("ups-3") == std::pair<int64_t, int64_t>{96, 128});
  CHECK(extent_after("ups-4") == std::pair<int64_t, int64_t>{192, 256});
}

TEST_CASE("taped forward exposes gradients and batch moments everywhere") {
  Rng rng(17);
  auto net = build_cdnn<float>(7, rng);
  Tape<float> tape;
  auto x = tape.input(random_image({2, 7, 16, 16}, 8), false);

  Rng drop_rng(3);
  auto tn = forward_taped(net, tape, x, true, &drop_rng);
  REQUIRE(tape.val(tn.output).shape == Shape4{2, 1, 16, 16});

  Tensor<float> target({2, 1, 16, 16});
  Rng trng(4);
  for (auto& v : target.data) v = trng.bernoulli(0.3) ? 1.0f : 0.0f;
  auto loss = tape.jaccard(tn.output, target, 1.0);
  tape.backward(loss);

  size_t k = 0;
  net.for_each_param([&](const std::string& name, const Tensor<float>& t) {
    CAPTURE(name);
    REQUIRE(k < tn.param_vars.size());
    const Tensor<float>& g = tape.grad(tn.param_vars[k]);
    REQUIRE(g.shape == t.shape);
    CHECK(g.all_finite());
    ++k;
  });
  CHECK(k == tn.param_vars.size());

  for (size_t i = 0; i < net.layers.size(); ++i) {
    if (!net.layers[i].has_batchnorm) continue;
    CHECK(tn.batch_mean[i].size() == size_t(net.layers[i].out_features));
    CHECK(tn.batch_var[i].size() == size_t(net.layers[i].out_features));
  }
}

TEST_CASE("weight file round-trips bit for bit") {
  Rng rng(23);
  auto net = build_cdnn<float>(7, rng);
  // nudge the running stats so the round-trip covers non-initial values
  Rng nudge(24);
  for (auto& p : net.params)
    for (auto* t : {&p.run_mean, &p.run_var})
      for (auto& v : t->data) v += float(nudge.uniform(0.0, 0.2));

  const std::string path = temp_path("cdnn-roundtrip");
  save_weights(net, path);
  auto back = load_weights(path);
  CHECK(nets_identical(net, back));
  CHECK(back.param_count() == net.param_count());
  CHECK(back.input_channels == 7);

  const Tensor<float> x = random_image({1, 7, 32, 32}, 9);
  CHECK(same_bits(forward(net, x, FwdMode::Infer),
                  forward(back, x, FwdMode::Infer)));
  std::remove(path.c_str());
}

TEST_CASE("weight file defects raise distinct errors") {
  Rng rng(29);
  auto net = build_cdnn<float>(2, rng);  // small file, same schema
  const std::string path = temp_path("cdnn-defect");
  save_weights(net, path);
  const std::vector<uint8_t> good = slurp(path);
  const std::string bad = path + ".bad";

  SUBCASE("bad magic is a corrupt header") {
    auto b = good;
    b[0] = 'X';
    dump(b, bad);
    CHECK_THROWS_AS(load_weights(bad), CorruptHeaderError);
  }
  SUBCASE("future version is rejected as unknown") {
    auto b = good;
    b[4] = 2;
    dump(b, bad);
    CHECK_THROWS_AS(load_weights(bad), UnknownVersionError);
  }
  SUBCASE("truncation is a corrupt payload") {
    auto b = good;
    b.resize(b.size() - 100);
    dump(b, bad);
    CHECK_THROWS_AS(load_weights(bad), CorruptPayloadError);
  }
  SUBCASE("missing layer is a schema mismatch naming it") {
    auto recs = parse_file(good);
    std::vector<FileRec> kept;
    for (auto& r : recs)
      if (r.name.rfind("conv-5.", 0) != 0) kept.push_back(std::move(r));
    REQUIRE(kept.size() + 6 == recs.size());
    emit_file(kept, bad);
    CHECK_THROWS_WITH_AS(load_weights(bad), doctest::Contains("conv-5"),
                         SchemaMismatchError);
  }
  SUBCASE("wrong tensor shape is a schema mismatch naming it") {
    auto recs = parse_file(good);
    for (auto& r : recs)
      if (r.name == "conv-1-2.b") {
        r.extents[1] = 33;
        r.payload.resize(33, 0);
      }
    emit_file(recs, bad);
    CHECK_THROWS_WITH_AS(load_weights(bad), doctest::Contains("conv-1-2.b"),
                         SchemaMismatchError);
  }
  SUBCASE("extra tensor is a schema mismatch") {
    auto recs = parse_file(good);
    FileRec extra;
    extra.name = "conv-9-9.w";
    extra.extents = {1, 1, 1, 1};
    extra.payload = {0};
    recs.push_back(extra);
    emit_file(recs, bad);
    CHECK_THROWS_WITH_AS(load_weights(bad), doctest::Contains("conv-9-9.w"),
                         SchemaMismatchError);
  }
  std::remove(path.c_str());
  std::remove(bad.c_str());
}
