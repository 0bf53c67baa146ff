#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cdnn/netpbm.hpp"
#include "cdnn/tensor.hpp"
#include "doctest.h"

// CDNN_BIN points at the built executable
using namespace cdnn;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int rc = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
  REQUIRE(bool(f));
}

// shell out to the binary, capturing both streams
RunResult run(const std::string& args) {
  static int counter = 0;
  const std::string tag =
      std::to_string(::getpid()) + "-" + std::to_string(counter++);
  const std::string so = (fs::temp_directory_path() / ("cdnn-so-" + tag)).string();
  const std::string se = (fs::temp_directory_path() / ("cdnn-se-" + tag)).string();
  const std::string cmd =
      std::string(CDNN_BIN) + " " + args + " >" + so + " 2>" + se;
  const int raw = std::system(cmd.c_str());
  RunResult r;
  r.rc = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(so);
  r.err = slurp(se);
  fs::remove(so);
  fs::remove(se);
  return r;
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

// every run below works at desk scale
const char* kSmall =
    "--set image_h=48 --set image_w=64 --set epochs=2 --set batch_size=2";

// corpus and a trained net, built once and shared by the cases
struct Workspace {
  fs::path root;
  std::string data, manifest, weights, history;
  Workspace() {
    root = fs::temp_directory_path() /
           ("cdnn-cli-" + std::to_string(::getpid()));
    fs::create_directories(root);
    data = (root / "data").string();
    manifest = data + "/manifest.txt";
    weights = (root / "net.weights").string();
    history = (root / "net-history.csv").string();

    RunResult s = run("synth --n 3 --height 48 --width 64 --seed 7 --out " + data);
    REQUIRE(s.rc == 0);
    RunResult t = run("train --manifest " + manifest + " --out " + weights +
                      " --history " + history + " --seed 5 " + kSmall);
    if (t.rc != 0) MESSAGE(t.err);
    REQUIRE(t.rc == 0);
    REQUIRE(contains(t.out, "trained 3 images for 2 epochs"));
  }
  ~Workspace() {
    std::error_code ec;
    fs::remove_all(root, ec);
  }
  std::string file(const std::string& name) const {
    return (root / name).string();
  }
};

Workspace& ws() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run("").rc == 2);
  CHECK(run("frobnicate").rc == 2);
  CHECK(run("inspect-net --bogus").rc == 2);
  CHECK(run("train --out only.weights").rc == 2);  // --manifest is required

  RunResult help = run("--help");
  CHECK(help.rc == 0);
  CHECK(contains(help.out, "train"));
  CHECK(contains(help.out, "predict"));
}

TEST_CASE("bad config input exits with 1 and says why") {
  RunResult r = run("train --manifest x --out y --set epochs");
  CHECK(r.rc == 1);
  CHECK(contains(r.err, "--set expects key=value"));

  r = run("train --manifest x --out y --set epochz=3");
  CHECK(r.rc == 1);
  CHECK(contains(r.err, "unknown key epochz"));
}

TEST_CASE("inspect-net prints the layer table") {
  RunResult r = run("inspect-net");
  CHECK(r.rc == 0);
  CHECK(contains(r.out, "conv-1-1"));
  CHECK(contains(r.out, "decv-5-1"));
  CHECK(contains(r.out, "output"));
  CHECK(contains(r.out, "12x16"));  // innermost extents for 192x256 input
  CHECK(contains(r.out, "192x256"));
  CHECK(contains(r.out, "parameters: 5039457"));
}

TEST_CASE("synth runs are reproducible and seed-sensitive") {
  const std::string d1 = ws().file("seeded-1");
  const std::string d2 = ws().file("seeded-2");
  const std::string d3 = ws().file("seeded-3");
  CHECK(run("synth --n 2 --height 32 --width 32 --seed 3 --out " + d1).rc == 0);
  CHECK(run("synth --n 2 --height 32 --width 32 --seed 3 --out " + d2).rc == 0);
  CHECK(run("synth --n 2 --height 32 --width 32 --seed 4 --out " + d3).rc == 0);
  CHECK(slurp(d1 + "/manifest.txt") == slurp(d2 + "/manifest.txt"));
  CHECK(slurp(d1 + "/img-000.ppm") == slurp(d2 + "/img-000.ppm"));
  CHECK(slurp(d1 + "/msk-001.pgm") == slurp(d2 + "/msk-001.pgm"));
  CHECK(slurp(d1 + "/img-000.ppm") != slurp(d3 + "/img-000.ppm"));
}

TEST_CASE("train writes weights and history, and reruns bit for bit") {
  CHECK(fs::exists(ws().weights));
  const std::string hist = slurp(ws().history);
  CHECK(contains(hist, "epoch,mean_loss,mean_train_jaccard\n"));
  CHECK(contains(hist, "\n1,"));
  CHECK(contains(hist, "\n2,"));

  const std::string again = ws().file("net-again.weights");
  RunResult t = run("train --manifest " + ws().manifest + " --out " + again +
                    " --seed 5 " + kSmall);
  REQUIRE(t.rc == 0);
  CHECK(slurp(again) == slurp(ws().weights));

  // a different seed trains a different net
  const std::string other = ws().file("net-other.weights");
  REQUIRE(run("train --manifest " + ws().manifest + " --out " + other +
              " --seed 6 " + kSmall)
              .rc == 0);
  CHECK(slurp(other) != slurp(ws().weights));
}

TEST_CASE("predict writes one mask per image, deterministically") {
  const std::string preds = ws().file("preds");
  RunResult r = run("predict --weights " + ws().weights + " --manifest " +
                    ws().manifest + " --out " + preds + " --save-prob " +
                    kSmall);
  if (r.rc != 0) MESSAGE(r.err);
  REQUIRE(r.rc == 0);
  for (const char* stem : {"img-000", "img-001", "img-002"}) {
    const std::string m = preds + "/" + stem + ".pgm";
    REQUIRE(fs::exists(m));
    const GrayImage g = read_pgm(m);
    CHECK(g.h == 48);
    CHECK(g.w == 64);
    for (uint16_t v : g.v) CHECK((v == 0 || v == 255));
    CHECK(fs::exists(preds + "/" + std::string(stem) + "-prob.pgm"));
  }

  const std::string preds2 = ws().file("preds-again");
  REQUIRE(run("predict --weights " + ws().weights + " --manifest " +
              ws().manifest + " --out " + preds2 + " " + kSmall)
              .rc == 0);
  CHECK(slurp(preds + "/img-000.pgm") == slurp(preds2 + "/img-000.pgm"));
  CHECK(slurp(preds + "/img-002.pgm") == slurp(preds2 + "/img-002.pgm"));

  // feeding the same weights twice averages two identical maps
  const std::string preds3 = ws().file("preds-pair");
  REQUIRE(run("predict --weights " + ws().weights + " --weights " +
              ws().weights + " --manifest " + ws().manifest + " --out " +
              preds3 + " " + kSmall)
              .rc == 0);
  CHECK(slurp(preds + "/img-001.pgm") == slurp(preds3 + "/img-001.pgm"));
}

TEST_CASE("predict failures are reported per image") {
  const std::string out = ws().file("preds-fail");
  RunResult r = run("predict --weights " + ws().weights + " " + ws().data +
                    "/img-000.ppm " + ws().data + "/nope.ppm --out " + out +
                    " " + kSmall);
  CHECK(r.rc == 1);
  CHECK(contains(r.err, "nope"));
  CHECK(contains(r.err, "1 of 2 images failed"));
  CHECK(fs::exists(out + "/img-000.pgm"));  // the good one still lands

  RunResult dup = run("predict --weights " + ws().weights + " " + ws().data +
                      "/img-000.ppm " + ws().data + "/img-000.ppm --out " +
                      out + " " + kSmall);
  CHECK(dup.rc == 1);
  CHECK(contains(dup.err, "duplicate image name"));

  RunResult many =
      run("predict --weights " + ws().weights + " --weights " + ws().weights +
          " --weights " + ws().weights + " --weights " + ws().weights +
          " --weights " + ws().weights + " --weights " + ws().weights +
          " --weights " + ws().weights + " " + ws().data +
          "/img-000.ppm --out " + out + " " + kSmall);
  CHECK(many.rc == 1);
  CHECK(contains(many.err, "at most 6"));
}

TEST_CASE("evaluate scores predictions against the manifest") {
  // the truth masks themselves are a perfect prediction
  const std::string perfect = ws().file("pred-perfect");
  fs::create_directories(perfect);
  for (const char* i : {"000", "001", "002"})
    fs::copy_file(ws().data + "/msk-" + i + ".pgm",
                  perfect + "/img-" + i + ".pgm",
                  fs::copy_options::overwrite_existing);
  RunResult r = run("evaluate --manifest " + ws().manifest + " --pred " +
                    perfect + " " + kSmall);
  REQUIRE(r.rc == 0);
  CHECK(contains(r.out, "name,jaccard,dice\n"));
  CHECK(contains(r.out, "img-000,1.000000,1.000000\n"));
  CHECK(contains(r.out, "MEAN,1.000000,1.000000\n"));

  // empty masks for two of three: mean jaccard 1/3, dice derived from it
  const std::string mixed = ws().file("pred-mixed");
  fs::create_directories(mixed);
  fs::copy_file(ws().data + "/msk-000.pgm", mixed + "/img-000.pgm",
                fs::copy_options::overwrite_existing);
  Tensor<float> zero({1, 1, 48, 64});
  write_pgm_mask(zero, mixed + "/img-001.pgm");
  write_pgm_mask(zero, mixed + "/img-002.pgm");
  const std::string report = ws().file("report.csv");
  r = run("evaluate --manifest " + ws().manifest + " --pred " + mixed +
          " --report " + report + " " + kSmall);
  REQUIRE(r.rc == 0);
  CHECK(r.out.empty());
  const std::string rep = slurp(report);
  CHECK(contains(rep, "img-001,0.000000,0.000000\n"));
  CHECK(contains(rep, "MEAN,0.333333,0.500000\n"));
}

TEST_CASE("evaluate names missing predictions") {
  const std::string empty = ws().file("pred-none");
  fs::create_directories(empty);
  RunResult r = run("evaluate --manifest " + ws().manifest + " --pred " +
                    empty + " " + kSmall);
  CHECK(r.rc == 1);
  CHECK(contains(r.err, "missing prediction: img-000"));
  CHECK(contains(r.err, "missing prediction: img-002"));
}

TEST_CASE("gradcheck subcommand passes") {
  RunResult r = run("gradcheck");
  CHECK(r.rc == 0);
  CHECK(contains(r.out, "conv2d"));
  CHECK(contains(r.out, "gradcheck: all ok"));
}

TEST_CASE("ensemble training writes every member") {
  const std::string dir = ws().file("ensemble");
  RunResult r = run("train-ensemble --manifest " + ws().manifest +
                    " --out-dir " + dir + " --members 2 --seed 5 " + kSmall +
                    " --set epochs=1");
  if (r.rc != 0) MESSAGE(r.err);
  REQUIRE(r.rc == 0);
  CHECK(contains(r.out, "wrote 2 members"));
  for (int k = 1; k <= 2; ++k) {
    const std::string base = dir + "/member-" + std::to_string(k);
    CHECK(fs::exists(base + ".weights"));
    CHECK(fs::exists(base + "-history.csv"));
  }
  // bootstrap resamples differ, so the members do too
  CHECK(slurp(dir + "/member-1.weights") != slurp(dir + "/member-2.weights"));
}
