#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cdnn/config.hpp"
#include "cdnn/gradcheck.hpp"
#include "cdnn/manifest.hpp"
#include "cdnn/metrics.hpp"
#include "cdnn/netpbm.hpp"
#include "cdnn/network.hpp"
#include "cdnn/postprocess.hpp"
#include "cdnn/preprocess.hpp"
#include "cdnn/synthetic.hpp"
#include "cdnn/train.hpp"
#include "cdnn/weights_io.hpp"

namespace fs = std::filesystem;
using namespace cdnn;

namespace {

struct ConfigArgs {
  std::string file;
  std::vector<std::string> sets;
  uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

void add_config_opts(CLI::App* sub, ConfigArgs& c) {
  sub->add_option("--config", c.file, "flat key=value config file");
  sub->add_option("--set", c.sets, "override one config key, key=value");
  c.seed_opt = sub->add_option("--seed", c.seed, "override the run seed");
}

RunConfig make_config(const ConfigArgs& c) {
  RunConfig cfg = c.file.empty() ? RunConfig{} : load_config(c.file);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("--set expects key=value, got " + kv);
    set_config_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed_opt && c.seed_opt->count() > 0) cfg.train.seed = c.seed;
  return cfg;
}

void write_text_atomic(const std::string& text, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::FILE* f = std::fopen(tmp.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot write " + path);
    const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size();
    std::fclose(f);
    if (!ok) throw std::runtime_error("short write to " + path);
  }
  fs::rename(tmp, path);
}

Dataset load_training_data(const std::string& manifest, const RunConfig& cfg) {
  const auto entries = read_manifest(manifest);
  Dataset data = load_dataset(entries, cfg.image_h, cfg.image_w);
  if (!data.empty() && data[0].image.shape.c != cfg.train.input_channels)
    throw std::runtime_error("input_channels mismatch: images preprocess to " +
                             std::to_string(data[0].image.shape.c) +
                             " channels");
  return data;
}

int run_train(const ConfigArgs& ca, const std::string& manifest,
              const std::string& out, const std::string& history) {
  const RunConfig cfg = make_config(ca);
  const Dataset data = load_training_data(manifest, cfg);
  const TrainResult res = train_single(data, cfg.train, cfg.train.seed);
  save_weights(res.net, out);
  if (!history.empty()) write_history_csv(res.history, history);
  const EpochStats& last = res.history.back();
  std::printf("trained %zu images for %d epochs: loss %.6f, jaccard %.4f\n",
              data.size(), last.epoch, last.mean_loss,
              last.mean_train_jaccard);
  std::printf("weights: %s\n", out.c_str());
  return 0;
}

int run_train_ensemble(const ConfigArgs& ca, const std::string& manifest,
                       const std::string& out_dir, int members) {
  RunConfig cfg = make_config(ca);
  if (members > 0) cfg.train.ensemble_size = members;
  const Dataset data = load_training_data(manifest, cfg);
  fs::create_directories(out_dir);
  const auto results = train_ensemble(data, cfg.train);
  for (size_t k = 0; k < results.size(); ++k) {
    char stem[64];
    std::snprintf(stem, sizeof stem, "member-%zu", k + 1);
    const std::string base = out_dir + "/" + stem;
    save_weights(results[k].net, base + ".weights");
    write_history_csv(results[k].history, base + "-history.csv");
    const EpochStats& last = results[k].history.back();
    std::printf("%s: loss %.6f, jaccard %.4f\n", stem, last.mean_loss,
                last.mean_train_jaccard);
  }
  std::printf("wrote %zu members to %s\n", results.size(), out_dir.c_str());
  return 0;
}

int run_predict(const ConfigArgs& ca, const std::vector<std::string>& weights,
                std::vector<std::string> images, const std::string& manifest,
                const std::string& out_dir, bool save_prob) {
  const RunConfig cfg = make_config(ca);
  if (weights.size() > 6)
    throw std::runtime_error("predict accepts at most 6 weight files");

  std::vector<Network<float>> nets;
  nets.reserve(weights.size());
  for (const auto& p : weights) nets.push_back(load_weights(p));
  for (const auto& n : nets)
    if (n.input_channels != nets[0].input_channels)
      throw std::runtime_error("weight files disagree on input channels");

  if (!manifest.empty())
    for (const auto& e : read_manifest(manifest)) images.push_back(e.image);
  if (images.empty()) throw std::runtime_error("no images to predict");

  fs::create_directories(out_dir);
  std::set<std::string> seen;
  std::vector<std::string> failed;
  for (const auto& path : images) {
    const std::string name = fs::path(path).stem().string();
    try {
      if (!seen.insert(name).second)
        throw std::runtime_error("duplicate image name");
      const Tensor<float> x =
          preprocess(read_ppm(path), cfg.image_h, cfg.image_w);
      std::vector<Tensor<float>> maps;
      maps.reserve(nets.size());
      for (const auto& net : nets)
        maps.push_back(forward(net, x, FwdMode::Infer));
      const Tensor<float> avg = ensemble_average(maps);
      const Tensor<float> mask =
          dual_threshold_segment(avg, cfg.th_high, cfg.th_low);
      write_pgm_mask(mask, out_dir + "/" + name + ".pgm");
      if (save_prob) write_pgm16(avg, out_dir + "/" + name + "-prob.pgm");
      std::printf("%s -> %s/%s.pgm\n", path.c_str(), out_dir.c_str(),
                  name.c_str());
    } catch (const std::exception& e) {
      std::fprintf(stderr, "%s: %s\n", name.c_str(), e.what());
      failed.push_back(name);
    }
  }
  if (!failed.empty()) {
    std::fprintf(stderr, "%zu of %zu images failed\n", failed.size(),
                 images.size());
    return 1;
  }
  return 0;
}

int run_evaluate(const ConfigArgs& ca, const std::string& manifest,
                 const std::string& pred_dir, const std::string& report_path) {
  const RunConfig cfg = make_config(ca);
  const auto entries = read_manifest(manifest);

  std::vector<std::string> missing;
  std::vector<ReportRow> rows;
  for (const auto& e : entries) {
    const std::string pred_path = pred_dir + "/" + e.name + ".pgm";
    if (!fs::exists(pred_path)) {
      missing.push_back(e.name);
      continue;
    }
    const Tensor<float> truth =
        preprocess_mask(read_pgm(e.mask), cfg.image_h, cfg.image_w);
    const Tensor<float> pred = mask_tensor(read_pgm(pred_path));
    rows.push_back({e.name, jaccard_index(truth, pred)});
  }
  if (!missing.empty()) {
    for (const auto& n : missing)
      std::fprintf(stderr, "missing prediction: %s\n", n.c_str());
    return 1;
  }
  const std::string report = format_report(rows);
  if (report_path.empty())
    std::fputs(report.c_str(), stdout);
  else
    write_text_atomic(report, report_path);
  return 0;
}

Tensor<double> rand_tensor(Shape4 s, Rng& rng, double lo = -1.0,
                           double hi = 1.0) {
  Tensor<double> t(s);
  for (auto& v : t.data) v = lo + (hi - lo) * rng.uniform();
  return t;
}

Tensor<double> coeff_for(Shape4 s, uint64_t seed) {
  Rng r(seed);
  return rand_tensor(s, r, -1.0, 1.0);
}

int run_gradcheck(uint64_t seed) {
  using Var = Tape<double>::Var;
  const double tol = 1e-4;
  Rng rng(seed);
  bool all_ok = true;

  auto report = [&](const char* name, const GradCheckResult& res) {
    const bool ok = res.ok && res.max_err < tol;
    std::printf("%-12s max err %.3e  %s\n", name, res.max_err,
                ok ? "ok" : "FAIL");
    all_ok = all_ok && ok;
  };

  {
    const Shape4 xs{2, 3, 6, 7}, ws{4, 3, 3, 3};
    const Tensor<double> c = coeff_for({2, 4, 6, 7}, 11);
    report("conv2d",
           grad_check(
               [&](Rng& r) {
                 return std::vector<Tensor<double>>{
                     rand_tensor(xs, r), rand_tensor(ws, r),
                     rand_tensor({1, 4, 1, 1}, r)};
               },
               [&](Tape<double>& tp, const std::vector<Var>& v) {
                 return tp.weighted_sum(tp.conv2d(v[0], v[1], v[2]), c);
               },
               {}, rng));
  }
  {
    const Shape4 xs{2, 4, 6, 7}, ws{4, 3, 3, 3};
    const Tensor<double> c = coeff_for({2, 3, 6, 7}, 13);
    report("tconv2d",
           grad_check(
               [&](Rng& r) {
                 return std::vector<Tensor<double>>{
                     rand_tensor(xs, r), rand_tensor(ws, r),
                     rand_tensor({1, 3, 1, 1}, r)};
               },
               [&](Tape<double>& tp, const std::vector<Var>& v) {
                 return tp.weighted_sum(tp.tconv2d(v[0], v[1], v[2]), c);
               },
               {}, rng));
  }
  const Shape4 s{2, 3, 6, 4};
  auto gen1 = [&](Rng& r) {
    return std::vector<Tensor<double>>{rand_tensor(s, r)};
  };
  {
    const Tensor<double> c = coeff_for(s, 17);
    report("relu", grad_check(gen1,
                              [&](Tape<double>& tp, const std::vector<Var>& v) {
                                return tp.weighted_sum(tp.relu(v[0]), c);
                              },
                              {}, rng));
    report("sigmoid",
           grad_check(gen1,
                      [&](Tape<double>& tp, const std::vector<Var>& v) {
                        return tp.weighted_sum(tp.sigmoid(v[0]), c);
                      },
                      {}, rng));
  }
  {
    const Tensor<double> c = coeff_for({s.b, s.c, s.h / 2, s.w / 2}, 19);
    report("maxpool2x2",
           grad_check(gen1,
                      [&](Tape<double>& tp, const std::vector<Var>& v) {
                        return tp.weighted_sum(tp.maxpool2x2(v[0]), c);
                      },
                      {}, rng));
  }
  {
    const Tensor<double> c = coeff_for({s.b, s.c, s.h * 2, s.w * 2}, 23);
    report("upsample2x2",
           grad_check(gen1,
                      [&](Tape<double>& tp, const std::vector<Var>& v) {
                        return tp.weighted_sum(tp.upsample2x2(v[0]), c);
                      },
                      {}, rng));
  }
  {
    const Tensor<double> c = coeff_for(s, 29);
    report("batchnorm",
           grad_check(
               [&](Rng& r) {
                 return std::vector<Tensor<double>>{
                     rand_tensor(s, r), rand_tensor({1, s.c, 1, 1}, r, 0.5, 1.5),
                     rand_tensor({1, s.c, 1, 1}, r, -0.5, 0.5)};
               },
               [&](Tape<double>& tp, const std::vector<Var>& v) {
                 return tp.weighted_sum(
                     tp.batchnorm_train(v[0], v[1], v[2], 1e-5), c);
               },
               {}, rng));
  }
  {
    const Tensor<double> c = coeff_for(s, 31);
    report("dropout",
           grad_check(gen1,
                      [&](Tape<double>& tp, const std::vector<Var>& v) {
                        Rng mask_rng(99);
                        return tp.weighted_sum(tp.dropout(v[0], 0.5, mask_rng),
                                               c);
                      },
                      {}, rng));
  }
  {
    Rng tr(41);
    Tensor<double> target({1, 1, 8, 8});
    for (auto& v : target.data) v = tr.bernoulli(0.5) ? 1.0 : 0.0;
    report("jaccard",
           grad_check(
               [&](Rng& r) {
                 return std::vector<Tensor<double>>{
                     rand_tensor({1, 1, 8, 8}, r, 0.02, 0.98)};
               },
               [&](Tape<double>& tp, const std::vector<Var>& v) {
                 return tp.jaccard(v[0], target, 1.0);
               },
               {}, rng));
  }
  std::printf("gradcheck: %s\n", all_ok ? "all ok" : "FAILED");
  return all_ok ? 0 : 1;
}

int run_inspect(int channels, int64_t h, int64_t w, uint64_t seed) {
  Rng rng(seed);
  const Network<float> net = build_cdnn<float>(channels, rng);
  std::vector<std::pair<std::string, Shape4>> trace;
  const Tensor<float> dummy({1, channels, h, w});
  forward(net, dummy, FwdMode::Infer, nullptr, &trace);

  std::printf("%-10s %-8s %-7s %-9s %s\n", "layer", "kind", "filter",
              "features", "output");
  for (size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& s = net.layers[i];
    const char* kind = s.kind == LayerKind::Conv       ? "conv"
                       : s.kind == LayerKind::Pool     ? "pool"
                       : s.kind == LayerKind::Deconv   ? "deconv"
                       : s.kind == LayerKind::Upsample ? "upsample"
                                                       : "output";
    char filter[24] = "-";
    if (s.filter > 0)
      std::snprintf(filter, sizeof filter, "%dx%d", s.filter, s.filter);
    char features[16] = "-";
    if (s.out_features > 0)
      std::snprintf(features, sizeof features, "%d", s.out_features);
    const Shape4& os = trace[i].second;
    std::printf("%-10s %-8s %-7s %-9s %lldx%lld\n", s.name.c_str(), kind,
                filter, features, (long long)os.h, (long long)os.w);
  }
  std::printf("parameters: %lld\n", (long long)net.param_count());
  return 0;
}

int run_synth(int n, int64_t h, int64_t w, uint64_t seed,
              const std::string& out_dir) {
  const auto entries = generate_synthetic(n, h, w, seed, out_dir);
  std::printf("wrote %zu image/mask pairs and manifest.txt to %s\n",
              entries.size(), out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conv-deconv skin lesion segmentation"};
  app.require_subcommand(1);
  int rc = 0;

  auto* train = app.add_subcommand("train", "train one network");
  ConfigArgs train_ca;
  std::string train_manifest, train_out, train_history;
  add_config_opts(train, train_ca);
  train->add_option("--manifest", train_manifest, "training corpus manifest")
      ->required();
  train->add_option("--out", train_out, "weight file to write")->required();
  train->add_option("--history", train_history, "per-epoch loss csv");
  train->callback(
      [&] { rc = run_train(train_ca, train_manifest, train_out, train_history); });

  auto* tens = app.add_subcommand("train-ensemble", "train a bagging ensemble");
  ConfigArgs tens_ca;
  std::string tens_manifest, tens_out;
  int tens_members = 0;
  add_config_opts(tens, tens_ca);
  tens->add_option("--manifest", tens_manifest, "training corpus manifest")
      ->required();
  tens->add_option("--out-dir", tens_out, "directory for member weights")
      ->required();
  tens->add_option("--members", tens_members, "override ensemble_size");
  tens->callback([&] {
    rc = run_train_ensemble(tens_ca, tens_manifest, tens_out, tens_members);
  });

  auto* pred = app.add_subcommand("predict", "segment images");
  ConfigArgs pred_ca;
  std::vector<std::string> pred_weights, pred_images;
  std::string pred_manifest, pred_out;
  bool pred_prob = false;
  add_config_opts(pred, pred_ca);
  pred->add_option("--weights", pred_weights, "weight file, repeat per member")
      ->required()
      ->allow_extra_args(false);
  pred->add_option("images", pred_images, "image files (ppm)");
  pred->add_option("--manifest", pred_manifest, "take images from a manifest");
  pred->add_option("--out", pred_out, "output directory")->required();
  pred->add_flag("--save-prob", pred_prob, "also write probability maps");
  pred->callback([&] {
    rc = run_predict(pred_ca, pred_weights, pred_images, pred_manifest,
                     pred_out, pred_prob);
  });

  auto* eval = app.add_subcommand("evaluate", "score predictions");
  ConfigArgs eval_ca;
  std::string eval_manifest, eval_pred, eval_report;
  add_config_opts(eval, eval_ca);
  eval->add_option("--manifest", eval_manifest, "truth manifest")->required();
  eval->add_option("--pred", eval_pred, "directory of predicted masks")
      ->required();
  eval->add_option("--report", eval_report, "write the report here");
  eval->callback(
      [&] { rc = run_evaluate(eval_ca, eval_manifest, eval_pred, eval_report); });

  auto* gc = app.add_subcommand("gradcheck", "finite-difference primitives");
  uint64_t gc_seed = 1;
  gc->add_option("--seed", gc_seed, "rng seed");
  gc->callback([&] { rc = run_gradcheck(gc_seed); });

  auto* inspect = app.add_subcommand("inspect-net", "print the layer table");
  int ins_channels = 7;
  int64_t ins_h = 192, ins_w = 256;
  uint64_t ins_seed = 1;
  inspect->add_option("--channels", ins_channels, "input channels");
  inspect->add_option("--height", ins_h, "input height");
  inspect->add_option("--width", ins_w, "input width");
  inspect->add_option("--seed", ins_seed, "init seed");
  inspect->callback(
      [&] { rc = run_inspect(ins_channels, ins_h, ins_w, ins_seed); });

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  int sy_n = 64;
  int64_t sy_h = 96, sy_w = 128;
  uint64_t sy_seed = 1;
  std::string sy_out;
  synth->add_option("--n", sy_n, "number of image/mask pairs");
  synth->add_option("--height", sy_h, "image height");
  synth->add_option("--width", sy_w, "image width");
  synth->add_option("--seed", sy_seed, "corpus seed");
  synth->add_option("--out", sy_out, "output directory")->required();
  synth->callback([&] { rc = run_synth(sy_n, sy_h, sy_w, sy_seed, sy_out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return rc;
}
