#include "cdnn/train.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <utility>

#include "cdnn/tape.hpp"

namespace cdnn {

std::vector<size_t> bootstrap_sample(size_t n, Rng& rng) {
  check(n > 0, "bootstrap_sample: empty dataset");
  std::vector<size_t> out(n);
  for (auto& v : out) v = size_t(rng.uniform_int(int64_t(n)));
  return out;
}

double binary_jaccard(const Tensor<float>& target, const Tensor<float>& pred,
                      float threshold) {
  check(target.shape == pred.shape, "binary_jaccard: shape mismatch");
  int64_t inter = 0, uni = 0;
  for (int64_t k = 0; k < target.numel(); ++k) {
    const bool t = target.data[k] > 0.5f;
    const bool p = pred.data[k] >= threshold;
    inter += t && p;
    uni += t || p;
  }
  return uni == 0 ? 1.0 : double(inter) / double(uni);
}

namespace {

void validate_dataset(const Dataset& data, int input_channels) {
  check(!data.empty(), "train: empty dataset");
  const Shape4 is = data[0].image.shape;
  check(is.b == 1 && is.c == input_channels,
        "train: images must be (1," + std::to_string(input_channels) +
            ",H,W)");
  for (const auto& item : data) {
    check(item.image.shape == is, "train: images differ in shape");
    check(item.mask.shape == Shape4{1, 1, is.h, is.w},
          "train: mask shape does not match its image");
  }
}

[[noreturn]] void abort_nonfinite(const Network<float>& net, double loss_val,
                                  int epoch, int64_t global_step) {
  std::string msg = "training diverged: loss " + std::to_string(loss_val) +
                    " at epoch " + std::to_string(epoch) + ", step " +
                    std::to_string(global_step) + "; parameter norms:";
  net.for_each_param([&](const std::string& name, const Tensor<float>& t) {
    double sq = 0;
    for (float v : t.data) sq += double(v) * v;
    char buf[64];
    std::snprintf(buf, sizeof buf, " %s=%.4g", name.c_str(), std::sqrt(sq));
    msg += buf;
  });
  throw std::runtime_error(msg);
}

}  // namespace

TrainResult train_single(const Dataset& data, const TrainConfig& cfg,
                         uint64_t seed) {
  validate_dataset(data, cfg.input_channels);
  check(cfg.batch_size >= 1, "train: batch_size must be positive");
  check(cfg.epochs >= 0, "train: epochs must be non-negative");
  check(cfg.learning_rate >= 0, "train: learning rate must be non-negative");

  const Shape4 is = data[0].image.shape;
  const size_t n = data.size();

  Rng rng(seed);
  TrainResult res{build_cdnn<float>(cfg.input_channels, rng), {}};
  Network<float>& net = res.net;

  std::vector<Tensor<float>*> param_ptrs;
  net.for_each_param([&](const std::string&, Tensor<float>& t) {
    param_ptrs.push_back(&t);
  });
  AdamConfig ac = cfg.adam;
  ac.lr = cfg.learning_rate;
  Adam<float> opt(ac);

  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;

  Tensor<float> aug_img, aug_mask;
  int64_t global_step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (size_t i = n - 1; i > 0; --i) {
      const size_t j = size_t(rng.uniform_int(int64_t(i) + 1));
      std::swap(order[i], order[j]);
    }

    double loss_sum = 0, jacc_sum = 0;
    int steps = 0;
    for (size_t s0 = 0; s0 < n; s0 += size_t(cfg.batch_size)) {
      const int64_t bsz = int64_t(std::min(size_t(cfg.batch_size), n - s0));
      Tensor<float> xb({bsz, is.c, is.h, is.w});
      Tensor<float> tb({bsz, 1, is.h, is.w});
      const int64_t ipix = is.c * is.h * is.w, mpix = is.h * is.w;
      for (int64_t k = 0; k < bsz; ++k) {
        const TrainItem& item = data[order[s0 + size_t(k)]];
        const Tensor<float>* img = &item.image;
        const Tensor<float>* msk = &item.mask;
        if (cfg.augment_enabled) {
          augment(item.image, item.mask, cfg.augment, rng, aug_img, aug_mask);
          img = &aug_img;
          msk = &aug_mask;
        }
        std::memcpy(xb.ptr() + k * ipix, img->ptr(), size_t(ipix) * 4);
        std::memcpy(tb.ptr() + k * mpix, msk->ptr(), size_t(mpix) * 4);
      }

      Tape<float> tape;
      auto x = tape.input(std::move(xb), false);
      auto tn = forward_taped(net, tape, x, true, &rng);
      auto loss = tape.jaccard(tn.output, tb, cfg.loss_smooth);
      const double loss_val = double(tape.val(loss).data[0]);
      if (!std::isfinite(loss_val))
        abort_nonfinite(net, loss_val, epoch, global_step);
      tape.backward(loss);

      std::vector<const Tensor<float>*> gptrs;
      gptrs.reserve(tn.param_vars.size());
      for (auto v : tn.param_vars) gptrs.push_back(&tape.grad(v));
      opt.step(param_ptrs, gptrs);

      for (size_t li = 0; li < net.layers.size(); ++li) {
        if (!net.layers[li].has_batchnorm) continue;
        LayerParams<float>& p = net.params[li];
        const auto& bm = tn.batch_mean[li];
        const auto& bv = tn.batch_var[li];
        for (size_t c = 0; c < bm.size(); ++c) {
          p.run_mean.data[c] = float((1.0 - cfg.bn_momentum) *
                                         double(p.run_mean.data[c]) +
                                     cfg.bn_momentum * double(bm[c]));
          p.run_var.data[c] = float((1.0 - cfg.bn_momentum) *
                                        double(p.run_var.data[c]) +
                                    cfg.bn_momentum * double(bv[c]));
        }
      }

      loss_sum += loss_val;
      jacc_sum += binary_jaccard(tb, tape.val(tn.output));
      ++steps;
      ++global_step;
    }
    res.history.push_back(
        {epoch, loss_sum / steps, jacc_sum / steps});
  }
  return res;
}

std::vector<TrainResult> train_ensemble(const Dataset& data,
                                        const TrainConfig& cfg) {
  check(cfg.ensemble_size >= 1, "train: ensemble_size must be positive");
  std::vector<TrainResult> out;
  out.reserve(size_t(cfg.ensemble_size));
  for (int k = 0; k < cfg.ensemble_size; ++k) {
    Rng boot(Rng::substream(cfg.seed, uint64_t(2 * k + 1)));
    const std::vector<size_t> pick = bootstrap_sample(data.size(), boot);
    Dataset resampled;
    resampled.reserve(pick.size());
    for (size_t idx : pick) resampled.push_back(data[idx]);
    out.push_back(train_single(resampled, cfg,
                               Rng::substream(cfg.seed, uint64_t(2 * k))));
  }
  return out;
}

std::string history_csv(const std::vector<EpochStats>& hist) {
  std::string out = "epoch,mean_loss,mean_train_jaccard\n";
  char line[128];
  for (const auto& e : hist) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g\n", e.epoch, e.mean_loss,
                  e.mean_train_jaccard);
    out += line;
  }
  return out;
}

void write_history_csv(const std::vector<EpochStats>& hist,
                       const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  f << history_csv(hist);
  if (!f) throw std::runtime_error("cannot write history file " + path);
}

}  // namespace cdnn
