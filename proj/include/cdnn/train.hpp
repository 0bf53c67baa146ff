#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cdnn/adam.hpp"
#include "cdnn/augment.hpp"
#include "cdnn/network.hpp"

namespace cdnn {

struct TrainItem {
  Tensor<float> image;  // (1,C,H,W), values in [0,1]
  Tensor<float> mask;   // (1,1,H,W), values in {0,1}
  std::string name;
};
using Dataset = std::vector<TrainItem>;

struct TrainConfig {
  int batch_size = 16;
  double learning_rate = 0.003;
  int epochs = 500;
  int ensemble_size = 6;
  uint64_t seed = 1;
  double bn_momentum = 0.1;  // new = 0.9*old + 0.1*batch
  double loss_smooth = 1.0;
  bool augment_enabled = true;
  AugmentConfig augment;
  AdamConfig adam;  // lr here is overridden by learning_rate
  int input_channels = 7;
};

struct EpochStats {
  int epoch;  // 1-based
  double mean_loss;
  double mean_train_jaccard;  // prediction binarized at 0.5
};

struct TrainResult {
  Network<float> net;
  std::vector<EpochStats> history;
};

// n index draws with replacement from [0, n)
std::vector<size_t> bootstrap_sample(size_t n, Rng& rng);

// One network trained on the whole dataset. All stochastic choices (epoch
// shuffles, augmentation, dropout) come from one stream seeded here, so a
// repeated call reproduces the run bit for bit. Throws on non-finite loss,
// reporting the step and per-tensor parameter norms.
TrainResult train_single(const Dataset& data, const TrainConfig& cfg,
                         uint64_t seed);

// Bagging: member k trains on its own bootstrap resample under its own
// substream of cfg.seed.
std::vector<TrainResult> train_ensemble(const Dataset& data,
                                        const TrainConfig& cfg);

// Jaccard index of a thresholded prediction against a binary mask;
// empty-empty counts as perfect overlap.
double binary_jaccard(const Tensor<float>& target, const Tensor<float>& pred,
                      float threshold = 0.5f);

// "epoch,mean_loss,mean_train_jaccard" header plus one row per epoch,
// doubles printed to round-trip precision
std::string history_csv(const std::vector<EpochStats>& hist);
void write_history_csv(const std::vector<EpochStats>& hist,
                       const std::string& path);

}  // namespace cdnn
