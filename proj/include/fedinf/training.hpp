#pragma once

#include <cstdint>
#include <vector>

#include "fedinf/core.hpp"
#include "fedinf/nn.hpp"
#include "fedinf/rng.hpp"

namespace fedinf {

struct TrainConfig {
  int steps = 5;            // outer steps E
  int inner_samples = 300;  // batches drawn (and model updates) per step
  int batch_size = 64;
  int fgsm_steps = 50;      // S sign-ascent steps taken by the adversary
  double fgsm_step = 0.05;  // adversary step size in logit space
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int f = 0;                // adversary budget trained against
  std::uint64_t seed = 0;
  std::size_t pool_dim = 64;
  std::size_t hidden = 128;
  bool adversarial = true;  // false: plain clean training (baselines)
};

void validate_train_config(const TrainConfig& cfg);

/// Number of corrupted clients drawn for one training sample: m in [1, f]
/// with probability proportional to C(n, m).  f == 0 returns 0.
int sample_adversary_count(int n, int f, RngStream& rng);

/// The unnormalized weights C(n, 1) ... C(n, f) behind that draw.
std::vector<double> adversary_count_weights(int n, int f);

struct TraceRow {
  int step = 0;            // 1-based global update index
  double clean_loss = 0.0; // batch CE on the uncorrupted panels
  double adv_loss = 0.0;   // batch CE on the corrupted panels
};

struct TrainResult {
  DeepSetModel model;
  std::vector<TraceRow> trace;
};

/// Adversarial training: each update draws a batch of panels, an adversary
/// count m, a client permutation placing the corrupted clients in the last
/// m slots, and one shared logit matrix for them; the logits take
/// fgsm_steps sign-ascent steps against the batch cross-entropy before the
/// model takes a single Adam step on the corrupted batch.
TrainResult adversarial_train(const std::vector<ProbitPanel>& data,
                              const TrainConfig& cfg);

}  // namespace fedinf
