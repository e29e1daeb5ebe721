#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "fedinf/core.hpp"
#include "fedinf/nn.hpp"
#include "fedinf/rng.hpp"
#include "fedinf/synth.hpp"
#include "fedinf/training.hpp"

using namespace fedinf;

namespace {

std::vector<ProbitPanel> tiny_dataset(std::uint64_t seed, int count) {
  SyntheticSpec spec;
  spec.n = 7;
  spec.k = 4;
  spec.count = count;
  return generate_synthetic(spec, seed).panels;
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.steps = 2;
  cfg.inner_samples = 12;
  cfg.batch_size = 8;
  cfg.fgsm_steps = 3;
  cfg.fgsm_step = 0.2;
  cfg.lr = 1e-3;
  cfg.f = 2;
  cfg.seed = 7;
  cfg.pool_dim = 8;
  cfg.hidden = 12;
  return cfg;
}

bool models_identical(const DeepSetModel& a, const DeepSetModel& b) {
  const auto eq = [](const std::vector<double>& x,
                     const std::vector<double>& y) {
    return x.size() == y.size() &&
           std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
  };
  return eq(a.rho.w1.a, b.rho.w1.a) && eq(a.rho.b1, b.rho.b1) &&
         eq(a.rho.w2.a, b.rho.w2.a) && eq(a.rho.b2, b.rho.b2) &&
         eq(a.mu.w1.a, b.mu.w1.a) && eq(a.mu.b1, b.mu.b1) &&
         eq(a.mu.w2.a, b.mu.w2.a) && eq(a.mu.b2, b.mu.b2);
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig cfg = tiny_config();
  validate_train_config(cfg);
  cfg.steps = 0;
  CHECK_THROWS_AS(validate_train_config(cfg), std::invalid_argument);
  cfg = tiny_config();
  cfg.lr = 0.0;
  CHECK_THROWS_AS(validate_train_config(cfg), std::invalid_argument);
  cfg = tiny_config();
  cfg.f = -1;
  CHECK_THROWS_AS(validate_train_config(cfg), std::invalid_argument);
  cfg = tiny_config();
  cfg.batch_size = 0;
  CHECK_THROWS_AS(validate_train_config(cfg), std::invalid_argument);
  cfg = tiny_config();
  cfg.fgsm_steps = -1;
  CHECK_THROWS_AS(validate_train_config(cfg), std::invalid_argument);
}

TEST_CASE("adversary count weights are binomial coefficients") {
  // n = 17, f = 4: C(17,1..4) = 17, 136, 680, 2380.
  const std::vector<double> w = adversary_count_weights(17, 4);
  REQUIRE(w.size() == 4);
  CHECK(w[0] == 17.0);
  CHECK(w[1] == 136.0);
  CHECK(w[2] == 680.0);
  CHECK(w[3] == 2380.0);
  CHECK(adversary_count_weights(9, 0).empty());
}

TEST_CASE("adversary count draw: range, f=0, and distribution shape") {
  RngStream rng(401);
  CHECK(sample_adversary_count(17, 0, rng) == 0);

  std::vector<int> hits(5, 0);
  const int draws = 20000;
  for (int t = 0; t < draws; ++t) {
    const int m = sample_adversary_count(17, 4, rng);
    REQUIRE(m >= 1);
    REQUIRE(m <= 4);
    ++hits[std::size_t(m)];
  }
  // Expected proportions: C(17,m) / sum = 17/3213, 136/3213, 680/3213,
  // 2380/3213.  Allow generous sampling noise.
  const double total = 17.0 + 136.0 + 680.0 + 2380.0;
  const double want4 = 2380.0 / total;
  const double got4 = double(hits[4]) / draws;
  CHECK(std::fabs(got4 - want4) < 0.02);
  const double want1 = 17.0 / total;
  const double got1 = double(hits[1]) / draws;
  CHECK(std::fabs(got1 - want1) < 0.01);
  CHECK(hits[4] > hits[3]);
  CHECK(hits[3] > hits[2]);
  CHECK(hits[2] > hits[1]);
}

TEST_CASE("training trace has one row per model update") {
  const auto data = tiny_dataset(11, 64);
  const TrainConfig cfg = tiny_config();
  const TrainResult res = adversarial_train(data, cfg);
  REQUIRE(res.trace.size() == std::size_t(cfg.steps * cfg.inner_samples));
  for (std::size_t i = 0; i < res.trace.size(); ++i) {
    CHECK(res.trace[i].step == int(i) + 1);
    CHECK(std::isfinite(res.trace[i].clean_loss));
    CHECK(std::isfinite(res.trace[i].adv_loss));
    CHECK(res.trace[i].clean_loss >= 0.0);
    CHECK(res.trace[i].adv_loss >= 0.0);
  }
  CHECK(res.model.num_classes() == 4);
  CHECK(res.model.pool_dim() == cfg.pool_dim);
}

TEST_CASE("same seed and data give byte-identical models") {
  const auto data = tiny_dataset(13, 48);
  const TrainConfig cfg = tiny_config();
  const TrainResult a = adversarial_train(data, cfg);
  const TrainResult b = adversarial_train(data, cfg);
  CHECK(models_identical(a.model, b.model));
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].clean_loss == b.trace[i].clean_loss);
    CHECK(a.trace[i].adv_loss == b.trace[i].adv_loss);
  }

  TrainConfig other = cfg;
  other.seed = cfg.seed + 1;
  const TrainResult c = adversarial_train(data, other);
  CHECK_FALSE(models_identical(a.model, c.model));
}

TEST_CASE("clean mode ignores the adversary knobs") {
  const auto data = tiny_dataset(17, 48);
  TrainConfig cfg = tiny_config();
  cfg.adversarial = false;

  TrainConfig variant = cfg;
  variant.fgsm_steps = 9;   // must not matter when adversarial is off
  variant.fgsm_step = 0.9;
  const TrainResult a = adversarial_train(data, cfg);
  const TrainResult b = adversarial_train(data, variant);
  CHECK(models_identical(a.model, b.model));
  // Clean training reports the clean batch loss in both columns; the two
  // are computed through different reduction orders, so allow rounding.
  for (const auto& row : a.trace)
    CHECK(row.adv_loss ==
          doctest::Approx(row.clean_loss).epsilon(1e-12).scale(1.0));
}

TEST_CASE("adversarial corruption raises the training loss") {
  const auto data = tiny_dataset(19, 64);
  TrainConfig cfg = tiny_config();
  cfg.steps = 1;
  cfg.inner_samples = 20;
  const TrainResult res = adversarial_train(data, cfg);
  double clean_sum = 0.0, adv_sum = 0.0;
  for (const auto& row : res.trace) {
    clean_sum += row.clean_loss;
    adv_sum += row.adv_loss;
  }
  // On average the ascent must find something worse than the clean batch.
  CHECK(adv_sum > clean_sum);
}

TEST_CASE("training reduces the loss on the training data") {
  const auto data = tiny_dataset(23, 96);
  TrainConfig cfg = tiny_config();
  cfg.steps = 4;
  cfg.inner_samples = 40;
  cfg.adversarial = false;
  const TrainResult res = adversarial_train(data, cfg);

  const std::size_t m = res.trace.size();
  double head = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < 20; ++i) head += res.trace[i].clean_loss;
  for (std::size_t i = m - 20; i < m; ++i) tail += res.trace[i].clean_loss;
  CHECK(tail < head);

  // The trained model should beat chance on its own training panels.
  int correct = 0;
  for (const auto& panel : data) {
    const DeepSetOutput out = deepset_forward(res.model, panel.probits);
    if (argmax_index(std::span<const double>(out.probs)) == panel.label)
      ++correct;
  }
  CHECK(double(correct) / double(data.size()) > 0.35);  // chance = 0.25
}

TEST_CASE("training refuses an empty or inconsistent dataset") {
  const TrainConfig cfg = tiny_config();
  CHECK_THROWS_AS(adversarial_train({}, cfg), std::invalid_argument);

  auto data = tiny_dataset(29, 8);
  data.push_back(data.front());
  data.back().probits = Mat(7, 5);  // K mismatch
  CHECK_THROWS_AS(adversarial_train(data, cfg), std::invalid_argument);
}
