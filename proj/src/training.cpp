#include "fedinf/training.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fedinf/kernels.hpp"

namespace fedinf {

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.steps < 1) throw std::invalid_argument("train: steps must be >= 1");
  if (cfg.inner_samples < 1)
    throw std::invalid_argument("train: inner samples must be >= 1");
  if (cfg.batch_size < 1)
    throw std::invalid_argument("train: batch size must be >= 1");
  if (cfg.fgsm_steps < 0)
    throw std::invalid_argument("train: fgsm steps must be >= 0");
  if (!(cfg.fgsm_step > 0.0))
    throw std::invalid_argument("train: fgsm step size must be > 0");
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("train: lr must be > 0");
  if (cfg.f < 0) throw std::invalid_argument("train: f must be >= 0");
  if (cfg.pool_dim < 1 || cfg.hidden < 1)
    throw std::invalid_argument("train: bad model dimensions");
}

std::vector<double> adversary_count_weights(int n, int f) {
  if (n < 1 || f < 0 || f > n)
    throw std::invalid_argument("adversary count: need 0 <= f <= n");
  std::vector<double> w;
  w.reserve(std::size_t(f));
  double c = 1.0;  // C(n, 0)
  for (int m = 1; m <= f; ++m) {
    c = c * double(n - m + 1) / double(m);
    w.push_back(c);
  }
  return w;
}

int sample_adversary_count(int n, int f, RngStream& rng) {
  if (f == 0) return 0;
  const std::vector<double> w = adversary_count_weights(n, f);
  double total = 0.0;
  for (double x : w) total += x;
  const double u = rng.uniform01() * total;
  double acc = 0.0;
  for (int m = 1; m <= f; ++m) {
    acc += w[std::size_t(m - 1)];
    if (u < acc) return m;
  }
  return f;
}

namespace {

/// Forward activations for one client row plus its pooled contribution.
struct RowTapes {
  std::vector<Mlp2Tape> tapes;
  Mat outputs;  // rows x pool_dim
};

double mean_clean_loss(const DeepSetModel& model,
                       const std::vector<const ProbitPanel*>& batch) {
  double total = 0.0;
  for (const ProbitPanel* p : batch) {
    const DeepSetOutput out = deepset_forward(model, p->probits);
    total += cross_entropy(out.probs, p->label);
  }
  return total / double(batch.size());
}

}  // namespace

TrainResult adversarial_train(const std::vector<ProbitPanel>& data,
                              const TrainConfig& cfg) {
  validate_train_config(cfg);
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  const std::size_t n = data.front().n(), K = data.front().k();
  if (K < 2) throw std::invalid_argument("train: needs at least two classes");
  for (const ProbitPanel& p : data) {
    if (p.n() != n || p.k() != K)
      throw std::invalid_argument("train: inconsistent panel shapes");
    if (p.label < 0 || p.label >= int(K))
      throw std::invalid_argument("train: panel without a valid label");
  }
  if (cfg.adversarial && int(n) <= 2 * cfg.f)
    throw std::invalid_argument("train: need n > 2f");

  RngStream init_rng = RngStream::derive(cfg.seed, "train/init");
  RngStream batch_rng = RngStream::derive(cfg.seed, "train/batch");
  RngStream adv_rng = RngStream::derive(cfg.seed, "train/adversary");

  TrainResult result;
  result.model = make_deepset(K, cfg.pool_dim, cfg.hidden, init_rng);
  DeepSetModel& model = result.model;
  const std::size_t p = cfg.pool_dim;

  AdamOptimizer adam(model, {cfg.lr, cfg.beta1, cfg.beta2, cfg.eps});
  DeepSetGrads grads;
  grads.match(model);

  const std::size_t B = std::size_t(cfg.batch_size);
  std::vector<const ProbitPanel*> batch(B);
  std::vector<int> perm(n);
  // Per-panel honest-row activations; adversarial rows are batch-shared.
  std::vector<RowTapes> honest(B);
  Mat honest_pool(B, p);
  std::vector<Mlp2Tape> adv_tapes;
  Mat adv_rows, adv_logits, adv_out;
  std::vector<double> adv_sum(p), pooled(p), scores(K), dpooled(p),
      dpool_total(p), dlogit(K), dper_row(p);
  Mlp2Tape mu_tape;

  int global_step = 0;
  for (int e = 0; e < cfg.steps; ++e) {
    for (int t = 0; t < cfg.inner_samples; ++t) {
      ++global_step;
      for (std::size_t b = 0; b < B; ++b)
        batch[b] = &data[std::size_t(batch_rng.below(data.size()))];

      const int m = cfg.adversarial
                        ? sample_adversary_count(int(n), cfg.f, adv_rng)
                        : 0;
      const std::size_t honest_n = n - std::size_t(m);
      for (std::size_t i = 0; i < n; ++i) perm[i] = int(i);
      if (m > 0) adv_rng.shuffle(perm);

      // Honest slots: forward once per batch, keep tapes for the update.
      for (std::size_t b = 0; b < B; ++b) {
        honest[b].tapes.resize(honest_n);
        honest[b].outputs = Mat(honest_n, p);
        double* pool = honest_pool.row(b);
        std::fill(pool, pool + p, 0.0);
        for (std::size_t j = 0; j < honest_n; ++j) {
          const double* row = batch[b]->probits.row(std::size_t(perm[j]));
          mlp2_forward(model.rho, row, &honest[b].tapes[j],
                       honest[b].outputs.row(j));
          kern::axpy(1.0, honest[b].outputs.row(j), pool, p);
        }
      }

      if (m > 0) {
        adv_logits = Mat(std::size_t(m), K);
        for (double& v : adv_logits.a) v = adv_rng.normal();
        adv_rows = Mat(std::size_t(m), K);
        adv_out = Mat(std::size_t(m), p);
        adv_tapes.resize(std::size_t(m));
      }
      auto refresh_adversaries = [&] {
        std::fill(adv_sum.begin(), adv_sum.end(), 0.0);
        for (int j = 0; j < m; ++j) {
          const ProbitVector h = project_softmax(
              std::span<const double>(adv_logits.row(std::size_t(j)), K));
          std::copy(h.p.begin(), h.p.end(), adv_rows.row(std::size_t(j)));
          mlp2_forward(model.rho, adv_rows.row(std::size_t(j)),
                       &adv_tapes[std::size_t(j)], adv_out.row(std::size_t(j)));
          kern::axpy(1.0, adv_out.row(std::size_t(j)), adv_sum.data(), p);
        }
      };
      if (m > 0) refresh_adversaries();

      // Adversary: sign ascent on the batch CE w.r.t. the shared logits.
      std::vector<double> dprobit(K);
      for (int s = 0; m > 0 && s < cfg.fgsm_steps; ++s) {
        std::fill(dpool_total.begin(), dpool_total.end(), 0.0);
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t j = 0; j < p; ++j)
            pooled[j] = (honest_pool.at(b, j) + adv_sum[j]) / double(n);
          mlp2_forward(model.mu, pooled.data(), &mu_tape, scores.data());
          const std::vector<double> probs =
              project_softmax(std::span<const double>(scores.data(), K)).p;
          const std::vector<double> dscores =
              ce_grad_scores(probs, batch[b]->label);
          mlp2_input_grad(model.mu, mu_tape, dscores.data(), dpool_total.data());
        }
        for (std::size_t j = 0; j < p; ++j) dper_row[j] = dpool_total[j] / double(n);
        for (int j = 0; j < m; ++j) {
          std::fill(dprobit.begin(), dprobit.end(), 0.0);
          mlp2_input_grad(model.rho, adv_tapes[std::size_t(j)], dper_row.data(),
                          dprobit.data());
          softmax_vjp(adv_rows.row(std::size_t(j)), dprobit.data(),
                      dlogit.data(), K);
          double* vj = adv_logits.row(std::size_t(j));
          for (std::size_t c = 0; c < K; ++c) {
            if (dlogit[c] > 0.0)
              vj[c] += cfg.fgsm_step;
            else if (dlogit[c] < 0.0)
              vj[c] -= cfg.fgsm_step;
          }
        }
        refresh_adversaries();
      }

      // One model update on the corrupted batch (mean CE).
      grads.zero();
      std::fill(dpool_total.begin(), dpool_total.end(), 0.0);
      double adv_loss = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t j = 0; j < p; ++j)
          pooled[j] = (honest_pool.at(b, j) + adv_sum[j]) / double(n);
        mlp2_forward(model.mu, pooled.data(), &mu_tape, scores.data());
        const std::vector<double> probs =
            project_softmax(std::span<const double>(scores.data(), K)).p;
        adv_loss += cross_entropy(probs, batch[b]->label);
        std::vector<double> dscores = ce_grad_scores(probs, batch[b]->label);
        for (double& g : dscores) g /= double(B);
        std::fill(dpooled.begin(), dpooled.end(), 0.0);
        mlp2_backward(model.mu, mu_tape, dscores.data(), grads.mu,
                      dpooled.data());
        for (std::size_t j = 0; j < p; ++j) dper_row[j] = dpooled[j] / double(n);
        for (std::size_t j = 0; j < honest_n; ++j)
          mlp2_backward(model.rho, honest[b].tapes[j], dper_row.data(),
                        grads.rho, nullptr);
        kern::axpy(1.0, dpooled.data(), dpool_total.data(), p);
      }
      if (m > 0) {
        for (std::size_t j = 0; j < p; ++j)
          dper_row[j] = dpool_total[j] / double(n);
        for (int j = 0; j < m; ++j)
          mlp2_backward(model.rho, adv_tapes[std::size_t(j)], dper_row.data(),
                        grads.rho, nullptr);
      }

      TraceRow row;
      row.step = global_step;
      row.clean_loss = mean_clean_loss(model, batch);
      row.adv_loss = adv_loss / double(B);
      result.trace.push_back(row);

      adam.step(model, grads);
    }
  }
  return result;
}

}  // namespace fedinf
