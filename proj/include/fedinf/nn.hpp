#pragma once

#include <cstdint>
#include <vector>

#include "fedinf/core.hpp"
#include "fedinf/rng.hpp"

namespace fedinf {

/// Two-layer perceptron: y = W2 relu(W1 x + b1) + b2.
struct Mlp2 {
  Mat w1;                  // hidden x in
  std::vector<double> b1;  // hidden
  Mat w2;                  // out x hidden
  std::vector<double> b2;  // out

  std::size_t in() const { return w1.cols; }
  std::size_t hidden() const { return w1.rows; }
  std::size_t out() const { return w2.rows; }
};

/// Forward activations cached for the backward pass.
struct Mlp2Tape {
  std::vector<double> x, pre1, h1;
};

struct Mlp2Grads {
  Mat w1;
  std::vector<double> b1;
  Mat w2;
  std::vector<double> b2;

  void match(const Mlp2& m);
  void zero();
};

/// y must hold m.out() entries; tape may be null when no backward follows.
void mlp2_forward(const Mlp2& m, const double* x, Mlp2Tape* tape, double* y);

/// Accumulates parameter gradients into g; when dx is non-null, accumulates
/// the input gradient into it (caller zeroes).
void mlp2_backward(const Mlp2& m, const Mlp2Tape& tape, const double* dy,
                   Mlp2Grads& g, double* dx);

/// Input gradient only (accumulated into dx); skips the parameter-gradient
/// work entirely.  Used by attack loops that never update the model.
void mlp2_input_grad(const Mlp2& m, const Mlp2Tape& tape, const double* dy,
                     double* dx);

/// Permutation-invariant set aggregator: per-row encoder rho (K -> p),
/// mean pooling over rows, decoder mu (p -> K), softmax on top.
struct DeepSetModel {
  Mlp2 rho;
  Mlp2 mu;

  std::size_t num_classes() const { return rho.in(); }
  std::size_t pool_dim() const { return mu.in(); }
};

/// He-style uniform fan-in initialization (weights ~ U(+-sqrt(6/fan_in)),
/// zero biases); the draw order is fixed, so one seed pins the model.
DeepSetModel make_deepset(std::size_t num_classes, std::size_t pool_dim,
                          std::size_t hidden, RngStream& rng);

std::size_t param_count(const DeepSetModel& m);

struct DeepSetOutput {
  std::vector<double> scores;  // pre-softmax
  std::vector<double> probs;
};

/// Inference path; pooling uses order-stable summation so the output is
/// bit-exact under any permutation of the input rows.
DeepSetOutput deepset_forward(const DeepSetModel& m, const Mat& rows);

/// Variant with trimmed-mean pooling (drop `trim` low/high per pooled
/// coordinate); used at inference only, on top of mean-pooling-trained
/// weights.  Requires rows.rows > 2 * trim.
DeepSetOutput deepset_tm_forward(const DeepSetModel& m, const Mat& rows,
                                 int trim);

struct DeepSetTape {
  std::vector<Mlp2Tape> rho_tapes;
  Mat rho_out;                 // n x p
  std::vector<double> pooled;  // p
  Mlp2Tape mu_tape;
  std::vector<double> scores, probs;
};

/// Training-path forward (running-sum pooling, activations kept).
void deepset_forward_tape(const DeepSetModel& m, const Mat& rows,
                          DeepSetTape& tape);

struct DeepSetGrads {
  Mlp2Grads rho, mu;

  void match(const DeepSetModel& m);
  void zero();
};

/// Backward from a gradient in score space.  Accumulates into g; when drows
/// is non-null it receives d loss / d rows (overwritten, not accumulated).
void deepset_backward(const DeepSetModel& m, const DeepSetTape& tape,
                      const std::vector<double>& dscores, DeepSetGrads& g,
                      Mat* drows);

/// Negative log-likelihood of the labeled class, probability clamped at
/// 1e-12.
double cross_entropy(const std::vector<double>& probs, int label);

/// d cross_entropy / d scores = probs - onehot(label).
std::vector<double> ce_grad_scores(const std::vector<double>& probs,
                                   int label);

/// Margin loss on pre-softmax scores: max_{k != label} s_k - s_label.
double cw_loss(const std::vector<double>& scores, int label);

/// Subgradient of cw_loss in score space (+1 at the best wrong class, -1 at
/// the label; ties to the lowest class index).
std::vector<double> cw_grad_scores(const std::vector<double>& scores,
                                   int label);

/// Pulls a probability-space gradient back through softmax into logit
/// space: dlogit_j = p_j (dprob_j - sum_k dprob_k p_k).
void softmax_vjp(const double* probs, const double* dprob, double* dlogit,
                 std::size_t k);

struct AdamConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction over the flattened parameter vector.
class AdamOptimizer {
public:
  AdamOptimizer(const DeepSetModel& model, AdamConfig cfg);
  void step(DeepSetModel& model, const DeepSetGrads& grads);
  long long steps_taken() const { return t_; }

private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  long long t_ = 0;
};

}  // namespace fedinf
