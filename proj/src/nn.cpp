#include "fedinf/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fedinf/kernels.hpp"

namespace fedinf {

void Mlp2Grads::match(const Mlp2& m) {
  w1 = Mat(m.w1.rows, m.w1.cols);
  b1.assign(m.b1.size(), 0.0);
  w2 = Mat(m.w2.rows, m.w2.cols);
  b2.assign(m.b2.size(), 0.0);
}

void Mlp2Grads::zero() {
  w1.fill(0.0);
  std::fill(b1.begin(), b1.end(), 0.0);
  w2.fill(0.0);
  std::fill(b2.begin(), b2.end(), 0.0);
}

void mlp2_forward(const Mlp2& m, const double* x, Mlp2Tape* tape, double* y) {
  const std::size_t in = m.in(), hid = m.hidden(), out = m.out();
  if (tape) {
    tape->x.assign(x, x + in);
    tape->pre1.resize(hid);
    tape->h1.resize(hid);
    kern::matvec(m.w1.a.data(), x, m.b1.data(), tape->pre1.data(), hid, in);
    kern::relu(tape->pre1.data(), tape->h1.data(), hid);
    kern::matvec(m.w2.a.data(), tape->h1.data(), m.b2.data(), y, out, hid);
  } else {
    std::vector<double> h(hid);
    kern::matvec(m.w1.a.data(), x, m.b1.data(), h.data(), hid, in);
    kern::relu(h.data(), h.data(), hid);
    kern::matvec(m.w2.a.data(), h.data(), m.b2.data(), y, out, hid);
  }
}

void mlp2_backward(const Mlp2& m, const Mlp2Tape& tape, const double* dy,
                   Mlp2Grads& g, double* dx) {
  const std::size_t in = m.in(), hid = m.hidden(), out = m.out();
  kern::axpy(1.0, dy, g.b2.data(), out);
  kern::outer_acc(g.w2.a.data(), dy, tape.h1.data(), out, hid);
  std::vector<double> dh1(hid, 0.0);
  kern::matvec_t_acc(m.w2.a.data(), dy, dh1.data(), out, hid);
  std::vector<double> dpre1(hid);
  kern::relu_backward(tape.pre1.data(), dh1.data(), dpre1.data(), hid);
  kern::axpy(1.0, dpre1.data(), g.b1.data(), hid);
  kern::outer_acc(g.w1.a.data(), dpre1.data(), tape.x.data(), hid, in);
  if (dx) kern::matvec_t_acc(m.w1.a.data(), dpre1.data(), dx, hid, in);
}

void mlp2_input_grad(const Mlp2& m, const Mlp2Tape& tape, const double* dy,
                     double* dx) {
  const std::size_t in = m.in(), hid = m.hidden(), out = m.out();
  std::vector<double> dh1(hid, 0.0);
  kern::matvec_t_acc(m.w2.a.data(), dy, dh1.data(), out, hid);
  std::vector<double> dpre1(hid);
  kern::relu_backward(tape.pre1.data(), dh1.data(), dpre1.data(), hid);
  kern::matvec_t_acc(m.w1.a.data(), dpre1.data(), dx, hid, in);
}

namespace {
Mlp2 make_mlp(std::size_t in, std::size_t hidden, std::size_t out,
              RngStream& rng) {
  Mlp2 m;
  m.w1 = Mat(hidden, in);
  m.b1.assign(hidden, 0.0);
  m.w2 = Mat(out, hidden);
  m.b2.assign(out, 0.0);
  const double lim1 = std::sqrt(6.0 / double(in));
  for (double& w : m.w1.a) w = rng.uniform(-lim1, lim1);
  const double lim2 = std::sqrt(6.0 / double(hidden));
  for (double& w : m.w2.a) w = rng.uniform(-lim2, lim2);
  return m;
}
}  // namespace

DeepSetModel make_deepset(std::size_t num_classes, std::size_t pool_dim,
                          std::size_t hidden, RngStream& rng) {
  if (num_classes < 2 || pool_dim < 1 || hidden < 1)
    throw std::invalid_argument("deepset: bad dimensions");
  DeepSetModel m;
  m.rho = make_mlp(num_classes, hidden, pool_dim, rng);
  m.mu = make_mlp(pool_dim, hidden, num_classes, rng);
  return m;
}

std::size_t param_count(const DeepSetModel& m) {
  auto one = [](const Mlp2& n) {
    return n.w1.a.size() + n.b1.size() + n.w2.a.size() + n.b2.size();
  };
  return one(m.rho) + one(m.mu);
}

DeepSetOutput deepset_forward(const DeepSetModel& m, const Mat& rows) {
  const std::size_t n = rows.rows, p = m.pool_dim();
  if (n == 0) throw std::invalid_argument("deepset: empty panel");
  if (rows.cols != m.num_classes())
    throw std::invalid_argument("deepset: class-count mismatch");
  Mat rho_out(n, p);
  for (std::size_t i = 0; i < n; ++i)
    mlp2_forward(m.rho, rows.row(i), nullptr, rho_out.row(i));
  std::vector<double> pooled(p), column(n);
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t i = 0; i < n; ++i) column[i] = rho_out.at(i, j);
    pooled[j] = stable_sum(column) / double(n);
  }
  DeepSetOutput out;
  out.scores.resize(m.num_classes());
  mlp2_forward(m.mu, pooled.data(), nullptr, out.scores.data());
  out.probs = project_softmax(out.scores).p;
  return out;
}

DeepSetOutput deepset_tm_forward(const DeepSetModel& m, const Mat& rows,
                                 int trim) {
  const std::size_t n = rows.rows, p = m.pool_dim();
  if (n == 0) throw std::invalid_argument("deepset: empty panel");
  if (rows.cols != m.num_classes())
    throw std::invalid_argument("deepset: class-count mismatch");
  if (trim < 0 || int(n) <= 2 * trim)
    throw std::invalid_argument("deepset_tm: needs n > 2*trim");
  Mat rho_out(n, p);
  for (std::size_t i = 0; i < n; ++i)
    mlp2_forward(m.rho, rows.row(i), nullptr, rho_out.row(i));
  std::vector<double> pooled(p), column(n);
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t i = 0; i < n; ++i) column[i] = rho_out.at(i, j);
    std::sort(column.begin(), column.end());
    double s = 0.0;
    for (std::size_t i = std::size_t(trim); i < n - std::size_t(trim); ++i)
      s += column[i];
    pooled[j] = s / double(n - 2 * std::size_t(trim));
  }
  DeepSetOutput out;
  out.scores.resize(m.num_classes());
  mlp2_forward(m.mu, pooled.data(), nullptr, out.scores.data());
  out.probs = project_softmax(out.scores).p;
  return out;
}

void deepset_forward_tape(const DeepSetModel& m, const Mat& rows,
                          DeepSetTape& tape) {
  const std::size_t n = rows.rows, p = m.pool_dim();
  if (n == 0) throw std::invalid_argument("deepset: empty panel");
  tape.rho_tapes.resize(n);
  tape.rho_out = Mat(n, p);
  for (std::size_t i = 0; i < n; ++i)
    mlp2_forward(m.rho, rows.row(i), &tape.rho_tapes[i], tape.rho_out.row(i));
  tape.pooled.assign(p, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    kern::axpy(1.0 / double(n), tape.rho_out.row(i), tape.pooled.data(), p);
  tape.scores.resize(m.num_classes());
  mlp2_forward(m.mu, tape.pooled.data(), &tape.mu_tape, tape.scores.data());
  tape.probs = project_softmax(tape.scores).p;
}

void DeepSetGrads::match(const DeepSetModel& m) {
  rho.match(m.rho);
  mu.match(m.mu);
}

void DeepSetGrads::zero() {
  rho.zero();
  mu.zero();
}

void deepset_backward(const DeepSetModel& m, const DeepSetTape& tape,
                      const std::vector<double>& dscores, DeepSetGrads& g,
                      Mat* drows) {
  const std::size_t n = tape.rho_tapes.size(), p = m.pool_dim();
  std::vector<double> dpooled(p, 0.0);
  mlp2_backward(m.mu, tape.mu_tape, dscores.data(), g.mu, dpooled.data());
  std::vector<double> dper_row(p);
  for (std::size_t j = 0; j < p; ++j) dper_row[j] = dpooled[j] / double(n);
  if (drows) {
    *drows = Mat(n, m.num_classes());
  }
  for (std::size_t i = 0; i < n; ++i)
    mlp2_backward(m.rho, tape.rho_tapes[i], dper_row.data(), g.rho,
                  drows ? drows->row(i) : nullptr);
}

double cross_entropy(const std::vector<double>& probs, int label) {
  if (label < 0 || label >= int(probs.size()))
    throw std::invalid_argument("cross_entropy: label out of range");
  return -std::log(std::max(probs[std::size_t(label)], 1e-12));
}

std::vector<double> ce_grad_scores(const std::vector<double>& probs,
                                   int label) {
  std::vector<double> g = probs;
  g[std::size_t(label)] -= 1.0;
  return g;
}

namespace {
int best_wrong_class(const std::vector<double>& scores, int label) {
  int best = -1;
  for (int k = 0; k < int(scores.size()); ++k) {
    if (k == label) continue;
    if (best < 0 || scores[std::size_t(k)] > scores[std::size_t(best)])
      best = k;
  }
  return best;
}
}  // namespace

double cw_loss(const std::vector<double>& scores, int label) {
  if (label < 0 || label >= int(scores.size()))
    throw std::invalid_argument("cw_loss: label out of range");
  if (scores.size() < 2)
    throw std::invalid_argument("cw_loss: needs at least two classes");
  const int k = best_wrong_class(scores, label);
  return scores[std::size_t(k)] - scores[std::size_t(label)];
}

std::vector<double> cw_grad_scores(const std::vector<double>& scores,
                                   int label) {
  std::vector<double> g(scores.size(), 0.0);
  const int k = best_wrong_class(scores, label);
  g[std::size_t(k)] = 1.0;
  g[std::size_t(label)] = -1.0;
  return g;
}

void softmax_vjp(const double* probs, const double* dprob, double* dlogit,
                 std::size_t k) {
  double inner = 0.0;
  for (std::size_t i = 0; i < k; ++i) inner += dprob[i] * probs[i];
  for (std::size_t i = 0; i < k; ++i)
    dlogit[i] = probs[i] * (dprob[i] - inner);
}

namespace {
template <class F>
void visit_blocks(DeepSetModel& m, F&& f) {
  f(m.rho.w1.a);
  f(m.rho.b1);
  f(m.rho.w2.a);
  f(m.rho.b2);
  f(m.mu.w1.a);
  f(m.mu.b1);
  f(m.mu.w2.a);
  f(m.mu.b2);
}

template <class F>
void visit_blocks(const DeepSetGrads& g, F&& f) {
  f(g.rho.w1.a);
  f(g.rho.b1);
  f(g.rho.w2.a);
  f(g.rho.b2);
  f(g.mu.w1.a);
  f(g.mu.b1);
  f(g.mu.w2.a);
  f(g.mu.b2);
}
}  // namespace

AdamOptimizer::AdamOptimizer(const DeepSetModel& model, AdamConfig cfg)
    : cfg_(cfg) {
  m_.assign(param_count(model), 0.0);
  v_.assign(param_count(model), 0.0);
}

void AdamOptimizer::step(DeepSetModel& model, const DeepSetGrads& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
  std::size_t off = 0;
  std::vector<const std::vector<double>*> gblocks;
  visit_blocks(grads, [&](const std::vector<double>& b) { gblocks.push_back(&b); });
  std::size_t bi = 0;
  visit_blocks(model, [&](std::vector<double>& params) {
    const std::vector<double>& g = *gblocks[bi++];
    if (g.size() != params.size())
      throw std::invalid_argument("adam: gradient shape mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const std::size_t j = off + i;
      m_[j] = cfg_.beta1 * m_[j] + (1.0 - cfg_.beta1) * g[i];
      v_[j] = cfg_.beta2 * v_[j] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m_[j] / bc1;
      const double vhat = v_[j] / bc2;
      params[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    off += params.size();
  });
}

}  // namespace fedinf
