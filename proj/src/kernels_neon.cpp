// NEON builds of the dense kernels (float64x2).  NEON is baseline on
// aarch64, so no extra compile flags or runtime checks are needed beyond the
// dispatcher preferring this table on that architecture.
#include <arm_neon.h>

#include "fedinf/kernels.hpp"

namespace fedinf::kern {
namespace {

double v_dot(const double* x, const double* y, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
  }
  for (; i + 2 <= n; i += 2)
    acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void v_axpy(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    float64x2_t vy = vld1q_f64(y + i);
    vy = vfmaq_f64(vy, va, vld1q_f64(x + i));
    vst1q_f64(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void v_matvec(const double* w, const double* x, const double* b, double* y,
              std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r)
    y[r] = (b ? b[r] : 0.0) + v_dot(w + r * cols, x, cols);
}

void v_matvec_t_acc(const double* w, const double* dy, double* dx,
                    std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (dy[r] == 0.0) continue;
    v_axpy(dy[r], w + r * cols, dx, cols);
  }
}

void v_outer_acc(double* w_acc, const double* dy, const double* x,
                 std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (dy[r] == 0.0) continue;
    v_axpy(dy[r], x, w_acc + r * cols, cols);
  }
}

void v_relu(const double* x, double* y, std::size_t n) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(y + i, vmaxq_f64(vld1q_f64(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void v_relu_backward(const double* pre, const double* dy, double* dx,
                     std::size_t n) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const uint64x2_t mask = vcgtq_f64(vld1q_f64(pre + i), zero);
    const float64x2_t g = vld1q_f64(dy + i);
    vst1q_f64(dx + i, vreinterpretq_f64_u64(vandq_u64(
                          vreinterpretq_u64_f64(g), mask)));
  }
  for (; i < n; ++i) dx[i] = pre[i] > 0.0 ? dy[i] : 0.0;
}

}  // namespace

const Ops neon_ops = {
    "neon", v_dot,  v_axpy, v_matvec, v_matvec_t_acc,
    v_outer_acc, v_relu, v_relu_backward,
};

}  // namespace fedinf::kern
