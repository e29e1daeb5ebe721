#include "fedinf/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace fedinf::kern {
namespace {

double s_dot(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void s_axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void s_matvec(const double* w, const double* x, const double* b, double* y,
              std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = b ? b[r] : 0.0;
    const double* wr = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
    y[r] = acc;
  }
}

void s_matvec_t_acc(const double* w, const double* dy, double* dx,
                    std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double g = dy[r];
    if (g == 0.0) continue;
    const double* wr = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) dx[c] += g * wr[c];
  }
}

void s_outer_acc(double* w_acc, const double* dy, const double* x,
                 std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double g = dy[r];
    if (g == 0.0) continue;
    double* wr = w_acc + r * cols;
    for (std::size_t c = 0; c < cols; ++c) wr[c] += g * x[c];
  }
}

void s_relu(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void s_relu_backward(const double* pre, const double* dy, double* dx,
                     std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] = pre[i] > 0.0 ? dy[i] : 0.0;
}

const Ops* resolve() {
  const char* forced = std::getenv("FEDINF_KERNEL");
  if (forced) {
    if (std::strcmp(forced, "scalar") == 0) return &scalar_ops;
#if defined(FEDINF_BUILD_AVX2)
    if (std::strcmp(forced, "avx2") == 0) return &avx2_ops;
#endif
#if defined(FEDINF_BUILD_NEON)
    if (std::strcmp(forced, "neon") == 0) return &neon_ops;
#endif
    return &scalar_ops;  // unknown or unavailable name: fail safe
  }
#if defined(FEDINF_BUILD_AVX2)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return &avx2_ops;
#endif
#if defined(FEDINF_BUILD_NEON)
  return &neon_ops;  // baseline on aarch64
#endif
  return &scalar_ops;
}

}  // namespace

const Ops scalar_ops = {
    "scalar", s_dot,  s_axpy, s_matvec, s_matvec_t_acc,
    s_outer_acc, s_relu, s_relu_backward,
};

const Ops& active() {
  static const Ops* chosen = resolve();
  return *chosen;
}

const char* active_name() { return active().name; }

}  // namespace fedinf::kern
