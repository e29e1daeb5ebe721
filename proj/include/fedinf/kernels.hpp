#pragma once

#include <cstddef>

namespace fedinf::kern {

/// Hot inner loops of the toolkit (dense matvec and friends), factored into a
/// dispatch table so SIMD builds of the same kernels can be selected at
/// runtime.  The scalar implementations are the reference semantics; vector
/// variants must match them to floating-point reassociation accuracy and are
/// equivalence-tested against them.
///
/// Matrices are row-major, rows x cols, tightly packed.
struct Ops {
  const char* name;

  double (*dot)(const double* x, const double* y, std::size_t n);
  /// y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  /// y = W x + b          (W: rows x cols, x: cols, b/y: rows; b may be null)
  void (*matvec)(const double* w, const double* x, const double* b, double* y,
                 std::size_t rows, std::size_t cols);
  /// dx += W^T dy         (accumulates into dx)
  void (*matvec_t_acc)(const double* w, const double* dy, double* dx,
                       std::size_t rows, std::size_t cols);
  /// dW += dy x^T         (accumulates into w_acc)
  void (*outer_acc)(double* w_acc, const double* dy, const double* x,
                    std::size_t rows, std::size_t cols);
  /// y = max(x, 0)
  void (*relu)(const double* x, double* y, std::size_t n);
  /// dx = dy where pre > 0 else 0
  void (*relu_backward)(const double* pre, const double* dy, double* dx,
                        std::size_t n);
};

/// Reference implementation; always available on every platform.
extern const Ops scalar_ops;

/// Kernels chosen for this process: the widest variant the CPU supports, or
/// the one named by the FEDINF_KERNEL environment variable ("scalar",
/// "avx2", "neon").  Resolved once, on first use.
const Ops& active();

const char* active_name();

#if defined(FEDINF_BUILD_AVX2)
extern const Ops avx2_ops;
#endif
#if defined(FEDINF_BUILD_NEON)
extern const Ops neon_ops;
#endif

inline double dot(const double* x, const double* y, std::size_t n) {
  return active().dot(x, y, n);
}
inline void axpy(double a, const double* x, double* y, std::size_t n) {
  active().axpy(a, x, y, n);
}
inline void matvec(const double* w, const double* x, const double* b,
                   double* y, std::size_t rows, std::size_t cols) {
  active().matvec(w, x, b, y, rows, cols);
}
inline void matvec_t_acc(const double* w, const double* dy, double* dx,
                         std::size_t rows, std::size_t cols) {
  active().matvec_t_acc(w, dy, dx, rows, cols);
}
inline void outer_acc(double* w_acc, const double* dy, const double* x,
                      std::size_t rows, std::size_t cols) {
  active().outer_acc(w_acc, dy, x, rows, cols);
}
inline void relu(const double* x, double* y, std::size_t n) {
  active().relu(x, y, n);
}
inline void relu_backward(const double* pre, const double* dy, double* dx,
                          std::size_t n) {
  active().relu_backward(pre, dy, dx, n);
}

}  // namespace fedinf::kern
