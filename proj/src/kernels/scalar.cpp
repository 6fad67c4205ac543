#include "seqmtl/kernels.hpp"

namespace seqmtl::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_scalar(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] += dot_scalar(w + r * cols, x, cols);
}

void gemv_t_scalar(const double* w, std::size_t rows, std::size_t cols, const double* y_grad,
                   double* x_grad) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (y_grad[r] != 0.0) axpy_scalar(y_grad[r], w + r * cols, x_grad, cols);
  }
}

void ger_scalar(double* w, std::size_t rows, std::size_t cols, const double* y_grad,
                const double* x) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (y_grad[r] != 0.0) axpy_scalar(y_grad[r], x, w + r * cols, cols);
  }
}

double sum_squares_scalar(const double* x, std::size_t n) { return dot_scalar(x, x, n); }

void scale_scalar(double alpha, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

}  // namespace

const Table& scalar_table() {
  static const Table table{"scalar",      dot_scalar,         axpy_scalar,
                           gemv_scalar,   gemv_t_scalar,      ger_scalar,
                           sum_squares_scalar, scale_scalar};
  return table;
}

}  // namespace seqmtl::kernels
