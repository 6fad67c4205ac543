#pragma once

// Dense double-precision kernels used by every layer's forward and backward
// pass. A scalar reference table is always available; vector tables (AVX2+FMA
// on x86-64, NEON on AArch64) are compiled when the target supports them and
// picked at runtime. SEQMTL_KERNELS=scalar|avx2|neon|auto overrides the choice.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace seqmtl::kernels {

struct Table {
  const char* name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y += W x, W row-major rows x cols
  void (*gemv)(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y);
  // x_grad += W^T y_grad
  void (*gemv_t)(const double* w, std::size_t rows, std::size_t cols, const double* y_grad,
                 double* x_grad);
  // W += y_grad x^T
  void (*ger)(double* w, std::size_t rows, std::size_t cols, const double* y_grad, const double* x);
  double (*sum_squares)(const double* x, std::size_t n);
  void (*scale)(double alpha, double* x, std::size_t n);
};

const Table& scalar_table();
// nullptr when the variant was not compiled in or the CPU lacks the feature.
const Table* avx2_table();
const Table* neon_table();

// Every table usable on this machine, scalar first.
std::vector<const Table*> available_tables();

const Table& active();
// "auto" picks the widest available variant. Throws on an unknown or
// unavailable name.
void select(std::string_view name);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}
inline double sum_squares(std::span<const double> x) {
  return active().sum_squares(x.data(), x.size());
}

}  // namespace seqmtl::kernels
