#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqmtl/kernels.hpp"
#include "seqmtl/rng.hpp"
#include "seqmtl/tensor.hpp"

using namespace seqmtl;

namespace {

std::vector<double> random_vector(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12 * (1.0 + std::abs(a[i])));
}

}  // namespace

TEST_CASE("scalar table computes the reference results") {
  const auto& k = kernels::scalar_table();
  const std::vector<double> a{1.0, 2.0, 3.0}, b{4.0, -5.0, 6.0};
  CHECK(k.dot(a.data(), b.data(), 3) == 12.0);
  CHECK(k.sum_squares(a.data(), 3) == 14.0);
  std::vector<double> y{1.0, 1.0, 1.0};
  k.axpy(2.0, a.data(), y.data(), 3);
  CHECK(y == std::vector<double>{3.0, 5.0, 7.0});
  k.scale(0.5, y.data(), 3);
  CHECK(y == std::vector<double>{1.5, 2.5, 3.5});

  const std::vector<double> w{1.0, 2.0, 3.0, 4.0, 5.0, 6.0};  // 2 x 3
  std::vector<double> out{0.5, 0.0};
  k.gemv(w.data(), 2, 3, a.data(), out.data());
  CHECK(out == std::vector<double>{14.5, 32.0});
  std::vector<double> xg(3, 0.0);
  const std::vector<double> yg{1.0, -1.0};
  k.gemv_t(w.data(), 2, 3, yg.data(), xg.data());
  CHECK(xg == std::vector<double>{-3.0, -3.0, -3.0});
  std::vector<double> wg(6, 0.0);
  k.ger(wg.data(), 2, 3, yg.data(), a.data());
  CHECK(wg == std::vector<double>{1.0, 2.0, 3.0, -1.0, -2.0, -3.0});
}

TEST_CASE("every available table agrees with the scalar table") {
  const auto& ref = kernels::scalar_table();
  Rng rng(17);
  for (const kernels::Table* t : kernels::available_tables()) {
    CAPTURE(std::string(t->name));
    for (std::size_t n : {1u, 3u, 4u, 7u, 8u, 13u, 64u, 101u}) {
      const auto a = random_vector(rng, n), b = random_vector(rng, n);
      CHECK(std::abs(t->dot(a.data(), b.data(), n) - ref.dot(a.data(), b.data(), n)) < 1e-12);
      CHECK(std::abs(t->sum_squares(a.data(), n) - ref.sum_squares(a.data(), n)) < 1e-12);
      auto y1 = b, y2 = b;
      t->axpy(0.3, a.data(), y1.data(), n);
      ref.axpy(0.3, a.data(), y2.data(), n);
      check_close(y1, y2);
      t->scale(-1.7, y1.data(), n);
      ref.scale(-1.7, y2.data(), n);
      check_close(y1, y2);

      const std::size_t rows = 1 + n % 5;
      const auto w = random_vector(rng, rows * n);
      const auto x = random_vector(rng, n);
      const auto yg = random_vector(rng, rows);
      std::vector<double> o1(rows, 0.25), o2(rows, 0.25);
      t->gemv(w.data(), rows, n, x.data(), o1.data());
      ref.gemv(w.data(), rows, n, x.data(), o2.data());
      check_close(o1, o2);
      std::vector<double> g1(n, 0.1), g2(n, 0.1);
      t->gemv_t(w.data(), rows, n, yg.data(), g1.data());
      ref.gemv_t(w.data(), rows, n, yg.data(), g2.data());
      check_close(g1, g2);
      auto w1 = w, w2 = w;
      t->ger(w1.data(), rows, n, yg.data(), x.data());
      ref.ger(w2.data(), rows, n, yg.data(), x.data());
      check_close(w1, w2);
    }
  }
}

TEST_CASE("kernel selection") {
  kernels::select("scalar");
  CHECK(std::string(kernels::active().name) == "scalar");
  kernels::select("auto");
  CHECK(std::string(kernels::active().name) == std::string(kernels::available_tables().back()->name));
  CHECK_THROWS_AS(kernels::select("sse9"), std::invalid_argument);
  if (kernels::neon_table() == nullptr) CHECK_THROWS_AS(kernels::select("neon"), std::invalid_argument);
  kernels::select("auto");
}
