#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "seqmtl/kernels.hpp"

namespace seqmtl::kernels {

#if defined(SEQMTL_HAVE_AVX2)
const Table* avx2_table_unchecked();
#endif
#if defined(SEQMTL_HAVE_NEON)
const Table* neon_table_unchecked();
#endif

const Table* avx2_table() {
#if defined(SEQMTL_HAVE_AVX2)
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? avx2_table_unchecked() : nullptr;
#else
  return nullptr;
#endif
}

const Table* neon_table() {
#if defined(SEQMTL_HAVE_NEON)
  // Advanced SIMD is mandatory on AArch64.
  return neon_table_unchecked();
#else
  return nullptr;
#endif
}

std::vector<const Table*> available_tables() {
  std::vector<const Table*> out{&scalar_table()};
  if (const Table* t = avx2_table()) out.push_back(t);
  if (const Table* t = neon_table()) out.push_back(t);
  return out;
}

namespace {

const Table* resolve(std::string_view name) {
  if (name.empty() || name == "auto") {
    if (const Table* t = avx2_table()) return t;
    if (const Table* t = neon_table()) return t;
    return &scalar_table();
  }
  for (const Table* t : available_tables()) {
    if (name == t->name) return t;
  }
  throw std::invalid_argument("kernel variant unavailable on this machine: " + std::string(name));
}

const Table* initial() {
  const char* env = std::getenv("SEQMTL_KERNELS");
  return resolve(env != nullptr ? std::string_view(env) : std::string_view("auto"));
}

std::atomic<const Table*>& current() {
  static std::atomic<const Table*> table{initial()};
  return table;
}

}  // namespace

const Table& active() { return *current().load(std::memory_order_acquire); }

void select(std::string_view name) { current().store(resolve(name), std::memory_order_release); }

}  // namespace seqmtl::kernels
