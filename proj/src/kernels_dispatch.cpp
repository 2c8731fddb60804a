// SPDX-License-Identifier: Apache-2.0

#include "averify/kernels.hpp"

#include <atomic>
#include <stdexcept>

namespace averify::kernels {

#if defined(AVERIFY_BUILD_AVX2)
const Backend* avx2_backend_impl();
#endif

const Backend* avx2_backend() {
#if defined(AVERIFY_BUILD_AVX2)
  static const bool supported = __builtin_cpu_supports("avx2");
  return supported ? avx2_backend_impl() : nullptr;
#else
  return nullptr;
#endif
}

namespace {

const Backend* widest_available() {
  if (const Backend* b = avx2_backend()) return b;
  return &scalar_backend();
}

std::atomic<const Backend*>& active_slot() {
  static std::atomic<const Backend*> slot{widest_available()};
  return slot;
}

}  // namespace

const Backend& active_backend() { return *active_slot().load(std::memory_order_relaxed); }

void select_backend(std::string_view name) {
  if (name == "auto") {
    active_slot().store(widest_available(), std::memory_order_relaxed);
    return;
  }
  if (name == "scalar") {
    active_slot().store(&scalar_backend(), std::memory_order_relaxed);
    return;
  }
  if (name == "avx2") {
    if (const Backend* b = avx2_backend()) {
      active_slot().store(b, std::memory_order_relaxed);
      return;
    }
    throw std::invalid_argument("kernel backend 'avx2' is not available on this machine");
  }
  throw std::invalid_argument("unknown kernel backend '" + std::string(name) + "'");
}

std::vector<std::string> available_backends() {
  std::vector<std::string> names = {"auto", "scalar"};
  if (avx2_backend() != nullptr) names.emplace_back("avx2");
  return names;
}

}  // namespace averify::kernels
