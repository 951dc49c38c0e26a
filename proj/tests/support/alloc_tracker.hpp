#pragma once

// Interposes the glibc malloc family to measure peak heap usage. Both
// operator new and Eigen's aligned allocator bottom out in malloc, so this
// sees every allocation in the process. Include from exactly one translation
// unit per binary (the definitions are strong symbols).

#include <malloc.h>

#include <atomic>
#include <cstdlib>

extern "C" {
void* __libc_malloc(size_t size);
void __libc_free(void* p);
void* __libc_calloc(size_t n, size_t size);
void* __libc_realloc(void* p, size_t size);
void* __libc_memalign(size_t align, size_t size);
}

namespace alloctrack {

inline std::atomic<long long> g_current{0};
inline std::atomic<long long> g_peak{0};

inline void record(long long delta) {
  const long long now = g_current.fetch_add(delta, std::memory_order_relaxed) + delta;
  if (delta > 0) {
    long long peak = g_peak.load(std::memory_order_relaxed);
    while (now > peak && !g_peak.compare_exchange_weak(peak, now, std::memory_order_relaxed)) {
    }
  }
}

inline void reset_peak() { g_peak.store(g_current.load()); }
inline long long peak_bytes() { return g_peak.load(); }

}  // namespace alloctrack

extern "C" {

void* malloc(size_t size) noexcept {
  void* p = __libc_malloc(size);
  if (p) alloctrack::record(static_cast<long long>(malloc_usable_size(p)));
  return p;
}

void free(void* p) noexcept {
  if (p) alloctrack::record(-static_cast<long long>(malloc_usable_size(p)));
  __libc_free(p);
}

void* calloc(size_t n, size_t size) noexcept {
  void* p = __libc_calloc(n, size);
  if (p) alloctrack::record(static_cast<long long>(malloc_usable_size(p)));
  return p;
}

void* realloc(void* p, size_t size) noexcept {
  if (p) alloctrack::record(-static_cast<long long>(malloc_usable_size(p)));
  void* q = __libc_realloc(p, size);
  if (q) alloctrack::record(static_cast<long long>(malloc_usable_size(q)));
  return q;
}

void* memalign(size_t align, size_t size) noexcept {
  void* p = __libc_memalign(align, size);
  if (p) alloctrack::record(static_cast<long long>(malloc_usable_size(p)));
  return p;
}

void* aligned_alloc(size_t align, size_t size) noexcept { return memalign(align, size); }

int posix_memalign(void** out, size_t align, size_t size) noexcept {
  void* p = memalign(align, size);
  if (!p) return 12;  // ENOMEM
  *out = p;
  return 0;
}

}  // extern "C"
