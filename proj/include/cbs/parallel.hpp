#pragma once

// Deterministic ensemble reduction.
//
// Realizations are grouped into fixed-size chunks keyed by realization index.
// Each chunk is accumulated sequentially, then chunk results are merged in a
// fixed pairwise tree. Neither step depends on the worker count, so the
// serial reference and the OpenMP path produce bitwise-identical results.

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <utility>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cbs {

enum class Exec { serial, openmp };

inline constexpr std::size_t kRealizationChunk = 16;

/// Number of OpenMP workers, 1 without OpenMP.
inline int worker_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline void set_worker_count(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

/// In-place pairwise tree merge: level s merges parts[i] with parts[i + s].
template <class Acc>
Acc tree_merge(std::vector<Acc> parts) {
  if (parts.empty()) return Acc{};
  for (std::size_t stride = 1; stride < parts.size(); stride *= 2) {
    for (std::size_t i = 0; i + stride < parts.size(); i += 2 * stride) {
      parts[i].merge(parts[i + stride]);
    }
  }
  return std::move(parts.front());
}

/// Runs body(realization, acc) for realization in [first, first + n).
///
/// `make()` returns an empty accumulator; Acc needs merge(const Acc&).
template <class Acc, class Make, class Body>
Acc reduce_realizations(std::size_t first, std::size_t n, Make&& make, Body&& body,
                        Exec exec = Exec::openmp,
                        std::size_t chunk = kRealizationChunk) {
  const std::size_t n_chunks = (n + chunk - 1) / chunk;
  std::vector<Acc> parts;
  parts.reserve(n_chunks);
  for (std::size_t c = 0; c < n_chunks; ++c) parts.push_back(make());

  auto run_chunk = [&](std::size_t c) {
    const std::size_t lo = first + c * chunk;
    const std::size_t hi = std::min(first + n, lo + chunk);
    for (std::size_t i = lo; i < hi; ++i) body(i, parts[c]);
  };

  if (exec == Exec::serial) {
    for (std::size_t c = 0; c < n_chunks; ++c) run_chunk(c);
  } else {
    std::exception_ptr failure;
    std::mutex failure_mutex;
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(n_chunks); ++c) {
      try {
        run_chunk(static_cast<std::size_t>(c));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  }
  if (parts.empty()) return make();
  return tree_merge(std::move(parts));
}

}  // namespace cbs
