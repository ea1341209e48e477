#pragma once

#include <cstddef>
#include <functional>

namespace ergolab {

/// Worker count used by every parallel loop in the library. Results never
/// depend on it: work is split into fixed-size chunks and reductions are
/// summed in chunk order.
void set_thread_count(std::size_t threads);
std::size_t thread_count();

inline constexpr std::size_t kChunkSize = 4096;

inline std::size_t chunk_count(std::size_t n, std::size_t chunk = kChunkSize) {
    return (n + chunk - 1) / chunk;
}

/// Calls fn(chunk_index, begin, end) for every chunk of [0, n).
void parallel_chunks(std::size_t n,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn,
                     std::size_t chunk = kChunkSize);

}  // namespace ergolab
