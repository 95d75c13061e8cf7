#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace coseg {

// Process-wide worker count used by the voxel-parallel kernels. 0 selects
// std::thread::hardware_concurrency().
void set_num_threads(unsigned n);
unsigned num_threads();

// Splits [0, n) into contiguous chunks and calls fn(begin, end) on each.
// Every kernel that uses this writes disjoint output ranges, so results do
// not depend on the thread count.
template <typename Fn>
void parallel_chunks(std::size_t n, Fn&& fn, std::size_t min_chunk = 4096) {
    const std::size_t workers =
        std::min<std::size_t>(num_threads(), std::max<std::size_t>(1, n / std::max<std::size_t>(1, min_chunk)));
    if (workers <= 1) {
        fn(std::size_t{0}, n);
        return;
    }
    const std::size_t step = (n + workers - 1) / workers;
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) {
        const std::size_t b = w * step;
        const std::size_t e = std::min(n, b + step);
        if (b >= e) break;
        pool.emplace_back([&fn, b, e] { fn(b, e); });
    }
    fn(std::size_t{0}, std::min(n, step));
}

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t min_chunk = 4096) {
    parallel_chunks(
        n,
        [&fn](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) fn(i);
        },
        min_chunk);
}

}  // namespace coseg
