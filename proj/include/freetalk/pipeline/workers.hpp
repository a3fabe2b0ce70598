#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace freetalk::pipeline {

/// Runs fn(i) for i in [0, count) on at most `workers` threads. Results must
/// be written to per-index slots so output order never depends on
/// scheduling. The first exception is rethrown after all threads join.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn);

/// Independent seed for stream `index` derived from a run seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

} // namespace freetalk::pipeline
