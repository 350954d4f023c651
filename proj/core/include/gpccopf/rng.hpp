#pragma once

#include <cstdint>
#include <random>

namespace gpccopf {

// Keyed substreams: the generator for (seed, stream, index) depends on nothing
// else, so rows can be drawn in any order with identical results.
enum class StreamTag : std::uint64_t {
    Injections = 1,
    Generation = 2,
    Training = 3,
    MonteCarlo = 4,
    Split = 5,
    Toy = 6,
};

std::uint64_t splitmix64(std::uint64_t x);

std::mt19937_64 substream(std::uint64_t seed, StreamTag tag, std::uint64_t index = 0);

}  // namespace gpccopf
