#pragma once

// Deterministic corpus of small, distinct subset modules with one-line
// descriptions. Used by tests, benchmarks and the desk-scale training runs.

#include <cstdint>
#include <string>
#include <vector>

namespace verigrag::toy {

struct ToyModule {
    std::string name;
    std::string code;
    std::string description;
};

/// Every module the generator knows (65), in a fixed seed-dependent order.
std::vector<ToyModule> all_modules(std::uint64_t seed = 0);

/// The first `count` modules of all_modules(seed). Throws ConfigError past the end.
std::vector<ToyModule> modules(std::size_t count, std::uint64_t seed = 0);

/// The D flip-flop: inputs clk and d, output q, one register update.
ToyModule flip_flop();

}  // namespace verigrag::toy
