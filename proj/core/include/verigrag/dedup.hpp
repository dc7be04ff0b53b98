#pragma once

// Near-duplicate filtering with MinHash signatures over token 3-gram shingles.

#include "verigrag/verilog.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace verigrag::dedup {

/// Drops // and /* */ comments and splits the rest on whitespace.
std::vector<std::string> normalized_tokens(std::string_view text);

/// Sorted, unique hashes of `n`-token shingles. Texts shorter than `n`
/// tokens contribute one shingle made of all their tokens.
std::vector<std::uint64_t> shingle_set(std::string_view text, int n = 3);
std::vector<std::uint64_t> shingle_set_from_tokens(std::span<const std::string> tokens, int n = 3);

/// Slot k holds the minimum of an independent seeded hash over the set.
std::vector<std::uint64_t> minhash_signature(std::span<const std::uint64_t> shingles, int num_hashes,
                                             std::uint64_t seed);

/// Fraction of equal slots.
double estimate_jaccard(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b);

/// |A ∩ B| / |A ∪ B| over sorted unique sets; 1 for two empty sets.
double exact_jaccard(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b);

/// Indices retained by a greedy scan in input order: an item is dropped when
/// its estimated similarity to any retained item reaches `threshold`.
std::vector<std::size_t> retained_indices(const std::vector<std::vector<std::uint64_t>>& shingle_sets,
                                          double threshold, int num_hashes, std::uint64_t seed);

std::vector<netlist::VerilogSource> jaccard_minhash_dedup(const std::vector<netlist::VerilogSource>& sources,
                                                          double threshold = 0.8, int num_hashes = 256,
                                                          std::uint64_t seed = 0);

}  // namespace verigrag::dedup
