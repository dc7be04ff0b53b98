#include "verigrag/dedup.hpp"

#include "verigrag/errors.hpp"
#include "verigrag/hashing.hpp"

#include <algorithm>
#include <cctype>
#include <limits>

namespace verigrag::dedup {

std::vector<std::string> normalized_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) tokens.push_back(std::move(cur));
        cur.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '/' && i + 1 < text.size() && text[i + 1] == '/') {
            flush();
            while (i < text.size() && text[i] != '\n') ++i;
        } else if (c == '/' && i + 1 < text.size() && text[i + 1] == '*') {
            flush();
            const auto end = text.find("*/", i + 2);
            i = end == std::string_view::npos ? text.size() : end + 1;
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else {
            cur.push_back(c);
        }
    }
    flush();
    return tokens;
}

std::vector<std::uint64_t> shingle_set_from_tokens(std::span<const std::string> tokens, int n) {
    if (n < 1) throw ConfigError("shingle size must be positive");
    std::vector<std::uint64_t> out;
    if (tokens.empty()) return out;
    const std::size_t width = std::min<std::size_t>(static_cast<std::size_t>(n), tokens.size());
    for (std::size_t i = 0; i + width <= tokens.size(); ++i) {
        std::string joined;
        for (std::size_t k = 0; k < width; ++k) {
            if (k) joined.push_back('\x1f');
            joined += tokens[i + k];
        }
        out.push_back(fnv1a64(joined));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<std::uint64_t> shingle_set(std::string_view text, int n) {
    const auto tokens = normalized_tokens(text);
    return shingle_set_from_tokens(tokens, n);
}

std::vector<std::uint64_t> minhash_signature(std::span<const std::uint64_t> shingles, int num_hashes,
                                             std::uint64_t seed) {
    if (num_hashes < 1) throw ConfigError("num_hashes must be positive");
    std::vector<std::uint64_t> sig(static_cast<std::size_t>(num_hashes), std::numeric_limits<std::uint64_t>::max());
    for (int k = 0; k < num_hashes; ++k) {
        const std::uint64_t salt = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(k) + 1));
        std::uint64_t best = std::numeric_limits<std::uint64_t>::max();
        for (std::uint64_t s : shingles) best = std::min(best, splitmix64(s ^ salt));
        sig[static_cast<std::size_t>(k)] = best;
    }
    return sig;
}

double estimate_jaccard(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
    if (a.size() != b.size() || a.empty()) throw ConfigError("signatures must have equal, positive length");
    std::size_t same = 0;
    for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i] ? 1 : 0;
    return static_cast<double>(same) / static_cast<double>(a.size());
}

double exact_jaccard(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t i = 0, j = 0, inter = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] == b[j]) {
            ++inter;
            ++i;
            ++j;
        } else if (a[i] < b[j]) {
            ++i;
        } else {
            ++j;
        }
    }
    return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

std::vector<std::size_t> retained_indices(const std::vector<std::vector<std::uint64_t>>& shingle_sets,
                                          double threshold, int num_hashes, std::uint64_t seed) {
    std::vector<std::vector<std::uint64_t>> sigs;
    sigs.reserve(shingle_sets.size());
    for (const auto& s : shingle_sets) sigs.push_back(minhash_signature(s, num_hashes, seed));

    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < sigs.size(); ++i) {
        const bool dup = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
            return estimate_jaccard(sigs[i], sigs[k]) >= threshold;
        });
        if (!dup) kept.push_back(i);
    }
    return kept;
}

std::vector<netlist::VerilogSource> jaccard_minhash_dedup(const std::vector<netlist::VerilogSource>& sources,
                                                          double threshold, int num_hashes, std::uint64_t seed) {
    std::vector<std::vector<std::uint64_t>> sets;
    sets.reserve(sources.size());
    for (const auto& s : sources) sets.push_back(shingle_set(s.text));
    std::vector<netlist::VerilogSource> out;
    for (std::size_t i : retained_indices(sets, threshold, num_hashes, seed)) out.push_back(sources[i]);
    return out;
}

}  // namespace verigrag::dedup
