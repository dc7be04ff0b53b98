#pragma once

// Tokenizers shared by the retriever, VeriFormer and the language model.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace verigrag::text {

/// Lower-cased alphanumeric words; every other visible character is its own token.
std::vector<std::string> word_tokens(std::string_view text);

/// Lenient Verilog lexer: never throws, drops comments, keeps sized literals
/// ("8'hff") and multi-character operators as single tokens.
std::vector<std::string> code_tokens(std::string_view text);

/// Joins code tokens with spaces, breaking lines after ';' and at module boundaries.
std::string detokenize_code(const std::vector<std::string>& tokens);

/// Word tokens hashed into a fixed id space. Id 0 is reserved for padding.
class HashedTokenizer {
public:
    explicit HashedTokenizer(int buckets = 4096, std::uint64_t seed = 0, int max_len = 64);

    /// At most max_len ids, never containing 0.
    std::vector<int> encode(std::string_view text) const;
    int vocab_size() const noexcept { return buckets_; }
    int max_len() const noexcept { return max_len_; }
    std::uint64_t seed() const noexcept { return seed_; }

private:
    int buckets_;
    std::uint64_t seed_;
    int max_len_;
};

/// Closed word-level vocabulary with fixed special ids.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kBos = 2;
    static constexpr int kEos = 3;
    static constexpr int kSep = 4;

    Vocabulary();

    /// Specials first, then tokens in order of first appearance.
    static Vocabulary build(const std::vector<std::vector<std::string>>& streams);

    int add(const std::string& token);
    int id(const std::string& token) const;  // kUnk when absent
    const std::string& token(int id) const;
    int size() const noexcept { return static_cast<int>(tokens_.size()); }
    std::vector<int> encode(const std::vector<std::string>& tokens) const;

    nlohmann::ordered_json to_json() const;
    static Vocabulary from_json(const nlohmann::json& j);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

}  // namespace verigrag::text
