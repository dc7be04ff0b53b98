#include "verigrag/text.hpp"

#include "verigrag/errors.hpp"
#include "verigrag/hashing.hpp"

#include <array>
#include <cctype>

namespace verigrag::text {

namespace {

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

}  // namespace

std::vector<std::string> word_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (is_word_char(c)) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
            continue;
        }
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
        if (!std::isspace(static_cast<unsigned char>(c))) out.emplace_back(1, c);
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::vector<std::string> code_tokens(std::string_view text) {
    static constexpr std::array<std::string_view, 14> kMulti = {"<=", ">=", "==", "!=", "&&", "||", "<<",
                                                                ">>", "~&", "~|", "~^", "^~", "+:", "-:"};
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else if (c == '/' && i + 1 < text.size() && text[i + 1] == '/') {
            while (i < text.size() && text[i] != '\n') ++i;
        } else if (c == '/' && i + 1 < text.size() && text[i + 1] == '*') {
            const auto end = text.find("*/", i + 2);
            i = end == std::string_view::npos ? text.size() : end + 2;
        } else if (is_word_char(c) || c == '$' || c == '`' || c == '\'') {
            // Identifiers, keywords and numbers, including sized literals like 8'hff.
            std::size_t j = i + 1;
            while (j < text.size() && (is_word_char(text[j]) || text[j] == '$' || text[j] == '\'')) ++j;
            out.emplace_back(text.substr(i, j - i));
            i = j;
        } else {
            bool matched = false;
            for (auto op : kMulti) {
                if (text.substr(i, op.size()) == op) {
                    out.emplace_back(op);
                    i += op.size();
                    matched = true;
                    break;
                }
            }
            if (!matched) out.emplace_back(1, text[i++]);
        }
    }
    return out;
}

std::string detokenize_code(const std::vector<std::string>& tokens) {
    std::string out;
    bool line_start = true;
    for (const auto& t : tokens) {
        if (t == "endmodule" && !line_start) out += '\n';
        if (!line_start) out += ' ';
        out += t;
        line_start = t == ";" || t == "endmodule";
        if (line_start) out += '\n';
    }
    if (!line_start) out += '\n';
    return out;
}

HashedTokenizer::HashedTokenizer(int buckets, std::uint64_t seed, int max_len)
    : buckets_(buckets), seed_(seed), max_len_(max_len) {
    if (buckets < 2) throw ConfigError("tokenizer needs at least two buckets");
    if (max_len < 1) throw ConfigError("tokenizer max_len must be positive");
}

std::vector<int> HashedTokenizer::encode(std::string_view text) const {
    std::vector<int> ids;
    for (const auto& w : word_tokens(text)) {
        if (static_cast<int>(ids.size()) == max_len_) break;
        ids.push_back(1 + static_cast<int>(fnv1a64(w, seed_) % static_cast<std::uint64_t>(buckets_ - 1)));
    }
    return ids;
}

Vocabulary::Vocabulary() {
    for (const char* s : {"<pad>", "<unk>", "<bos>", "<eos>", "<sep>"}) add(s);
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& streams) {
    Vocabulary v;
    for (const auto& s : streams) {
        for (const auto& t : s) v.add(t);
    }
    return v;
}

int Vocabulary::add(const std::string& token) {
    auto [it, inserted] = index_.emplace(token, static_cast<int>(tokens_.size()));
    if (inserted) tokens_.push_back(token);
    return it->second;
}

int Vocabulary::id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size()) throw DomainError("token id out of range: " + std::to_string(id));
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id(t));
    return ids;
}

nlohmann::ordered_json Vocabulary::to_json() const { return tokens_; }

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
    Vocabulary v;
    const auto tokens = j.get<std::vector<std::string>>();
    if (tokens.size() < 5 || tokens[0] != "<pad>" || tokens[2] != "<bos>") {
        throw SchemaError("vocabulary is missing its special tokens");
    }
    for (const auto& t : tokens) v.add(t);
    if (v.size() != static_cast<int>(tokens.size())) throw SchemaError("vocabulary contains duplicate tokens");
    return v;
}

}  // namespace verigrag::text
