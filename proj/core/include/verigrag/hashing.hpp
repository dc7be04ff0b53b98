#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace verigrag {

/// Incremental SHA-256 (backed by OpenSSL's EVP interface).
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(std::string_view bytes);
    std::string hex_digest();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::string sha256_hex(std::string_view bytes);

/// FNV-1a over bytes, with the seed folded into the offset basis.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0);
std::uint64_t splitmix64(std::uint64_t x);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

}  // namespace verigrag
