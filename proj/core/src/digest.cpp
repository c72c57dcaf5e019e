// Keyed digest used for the signed device tree. HMAC-SHA256 over the exact
// file bytes, so a sidecar can be produced with
//   openssl dgst -sha256 -hmac "<key>" <file>
#include "cloaksim/dtree.hpp"

#include <openssl/evp.h>

#include <cstring>

namespace cloaksim::dtree {

Digest keyed_digest(std::span<const std::uint8_t> key, std::span<const std::uint8_t> data) {
    Digest out{};
    std::size_t out_len = 0;
    if (key.empty()) {
        // Unkeyed variant: plain SHA-256, used for source_digest.
        EVP_Q_digest(nullptr, "SHA256", nullptr, data.data(), data.size(), out.data(), &out_len);
        return out;
    }
    EVP_Q_mac(nullptr, "HMAC", nullptr, "SHA256", nullptr, key.data(), key.size(), data.data(),
              data.size(), out.data(), out.size(), &out_len);
    return out;
}

Digest keyed_digest(std::string_view key, std::string_view data) {
    return keyed_digest(
        std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(key.data()), key.size()),
        std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(data.data()),
                                      data.size()));
}

bool verify_signature(std::string_view text, const Digest& signature,
                      const std::vector<std::string>& trusted_keys) {
    for (const std::string& key : trusted_keys) {
        Digest expected = keyed_digest(key, text);
        // Not constant-time; this is a simulator, not a crypto boundary.
        if (expected == signature) return true;
    }
    return false;
}

std::string digest_to_hex(const Digest& d) {
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(64);
    for (std::uint8_t b : d) {
        out.push_back(hex[b >> 4]);
        out.push_back(hex[b & 0xF]);
    }
    return out;
}

std::optional<Digest> digest_from_hex(std::string_view hex) {
    // Tolerate a trailing newline from `echo`-style sidecar files.
    while (!hex.empty() && (hex.back() == '\n' || hex.back() == '\r')) hex.remove_suffix(1);
    if (hex.size() != 64) return std::nullopt;
    Digest d{};
    for (std::size_t i = 0; i < 32; ++i) {
        auto nib = [](char c) -> int {
            if (c >= '0' && c <= '9') return c - '0';
            if (c >= 'a' && c <= 'f') return c - 'a' + 10;
            if (c >= 'A' && c <= 'F') return c - 'A' + 10;
            return -1;
        };
        int hi = nib(hex[2 * i]), lo = nib(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) return std::nullopt;
        d[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return d;
}

}  // namespace cloaksim::dtree
