#include "crumq/core/ids.hpp"

#include <openssl/evp.h>

#include <array>
#include <memory>

#include "crumq/core/errors.hpp"

namespace crumq {

namespace {

std::array<unsigned char, 32> sha256(std::string_view bytes) {
    std::array<unsigned char, 32> digest{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1 ||
        len != digest.size()) {
        throw Error("SHA-256 digest failed");
    }
    return digest;
}

std::string to_hex(const unsigned char* data, std::size_t n) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out(n * 2, '0');
    for (std::size_t i = 0; i < n; ++i) {
        out[2 * i] = kHex[data[i] >> 4];
        out[2 * i + 1] = kHex[data[i] & 0xF];
    }
    return out;
}

}  // namespace

std::string_view record_prefix(RecordKind kind) {
    switch (kind) {
        case RecordKind::document: return "doc";
        case RecordKind::request: return "req";
        case RecordKind::topic: return "top";
        case RecordKind::chunk: return "chk";
        case RecordKind::context: return "ctx";
        case RecordKind::qa: return "qa";
        case RecordKind::probe: return "prb";
    }
    return "rec";
}

std::string sha256_hex(std::string_view bytes) {
    auto d = sha256(bytes);
    return to_hex(d.data(), d.size());
}

std::string assign_id(RecordKind kind, std::string_view canonical_bytes) {
    std::string prefix(record_prefix(kind));
    std::string material = prefix;
    material.push_back('\0');
    material.append(canonical_bytes);
    auto d = sha256(material);
    return prefix + "_" + to_hex(d.data(), 16);
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view label) {
    std::string material(8, '\0');
    for (int i = 0; i < 8; ++i) material[i] = static_cast<char>((base >> (8 * i)) & 0xFF);
    material.append(label);
    auto d = sha256(material);
    std::uint64_t out = 0;
    for (int i = 0; i < 8; ++i) out |= static_cast<std::uint64_t>(d[i]) << (8 * i);
    return out;
}

}  // namespace crumq
