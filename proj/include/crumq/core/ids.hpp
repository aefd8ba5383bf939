#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace crumq {

enum class RecordKind { document, request, topic, chunk, context, qa, probe };

std::string_view record_prefix(RecordKind kind);

/// Lowercase hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);

/// Content-derived identifier: `<prefix>_<128-bit hex digest>`. The digest
/// covers the record kind as well as the bytes, so equal bytes of different
/// kinds never collide.
std::string assign_id(RecordKind kind, std::string_view canonical_bytes);

/// Joins identity fields with a NUL separator, the canonical form fed to
/// assign_id.
template <typename... Parts>
std::string canonical_fields(const Parts&... parts) {
    std::string out;
    bool first = true;
    auto add = [&](std::string_view p) {
        if (!first) out.push_back('\0');
        out.append(p);
        first = false;
    };
    (add(std::string_view(parts)), ...);
    return out;
}

/// 64-bit seed derived from a base seed and a label (stable across platforms).
std::uint64_t derive_seed(std::uint64_t base, std::string_view label);

}  // namespace crumq
