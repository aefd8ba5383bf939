#include "crumq/providers/cache.hpp"

#include <mutex>

#include <spdlog/spdlog.h>

#include "crumq/core/ids.hpp"
#include "crumq/core/jsonl.hpp"

namespace crumq {

CallCache::CallCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::filesystem::path CallCache::path_for(const std::string& digest) const {
    return dir_ / (digest + ".json");
}

std::optional<nlohmann::json> CallCache::get(const std::string& digest) const {
    auto path = path_for(digest);
    {
        std::shared_lock lock(mu_);
        if (!std::filesystem::exists(path)) return std::nullopt;
        try {
            auto entry = nlohmann::json::parse(read_file(path));
            const auto& payload = entry.at("payload");
            if (entry.at("checksum").get<std::string>() == sha256_hex(payload.dump()))
                return std::optional<nlohmann::json>(std::in_place, payload);
        } catch (const std::exception&) {
        }
    }
    spdlog::warn("discarding corrupt cache entry {}", path.string());
    std::unique_lock lock(mu_);
    std::error_code ec;
    std::filesystem::remove(path, ec);
    return std::nullopt;
}

void CallCache::put(const std::string& digest, const nlohmann::json& payload) {
    nlohmann::json entry{{"checksum", sha256_hex(payload.dump())}, {"payload", payload}};
    std::unique_lock lock(mu_);
    write_file_atomic(path_for(digest), entry.dump());
}

}  // namespace crumq
