#pragma once

#include <filesystem>
#include <optional>
#include <shared_mutex>
#include <string>

#include <nlohmann/json.hpp>

namespace crumq {

/// On-disk memo of provider responses, one `<digest>.json` file per call.
/// Each file carries a checksum of its payload; a file that fails the check or
/// does not parse is deleted and reported as a miss so the call is re-issued.
class CallCache {
  public:
    explicit CallCache(std::filesystem::path dir);

    std::optional<nlohmann::json> get(const std::string& digest) const;
    void put(const std::string& digest, const nlohmann::json& payload);

    const std::filesystem::path& dir() const { return dir_; }
    std::filesystem::path path_for(const std::string& digest) const;

  private:
    std::filesystem::path dir_;
    mutable std::shared_mutex mu_;
};

}  // namespace crumq
