#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "crumq/providers/chat.hpp"
#include "crumq/providers/embed.hpp"
#include "crumq/providers/mock.hpp"

namespace crumq::test {

/// Scratch directory removed on destruction.
class TempDir {
  public:
    TempDir() {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("crumq-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

  private:
    std::filesystem::path path_;
};

/// Mock backend plus a cacheless client over the bundled prompts.
struct MockChat {
    std::shared_ptr<MockChatBackend> backend = std::make_shared<MockChatBackend>("test");
    ChatClient client{backend, std::make_shared<PromptRegistry>(PromptRegistry::defaults()), nullptr,
                      RetryPolicy{3, std::chrono::milliseconds(0), 1.0}};
};

inline std::shared_ptr<HashProjectionEmbedder> hash_embedder(std::size_t dim = 64) {
    return std::make_shared<HashProjectionEmbedder>(dim, 0);
}

}  // namespace crumq::test
