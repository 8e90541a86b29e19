#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace usm {

/// 64-bit FNV-1a, used for reproducibility stamps (not for security).
class Fnv1a {
public:
    void update(std::span<const std::uint8_t> bytes) noexcept {
        for (auto b : bytes) {
            state_ ^= b;
            state_ *= 0x100000001b3ULL;
        }
    }
    void update(std::string_view s) noexcept {
        update(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
    }
    std::uint64_t digest() const noexcept { return state_; }
    std::string hex() const;

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string hash_bytes(std::span<const std::uint8_t> bytes);
std::string hash_string(std::string_view s);
/// Throws IoError if the file cannot be read.
std::string hash_file(const std::filesystem::path& path);

}  // namespace usm
