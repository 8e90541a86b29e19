#include "usm/hash.hpp"

#include <array>
#include <cstdio>
#include <fstream>

#include "usm/errors.hpp"

namespace usm {

std::string Fnv1a::hex() const {
    std::array<char, 17> buf{};
    std::snprintf(buf.data(), buf.size(), "%016llx", static_cast<unsigned long long>(state_));
    return std::string(buf.data(), 16);
}

std::string hash_bytes(std::span<const std::uint8_t> bytes) {
    Fnv1a h;
    h.update(bytes);
    return h.hex();
}

std::string hash_string(std::string_view s) {
    Fnv1a h;
    h.update(s);
    return h.hex();
}

std::string hash_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    Fnv1a h;
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        const auto n = static_cast<std::size_t>(in.gcount());
        h.update(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(buf.data()), n));
    }
    return h.hex();
}

}  // namespace usm
