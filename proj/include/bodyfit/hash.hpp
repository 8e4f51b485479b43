#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

namespace bodyfit {

// FNV-1a, 64 bit. Used for artifact checksums in run reports.
inline std::uint64_t fnv1a64(const void* data, std::size_t size,
                             std::uint64_t seed = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64_file(const std::filesystem::path& path);

std::string hex64(std::uint64_t value);

}  // namespace bodyfit
