#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace cafe {

std::string sha256_hex(std::span<const std::byte> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& path);

/// First eight bytes of SHA-256, read little-endian. Stable across runs and platforms.
std::uint64_t hash64(std::span<const std::byte> bytes);

}  // namespace cafe
