#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dda {

std::vector<unsigned char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

/// FNV-1a 64-bit, used for printed checksums.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes) noexcept;

}  // namespace dda
