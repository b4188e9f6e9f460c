#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>

namespace cwe {

std::string sha256_hex(std::span<const std::byte> bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace cwe
