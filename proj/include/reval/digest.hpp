#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace reval {

// Content hashes for the manifest; the algorithm identifier is recorded next
// to every digest so the manifest is self-describing.
inline constexpr std::string_view kDigestAlgorithm = "sha256";

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

} // namespace reval
