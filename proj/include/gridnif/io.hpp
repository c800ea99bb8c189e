#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace gridnif {

/// Shortest-safe decimal form of a double (17 significant digits), round-trips exactly.
std::string format_double(double value);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view contents);

/// 64-bit FNV-1a; used only for input fingerprints in manifests, not security.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);
std::string hash_text(std::string_view bytes);
std::string hash_file(const std::string& path);

}  // namespace gridnif
