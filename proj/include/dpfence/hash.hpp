#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace dpfence {

// splitmix64 finalizer; used to derive independent per-sample seeds.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index, std::uint64_t stream = 0);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace dpfence
