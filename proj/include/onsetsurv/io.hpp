#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace onsetsurv::io {

/// Writes to a sibling temp file and renames it over path, so readers never see a partial file.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

void append_u32_le(std::string& out, std::uint32_t v);
void append_u64_le(std::string& out, std::uint64_t v);
void append_f64_le(std::string& out, std::span<const double> values);

std::uint32_t read_u32_le(std::string_view bytes, std::size_t offset);
std::uint64_t read_u64_le(std::string_view bytes, std::size_t offset);
void read_f64_le(std::string_view bytes, std::size_t offset, std::span<double> out);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

}  // namespace onsetsurv::io
