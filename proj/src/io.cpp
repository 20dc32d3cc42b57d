#include "onsetsurv/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace onsetsurv::io {

void atomic_write(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

template <typename T>
void append_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename T>
T read_le(std::string_view bytes, std::size_t offset) {
  if (offset + sizeof(T) > bytes.size()) throw std::runtime_error("unexpected end of data");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    v |= static_cast<T>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  return v;
}

}  // namespace

void append_u32_le(std::string& out, std::uint32_t v) { append_le(out, v); }
void append_u64_le(std::string& out, std::uint64_t v) { append_le(out, v); }

void append_f64_le(std::string& out, std::span<const double> values) {
  out.reserve(out.size() + values.size() * 8);
  for (double d : values) append_le(out, std::bit_cast<std::uint64_t>(d));
}

std::uint32_t read_u32_le(std::string_view bytes, std::size_t offset) { return read_le<std::uint32_t>(bytes, offset); }
std::uint64_t read_u64_le(std::string_view bytes, std::size_t offset) { return read_le<std::uint64_t>(bytes, offset); }

void read_f64_le(std::string_view bytes, std::size_t offset, std::span<double> out) {
  if (offset + out.size() * 8 > bytes.size()) throw std::runtime_error("unexpected end of data");
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::bit_cast<double>(read_le<std::uint64_t>(bytes, offset + 8 * i));
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

}  // namespace onsetsurv::io
