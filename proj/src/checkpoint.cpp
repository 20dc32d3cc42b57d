#include "onsetsurv/checkpoint.hpp"

#include <stdexcept>

#include "onsetsurv/io.hpp"

namespace onsetsurv::nn {

namespace {
constexpr std::string_view kMagic = "ONSVCKPT";
}

std::string encode_checkpoint(const ParamStore& params, const nlohmann::json& meta) {
  nlohmann::json header;
  header["meta"] = meta;
  header["tensors"] = nlohmann::json::array();
  for (const auto& e : params.entries())
    header["tensors"].push_back({{"name", e.name}, {"shape", e.value.shape()}, {"trainable", e.trainable}});
  const std::string text = header.dump();

  std::string out(kMagic);
  io::append_u32_le(out, kCheckpointVersion);
  io::append_u64_le(out, text.size());
  out += text;
  for (const auto& e : params.entries()) io::append_f64_le(out, e.value.data());
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 20 || std::string_view(bytes).substr(0, 8) != kMagic)
    throw std::runtime_error("not a checkpoint file (bad magic)");
  const auto version = io::read_u32_le(bytes, 8);
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  const auto len = io::read_u64_le(bytes, 12);
  if (20 + len > bytes.size()) throw std::runtime_error("checkpoint header truncated");
  const auto header = nlohmann::json::parse(bytes.substr(20, len));

  Checkpoint ck;
  ck.meta = header.value("meta", nlohmann::json::object());
  std::size_t offset = 20 + len;
  for (const auto& t : header.at("tensors")) {
    Tensor value(t.at("shape").get<Shape>());
    io::read_f64_le(bytes, offset, value.data());
    offset += value.size() * 8;
    ck.params.add(t.at("name").get<std::string>(), std::move(value), t.at("trainable").get<bool>());
  }
  if (offset != bytes.size()) throw std::runtime_error("checkpoint has trailing bytes");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params, const nlohmann::json& meta) {
  io::atomic_write(path, encode_checkpoint(params, meta));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace onsetsurv::nn
