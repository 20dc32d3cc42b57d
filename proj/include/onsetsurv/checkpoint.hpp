#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "onsetsurv/graph.hpp"

namespace onsetsurv::nn {

/// On-disk layout (all integers little-endian):
///
///   offset 0   8 bytes   magic "ONSVCKPT"
///   offset 8   u32       format version (currently 1)
///   offset 12  u64       header length N
///   offset 20  N bytes   UTF-8 JSON header
///   then       f64[]     every tensor listed in header.tensors, in that order
///
/// The header object holds "tensors": [{"name", "shape", "trainable"}...] and a
/// caller-defined "meta" object (layer specs, training metadata).
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ParamStore params;
  nlohmann::json meta;
};

std::string encode_checkpoint(const ParamStore& params, const nlohmann::json& meta);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params, const nlohmann::json& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace onsetsurv::nn
