#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "gleason/nn/network.hpp"

namespace gleason::nn {

// Model file layout (all integers little-endian):
//   "FSCV" | u32 version | u32 manifest length | UTF-8 JSON manifest |
//   float32 parameter tensors in manifest order.
inline constexpr std::uint32_t kModelFormatVersion = 1;

std::vector<std::uint8_t> serialize(const Network<float>& net);
Network<float> deserialize(std::span<const std::uint8_t> bytes);

void save_network(const Network<float>& net, const std::filesystem::path& path);
Network<float> load_network(const std::filesystem::path& path);

}  // namespace gleason::nn
