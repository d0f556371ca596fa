#pragma once

#include <filesystem>

#include "gleason/patchwork/image.hpp"

namespace gleason::patchwork {

// 8-bit PNG in/out. Reading converts palette/gray/alpha inputs to the
// requested channel count (1 or 3).
Image<std::uint8_t> read_png(const std::filesystem::path& path, std::size_t channels);
void write_png(const std::filesystem::path& path, const Image<std::uint8_t>& img);

}  // namespace gleason::patchwork
