#pragma once

#include <filesystem>

#include "dcaseg/image.hpp"

namespace dcaseg {

// Reads an 8-bit PNG as a 3-channel float image in [0,1]. Grayscale inputs
// are replicated across channels; palette/16-bit inputs are converted.
Image read_image_png(const std::filesystem::path& path);

// Reads an 8-bit PNG as a label mask. RGB inputs must have identical
// channels per pixel.
Mask read_mask_png(const std::filesystem::path& path);

// Reads only the header and returns (height, width).
std::pair<int, int> read_png_size(const std::filesystem::path& path);

// Writes a 3-channel float image as 8-bit RGB, clamping to [0,1].
void write_image_png(const std::filesystem::path& path, const Image& img);

// Writes a mask as single-channel 8-bit PNG, one byte per label value.
void write_mask_png(const std::filesystem::path& path, const Mask& mask);

}  // namespace dcaseg
