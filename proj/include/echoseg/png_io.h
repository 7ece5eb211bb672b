#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "echoseg/image.h"

namespace echoseg {

struct GrayPng {
    int width = 0;
    int height = 0;
    int bit_depth = 8;  // 8 or 16 after expansion
    std::vector<std::uint16_t> values;
};

// Reads a single-channel PNG (1/2/4/8/16-bit gray). Color PNGs are rejected.
GrayPng read_png_gray(const std::filesystem::path& path);

// Intensities scaled to [0, 1] by the bit depth's maximum value.
FloatImage read_intensity_png(const std::filesystem::path& path);
// 8-bit label map; values above 14 are rejected.
LabelImage read_label_png(const std::filesystem::path& path);

void write_png_gray8(const std::filesystem::path& path, const LabelImage& img);
// Writes intensities clamped to [0, 1] as 8-bit gray.
void write_intensity_png(const std::filesystem::path& path, const FloatImage& img);
void write_png_rgb8(const std::filesystem::path& path, int width, int height, std::span<const std::uint8_t> rgb);

std::uint8_t intensity_to_u8(float v);

}  // namespace echoseg
