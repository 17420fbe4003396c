#pragma once

#include <filesystem>

#include "utls/raster.hpp"

namespace utls::io {

/// Reads an 8/16-bit grayscale or RGB(A) PNG/TIFF/JPEG; colour is converted
/// with ITU-R 601 luma, 16-bit samples are scaled to 8 bits.
GrayImage read_gray(const std::filesystem::path& path);

/// Writes an 8-bit single-channel PNG.
void write_gray(const std::filesystem::path& path, const GrayImage& image);

/// Writes a mask as 8-bit PNG, 0 = background, 255 = foreground.
void write_mask(const std::filesystem::path& path, const Mask& mask);
/// Any non-zero sample counts as foreground.
Mask read_mask(const std::filesystem::path& path);

/// 16-bit single-channel PNG label maps.
void write_labels(const std::filesystem::path& path, const LabelImage& labels);
LabelImage read_labels(const std::filesystem::path& path);

void write_rgb(const std::filesystem::path& path, const RgbImage& image);

/// Writes bytes to `path` through a sibling temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace utls::io
