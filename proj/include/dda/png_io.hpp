#pragma once

#include <filesystem>

#include "dda/image.hpp"

namespace dda {

/// Decodes an 8/16-bit PNG to [0,1] reals. Grayscale files give one channel,
/// color files three; alpha is dropped.
ImageTensor read_png(const std::filesystem::path& path);

/// Writes a 1- or 3-channel image, mapping [lo, hi] linearly onto 0..255.
void write_png(const std::filesystem::path& path, const ImageTensor& image, double lo = 0.0, double hi = 1.0);

}  // namespace dda
