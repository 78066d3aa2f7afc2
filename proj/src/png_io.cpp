#include "dda/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "dda/errors.hpp"

namespace dda {

ImageTensor read_png(const std::filesystem::path& path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw DataError(path.string() + ": unreadable image (" + image.message + ")");
    }
    const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        std::string why = image.message;
        png_image_free(&image);
        throw DataError(path.string() + ": decode failed (" + why + ")");
    }
    const std::size_t h = image.height;
    const std::size_t w = image.width;
    const std::size_t channels = color ? 3 : 1;
    ImageTensor out(h, w, channels);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            for (std::size_t k = 0; k < channels; ++k) {
                out.at(k, r, c) = buffer[(r * w + c) * channels + k] / 255.0;
            }
        }
    }
    return out;
}

void write_png(const std::filesystem::path& path, const ImageTensor& image, double lo, double hi) {
    const std::size_t channels = image.channels();
    if (channels != 1 && channels != 3) {
        throw DataError("write_png: only 1- or 3-channel images are supported, got " + image.shape_string());
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::size_t h = image.height();
    const std::size_t w = image.width();
    std::vector<png_byte> buffer(h * w * channels);
    const double scale = 255.0 / (hi - lo);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            for (std::size_t k = 0; k < channels; ++k) {
                const double v = std::clamp((image.at(k, r, c) - lo) * scale, 0.0, 255.0);
                buffer[(r * w + c) * channels + k] = static_cast<png_byte>(std::lround(v));
            }
        }
    }
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(w);
    png.height = static_cast<png_uint_32>(h);
    png.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr)) {
        throw DataError(path.string() + ": write failed (" + png.message + ")");
    }
}

}  // namespace dda
