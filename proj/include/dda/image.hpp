#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "dda/fourier.hpp"

namespace dda {

/// H x W x C real image stored as one Plane per channel.
class ImageTensor {
public:
    ImageTensor() = default;
    ImageTensor(std::size_t height, std::size_t width, std::size_t channels);
    explicit ImageTensor(std::vector<Plane> planes);

    [[nodiscard]] std::size_t height() const noexcept { return height_; }
    [[nodiscard]] std::size_t width() const noexcept { return width_; }
    [[nodiscard]] std::size_t channels() const noexcept { return planes_.size(); }
    [[nodiscard]] std::size_t pixels() const noexcept { return height_ * width_; }
    [[nodiscard]] std::size_t size() const noexcept { return pixels() * channels(); }

    [[nodiscard]] const Plane& plane(std::size_t c) const { return planes_[c]; }
    [[nodiscard]] Plane& plane(std::size_t c) { return planes_[c]; }
    [[nodiscard]] const std::vector<Plane>& planes() const noexcept { return planes_; }

    [[nodiscard]] double at(std::size_t c, std::size_t row, std::size_t col) const {
        return planes_[c].at(row, col);
    }
    [[nodiscard]] double& at(std::size_t c, std::size_t row, std::size_t col) {
        return planes_[c].at(row, col);
    }

    [[nodiscard]] bool same_geometry(const ImageTensor& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_ && channels() == other.channels();
    }

    /// Channel-major flattening: all of channel 0 row-major, then channel 1, ...
    [[nodiscard]] std::vector<double> flatten() const;

    [[nodiscard]] std::string shape_string() const;

    friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<Plane> planes_;
};

enum class DomainTag { source, target };

std::string_view to_string(DomainTag tag);
DomainTag parse_domain(std::string_view text);

/// Labelled images from one domain. All images share one geometry.
struct Dataset {
    std::vector<ImageTensor> images;
    std::vector<int> labels;
    DomainTag domain = DomainTag::source;
    std::string name;

    [[nodiscard]] std::size_t size() const noexcept { return images.size(); }
    [[nodiscard]] bool empty() const noexcept { return images.empty(); }

    /// Throws DataError if lengths differ or geometries are mixed.
    void validate() const;
};

}  // namespace dda
