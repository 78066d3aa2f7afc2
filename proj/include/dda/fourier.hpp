#pragma once

#include <cstddef>
#include <vector>

namespace dda {

/// One real-valued image channel, row-major.
class Plane {
public:
    Plane() = default;
    Plane(std::size_t height, std::size_t width);
    Plane(std::size_t height, std::size_t width, std::vector<double> values);

    [[nodiscard]] std::size_t height() const noexcept { return height_; }
    [[nodiscard]] std::size_t width() const noexcept { return width_; }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }

    [[nodiscard]] double& at(std::size_t row, std::size_t col) { return values_[row * width_ + col]; }
    [[nodiscard]] double at(std::size_t row, std::size_t col) const { return values_[row * width_ + col]; }
    [[nodiscard]] double& operator[](std::size_t i) { return values_[i]; }
    [[nodiscard]] double operator[](std::size_t i) const { return values_[i]; }

    [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }
    [[nodiscard]] std::vector<double>& values() noexcept { return values_; }

    [[nodiscard]] bool same_shape(const Plane& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_;
    }

    friend bool operator==(const Plane&, const Plane&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<double> values_;
};

/// Complex 2D spectrum stored as split real/imaginary planes, row-major.
struct Spectrum {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> re;
    std::vector<double> im;
};

/// Unnormalized forward DFT. Throws DataError on non-finite input.
Spectrum fft2(const Plane& p);

/// Inverse DFT scaled by 1/(H*W). The imaginary residue must be below
/// 1e-9 * (max|re| + 1), otherwise the spectrum was not conjugate-symmetric
/// and DataError is thrown.
Plane ifft2(const Spectrum& s);

/// Circular cross-correlation: out[k] = sum_n a[n + k] * b[n], zero lag at (0,0).
Plane cross_correlate(const Plane& a, const Plane& b);

/// Circular convolution: out[k] = sum_n a[n] * b[k - n].
Plane convolve(const Plane& a, const Plane& b);

/// cross_correlate(p, p); the spectrum is |fft2(p)|^2, real and nonnegative.
Plane autocorrelate(const Plane& p);

/// Cyclic shift taking index (0,0) to (H/2, W/2). Self-inverse for even sizes.
Plane center_shift(const Plane& p);

/// Pointwise spectral product helpers used by the transforms.
Spectrum multiply(const Spectrum& a, const Spectrum& b);
Spectrum multiply_conj(const Spectrum& a, const Spectrum& b);

}  // namespace dda
