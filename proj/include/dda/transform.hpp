#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dda/image.hpp"

namespace dda {

struct TransformConfig {
    std::size_t pixels_per_draw = 1;
    bool renormalize = true;
    std::uint64_t seed = 0;
    /// Read the correlation output with zero lag at the image center, so the
    /// random-pixel kernel scales without shifting. false keeps the raw
    /// correlation (zero lag at (0,0)) and the output is displaced by (H/2, W/2).
    bool center_kernels = true;
    /// convolve(stats, scaled) instead of convolve(scaled, stats).
    bool swap_convolution_operands = false;

    void validate() const;
};

/// Per-domain ingredients consumed by the other domain's transform.
struct DomainStats {
    ImageTensor mean_autocorr;  ///< per channel, zero lag at (0,0)
    std::vector<double> mean_pixel;
    std::uint64_t sample_count = 0;
    std::int64_t seed = 0;
    DomainTag domain = DomainTag::source;

    friend bool operator==(const DomainStats&, const DomainStats&) = default;
};

/// Per channel, (1/N) * sum_j autocorrelate(x_j). Throws on empty input or
/// mixed geometry (naming the offending index).
ImageTensor mean_autocorrelation(std::span<const ImageTensor> images);
ImageTensor mean_autocorrelation(const Dataset& data);

/// Draws one pixel position per image (stream derived from seed and image
/// index) and averages the drawn values per channel.
std::vector<double> mean_random_pixel(std::span<const ImageTensor> images, std::uint64_t seed);
std::vector<double> mean_random_pixel(const Dataset& data, std::uint64_t seed);

DomainStats compute_domain_stats(const Dataset& data, std::uint64_t seed);

/// The random-pixel kernel: cfg.pixels_per_draw positions drawn uniformly
/// from the donor (shared across channels), holding the donor's values. The
/// first draw sits at (H/2, W/2); further draws keep their offset from it.
ImageTensor random_pixel_kernel(const ImageTensor& donor, std::uint64_t seed, const TransformConfig& cfg);

/// Centered kernel with one value per channel at (H/2, W/2).
ImageTensor scalar_kernel(std::size_t height, std::size_t width, std::span<const double> values);

/// Per channel cross_correlate(x, kernel); with cfg.center_kernels the
/// output is center_shift'ed so that the kernel's center is zero lag.
ImageTensor correlate_with_kernel(const ImageTensor& x, const ImageTensor& kernel, const TransformConfig& cfg);

ImageTensor correlate_with_random_pixel(const ImageTensor& x, const ImageTensor& donor, std::uint64_t seed,
                                        const TransformConfig& cfg);

/// Training-side transform: correlate with a random donor pixel (drawn with
/// cfg.seed), convolve with the target mean auto-correlation, renormalize.
ImageTensor transform_source(const ImageTensor& x_s, const ImageTensor& source_donor,
                             const DomainStats& target_stats, const TransformConfig& cfg);

/// Inference-side transform: scale by the input domain's mean random pixel,
/// convolve with the other domain's mean auto-correlation, renormalize.
ImageTensor transform_target(const ImageTensor& x_t, std::span<const double> target_mean_pixel,
                             const DomainStats& source_stats, const TransformConfig& cfg);

/// y = 2 (x - min) / max(x - min) - 1 with min/max over all channels jointly.
/// Throws DegenerateImageError when the image is constant.
ImageTensor renormalize(const ImageTensor& x);

/// Count of calls that produced or consumed DomainStats since process start.
std::uint64_t stats_access_count() noexcept;

// Cache file: "DDASTATS", u32 version, u32 height, width, channels, i64 seed,
// u64 sample_count, channels x f64 mean_pixel, channels x H x W f64 planes.
// Little-endian throughout.
inline constexpr std::uint32_t kStatsVersion = 1;

std::vector<unsigned char> encode_stats(const DomainStats& stats);
DomainStats decode_stats(std::span<const unsigned char> bytes, DomainTag domain);
void write_stats(const std::filesystem::path& path, const DomainStats& stats);
DomainStats read_stats(const std::filesystem::path& path, DomainTag domain);

namespace detail {
void note_stats_access() noexcept;
}

}  // namespace dda
