#include "dda/transform.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include "dda/errors.hpp"
#include "dda/rng.hpp"

namespace dda {

namespace {

std::atomic<std::uint64_t> g_stats_access{0};

void require_non_empty(std::span<const ImageTensor> images, const char* what) {
    if (images.empty()) throw DataError(std::string(what) + ": empty dataset");
}

void require_same_geometry(std::span<const ImageTensor> images, const char* what) {
    for (std::size_t i = 1; i < images.size(); ++i) {
        if (!images[i].same_geometry(images.front())) {
            std::ostringstream msg;
            msg << what << ": image " << i << " is " << images[i].shape_string() << ", image 0 is "
                << images.front().shape_string();
            throw DataError(msg.str());
        }
    }
}

void require_geometry(const ImageTensor& x, const ImageTensor& ref, const char* what) {
    if (!x.same_geometry(ref)) {
        std::ostringstream msg;
        msg << what << ": input " << x.shape_string() << " does not match " << ref.shape_string();
        throw DataError(msg.str());
    }
}

// Kernels with a handful of nonzeros (random-pixel scalers, delta
// statistics) are applied directly: cheaper than three FFTs and exact.
constexpr std::size_t kSparseLimit = 16;

struct Tap {
    std::size_t row;
    std::size_t col;
    double value;
};

std::optional<std::vector<Tap>> sparse_taps(const Plane& p) {
    std::vector<Tap> taps;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] != 0.0) {
            if (taps.size() == kSparseLimit) return std::nullopt;
            taps.push_back({i / p.width(), i % p.width(), p[i]});
        }
    }
    return taps;
}

// out[k] = sum_n x[n + k] * kernel[n]
Plane correlate_plane(const Plane& x, const Plane& kernel) {
    const auto taps = sparse_taps(kernel);
    if (!taps) return cross_correlate(x, kernel);
    if (!x.same_shape(kernel)) return cross_correlate(x, kernel);  // reports the mismatch
    const std::size_t h = x.height();
    const std::size_t w = x.width();
    Plane out(h, w);
    for (const auto& t : *taps) {
        for (std::size_t r = 0; r < h; ++r) {
            const std::size_t sr = (r + t.row) % h;
            for (std::size_t c = 0; c < w; ++c) out.at(r, c) += x.at(sr, (c + t.col) % w) * t.value;
        }
    }
    return out;
}

// out[k] = sum_n a[n] * b[k - n], symmetric in its operands.
Plane convolve_plane(const Plane& a, const Plane& b) {
    auto taps = sparse_taps(b);
    const Plane* dense = &a;
    if (!taps) {
        taps = sparse_taps(a);
        dense = &b;
    }
    if (!taps || !a.same_shape(b)) return convolve(a, b);
    const std::size_t h = a.height();
    const std::size_t w = a.width();
    Plane out(h, w);
    for (const auto& t : *taps) {
        for (std::size_t r = 0; r < h; ++r) {
            const std::size_t dr = (r + t.row) % h;
            for (std::size_t c = 0; c < w; ++c) out.at(dr, (c + t.col) % w) += dense->at(r, c) * t.value;
        }
    }
    return out;
}

ImageTensor convolve_with_stats(const ImageTensor& scaled, const DomainStats& stats, const TransformConfig& cfg) {
    std::vector<Plane> planes;
    planes.reserve(scaled.channels());
    for (std::size_t c = 0; c < scaled.channels(); ++c) {
        planes.push_back(cfg.swap_convolution_operands ? convolve_plane(stats.mean_autocorr.plane(c), scaled.plane(c))
                                                       : convolve_plane(scaled.plane(c), stats.mean_autocorr.plane(c)));
    }
    ImageTensor out(std::move(planes));
    return cfg.renormalize ? renormalize(out) : out;
}

}  // namespace

namespace detail {
void note_stats_access() noexcept { g_stats_access.fetch_add(1, std::memory_order_relaxed); }
}  // namespace detail

std::uint64_t stats_access_count() noexcept { return g_stats_access.load(std::memory_order_relaxed); }

void TransformConfig::validate() const {
    if (pixels_per_draw == 0) throw ConfigError("pixels_per_draw must be at least 1");
}

ImageTensor mean_autocorrelation(std::span<const ImageTensor> images) {
    require_non_empty(images, "mean_autocorrelation");
    require_same_geometry(images, "mean_autocorrelation");
    const auto& first = images.front();
    ImageTensor mean(first.height(), first.width(), first.channels());
    for (const auto& image : images) {
        for (std::size_t c = 0; c < image.channels(); ++c) {
            const Plane ac = autocorrelate(image.plane(c));
            auto& acc = mean.plane(c).values();
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += ac[i];
        }
    }
    const double inv = 1.0 / static_cast<double>(images.size());
    for (std::size_t c = 0; c < mean.channels(); ++c) {
        for (auto& v : mean.plane(c).values()) v *= inv;
    }
    return mean;
}

ImageTensor mean_autocorrelation(const Dataset& data) { return mean_autocorrelation(data.images); }

std::vector<double> mean_random_pixel(std::span<const ImageTensor> images, std::uint64_t seed) {
    require_non_empty(images, "mean_random_pixel");
    require_same_geometry(images, "mean_random_pixel");
    const std::size_t channels = images.front().channels();
    std::vector<double> sum(channels, 0.0);
    for (std::size_t j = 0; j < images.size(); ++j) {
        Rng rng(derive_seed(seed, {j}));
        const std::size_t pos = rng.index(images[j].pixels());
        for (std::size_t c = 0; c < channels; ++c) sum[c] += images[j].plane(c)[pos];
    }
    for (auto& v : sum) v /= static_cast<double>(images.size());
    return sum;
}

std::vector<double> mean_random_pixel(const Dataset& data, std::uint64_t seed) {
    return mean_random_pixel(data.images, seed);
}

DomainStats compute_domain_stats(const Dataset& data, std::uint64_t seed) {
    detail::note_stats_access();
    DomainStats stats;
    stats.mean_autocorr = mean_autocorrelation(data);
    stats.mean_pixel = mean_random_pixel(data, seed);
    stats.sample_count = data.size();
    stats.seed = static_cast<std::int64_t>(seed);
    stats.domain = data.domain;
    return stats;
}

ImageTensor random_pixel_kernel(const ImageTensor& donor, std::uint64_t seed, const TransformConfig& cfg) {
    cfg.validate();
    const std::size_t h = donor.height();
    const std::size_t w = donor.width();
    ImageTensor kernel(h, w, donor.channels());
    Rng rng(seed);
    std::size_t anchor_row = 0;
    std::size_t anchor_col = 0;
    for (std::size_t d = 0; d < cfg.pixels_per_draw; ++d) {
        const std::size_t pos = rng.index(donor.pixels());
        const std::size_t row = pos / w;
        const std::size_t col = pos % w;
        if (d == 0) {
            anchor_row = row;
            anchor_col = col;
        }
        const std::size_t kr = (row + h - anchor_row + h / 2) % h;
        const std::size_t kc = (col + w - anchor_col + w / 2) % w;
        for (std::size_t c = 0; c < donor.channels(); ++c) {
            kernel.at(c, kr, kc) += donor.plane(c)[pos];
        }
    }
    return kernel;
}

ImageTensor scalar_kernel(std::size_t height, std::size_t width, std::span<const double> values) {
    ImageTensor kernel(height, width, values.size());
    for (std::size_t c = 0; c < values.size(); ++c) kernel.at(c, height / 2, width / 2) = values[c];
    return kernel;
}

ImageTensor correlate_with_kernel(const ImageTensor& x, const ImageTensor& kernel, const TransformConfig& cfg) {
    require_geometry(x, kernel, "correlate_with_kernel");
    std::vector<Plane> planes;
    planes.reserve(x.channels());
    for (std::size_t c = 0; c < x.channels(); ++c) {
        Plane raw = correlate_plane(x.plane(c), kernel.plane(c));
        planes.push_back(cfg.center_kernels ? center_shift(raw) : std::move(raw));
    }
    return ImageTensor(std::move(planes));
}

ImageTensor correlate_with_random_pixel(const ImageTensor& x, const ImageTensor& donor, std::uint64_t seed,
                                        const TransformConfig& cfg) {
    require_geometry(x, donor, "correlate_with_random_pixel");
    return correlate_with_kernel(x, random_pixel_kernel(donor, seed, cfg), cfg);
}

ImageTensor transform_source(const ImageTensor& x_s, const ImageTensor& source_donor,
                             const DomainStats& target_stats, const TransformConfig& cfg) {
    detail::note_stats_access();
    require_geometry(x_s, target_stats.mean_autocorr, "transform_source");
    return convolve_with_stats(correlate_with_random_pixel(x_s, source_donor, cfg.seed, cfg), target_stats, cfg);
}

ImageTensor transform_target(const ImageTensor& x_t, std::span<const double> target_mean_pixel,
                             const DomainStats& source_stats, const TransformConfig& cfg) {
    detail::note_stats_access();
    require_geometry(x_t, source_stats.mean_autocorr, "transform_target");
    if (target_mean_pixel.size() != x_t.channels()) {
        std::ostringstream msg;
        msg << "transform_target: " << target_mean_pixel.size() << " mean-pixel values for " << x_t.channels()
            << " channels";
        throw DataError(msg.str());
    }
    const ImageTensor kernel = scalar_kernel(x_t.height(), x_t.width(), target_mean_pixel);
    return convolve_with_stats(correlate_with_kernel(x_t, kernel, cfg), source_stats, cfg);
}

ImageTensor renormalize(const ImageTensor& x) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& p : x.planes()) {
        for (const double v : p.values()) {
            if (!std::isfinite(v)) throw DataError("renormalize: non-finite value");
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    const double range = hi - lo;
    if (!(range > 0.0)) {
        std::ostringstream msg;
        msg << "renormalize: constant image (value " << lo << ")";
        throw DegenerateImageError(msg.str());
    }
    ImageTensor out = x;
    for (std::size_t c = 0; c < out.channels(); ++c) {
        for (auto& v : out.plane(c).values()) v = 2.0 * ((v - lo) / range) - 1.0;
    }
    return out;
}

}  // namespace dda
