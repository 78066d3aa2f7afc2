#include "dda/fourier.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <sstream>
#include <tuple>

#include <fftw3.h>

#include "dda/errors.hpp"

namespace dda {

Plane::Plane(std::size_t height, std::size_t width)
    : height_(height), width_(width), values_(height * width, 0.0) {
    if (height == 0 || width == 0) {
        throw DataError("plane dimensions must be positive");
    }
}

Plane::Plane(std::size_t height, std::size_t width, std::vector<double> values)
    : height_(height), width_(width), values_(std::move(values)) {
    if (height == 0 || width == 0) {
        throw DataError("plane dimensions must be positive");
    }
    if (values_.size() != height * width) {
        std::ostringstream msg;
        msg << "plane holds " << values_.size() << " values, expected " << height << "x" << width;
        throw DataError(msg.str());
    }
}

namespace {

using Complex = std::complex<double>;

// FFTW plans cached per (height, width, direction). Planning is not
// thread-safe, execution with fresh arrays is; buffers come from
// fftw_malloc so every call sees the alignment the plan was made for.
class PlanCache {
public:
    ~PlanCache() {
        for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
    }

    fftw_plan get(std::size_t height, std::size_t width, int sign) {
        std::lock_guard<std::mutex> lock(mutex_);
        const auto key = std::make_tuple(height, width, sign);
        if (auto it = plans_.find(key); it != plans_.end()) return it->second;
        auto* scratch = fftw_alloc_complex(height * width);
        fftw_plan plan = fftw_plan_dft_2d(static_cast<int>(height), static_cast<int>(width), scratch, scratch, sign,
                                          FFTW_ESTIMATE);
        fftw_free(scratch);
        if (plan == nullptr) throw DataError("fftw: planning failed");
        plans_.emplace(key, plan);
        return plan;
    }

private:
    std::mutex mutex_;
    std::map<std::tuple<std::size_t, std::size_t, int>, fftw_plan> plans_;
};

PlanCache& plan_cache() {
    static PlanCache cache;
    return cache;
}

struct FftwBuffer {
    explicit FftwBuffer(std::size_t n) : data(fftw_alloc_complex(n)), size(n) {
        if (data == nullptr) throw std::bad_alloc();
    }
    ~FftwBuffer() { fftw_free(data); }
    FftwBuffer(const FftwBuffer&) = delete;
    FftwBuffer& operator=(const FftwBuffer&) = delete;

    fftw_complex* data;
    std::size_t size;
};

// Unnormalized in-place 2D DFT; sign is FFTW_FORWARD or FFTW_BACKWARD.
void dft2(FftwBuffer& buf, std::size_t height, std::size_t width, int sign) {
    fftw_execute_dft(plan_cache().get(height, width, sign), buf.data, buf.data);
}

void check_spectrum(const Spectrum& s) {
    const std::size_t n = s.height * s.width;
    if (n == 0 || s.re.size() != n || s.im.size() != n) {
        throw DataError("malformed spectrum");
    }
}

void check_finite(const Plane& p, const char* what) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!std::isfinite(p[i])) {
            std::ostringstream msg;
            msg << what << ": non-finite value at (" << i / p.width() << ", " << i % p.width() << ")";
            throw DataError(msg.str());
        }
    }
}

void check_same_shape(const Plane& a, const Plane& b, const char* what) {
    if (!a.same_shape(b)) {
        std::ostringstream msg;
        msg << what << ": shape mismatch " << a.height() << "x" << a.width() << " vs " << b.height()
            << "x" << b.width();
        throw DataError(msg.str());
    }
}

}  // namespace

Spectrum fft2(const Plane& p) {
    check_finite(p, "fft2");
    const std::size_t n = p.size();
    FftwBuffer buf(n);
    for (std::size_t i = 0; i < n; ++i) {
        buf.data[i][0] = p[i];
        buf.data[i][1] = 0.0;
    }
    dft2(buf, p.height(), p.width(), FFTW_FORWARD);
    Spectrum s{p.height(), p.width(), std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        s.re[i] = buf.data[i][0];
        s.im[i] = buf.data[i][1];
    }
    return s;
}

Plane ifft2(const Spectrum& s) {
    check_spectrum(s);
    const std::size_t n = s.re.size();
    FftwBuffer buf(n);
    for (std::size_t i = 0; i < n; ++i) {
        buf.data[i][0] = s.re[i];
        buf.data[i][1] = s.im[i];
    }
    dft2(buf, s.height, s.width, FFTW_BACKWARD);

    const double scale = 1.0 / static_cast<double>(n);
    std::vector<double> values(n);
    double max_re = 0.0;
    double max_im = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        values[i] = buf.data[i][0] * scale;
        max_re = std::max(max_re, std::abs(values[i]));
        max_im = std::max(max_im, std::abs(buf.data[i][1] * scale));
    }
    if (!(max_im < 1e-9 * (max_re + 1.0))) {
        std::ostringstream msg;
        msg << "ifft2: imaginary residue " << max_im << " exceeds tolerance; spectrum is not conjugate-symmetric";
        throw DataError(msg.str());
    }
    return Plane(s.height, s.width, std::move(values));
}

Spectrum multiply(const Spectrum& a, const Spectrum& b) {
    Spectrum out{a.height, a.width, std::vector<double>(a.re.size()), std::vector<double>(a.re.size())};
    for (std::size_t i = 0; i < a.re.size(); ++i) {
        out.re[i] = a.re[i] * b.re[i] - a.im[i] * b.im[i];
        out.im[i] = a.re[i] * b.im[i] + a.im[i] * b.re[i];
    }
    return out;
}

Spectrum multiply_conj(const Spectrum& a, const Spectrum& b) {
    Spectrum out{a.height, a.width, std::vector<double>(a.re.size()), std::vector<double>(a.re.size())};
    for (std::size_t i = 0; i < a.re.size(); ++i) {
        out.re[i] = a.re[i] * b.re[i] + a.im[i] * b.im[i];
        out.im[i] = a.im[i] * b.re[i] - a.re[i] * b.im[i];
    }
    return out;
}

Plane cross_correlate(const Plane& a, const Plane& b) {
    check_same_shape(a, b, "cross_correlate");
    return ifft2(multiply_conj(fft2(a), fft2(b)));
}

Plane convolve(const Plane& a, const Plane& b) {
    check_same_shape(a, b, "convolve");
    return ifft2(multiply(fft2(a), fft2(b)));
}

Plane autocorrelate(const Plane& p) {
    const Spectrum s = fft2(p);
    return ifft2(multiply_conj(s, s));
}

Plane center_shift(const Plane& p) {
    const std::size_t h = p.height();
    const std::size_t w = p.width();
    Plane out(h, w);
    const std::size_t dr = h / 2;
    const std::size_t dc = w / 2;
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            out.at((r + dr) % h, (c + dc) % w) = p.at(r, c);
        }
    }
    return out;
}

}  // namespace dda
