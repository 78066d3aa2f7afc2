#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "dda/errors.hpp"
#include "dda/fourier.hpp"
#include "oracles.hpp"

using namespace dda;

TEST_CASE("fft2 matches a direct double-sum DFT for assorted sizes") {
    std::mt19937_64 gen(7);
    for (auto [h, w] : {std::pair{1, 1}, {1, 5}, {4, 4}, {3, 7}, {6, 10}, {8, 9}, {12, 5}, {28, 28}}) {
        const Plane p = oracle::random_plane(gen, h, w);
        const Spectrum s = fft2(p);
        const auto ref = oracle::dft2(p);
        double err = 0.0;
        for (std::size_t i = 0; i < ref.size(); ++i) {
            err = std::max(err, std::abs(s.re[i] - ref[i].real()));
            err = std::max(err, std::abs(s.im[i] - ref[i].imag()));
        }
        CHECK(err < 1e-9);
    }
}

TEST_CASE("ifft2 inverts fft2") {
    std::mt19937_64 gen(8);
    const Plane p = oracle::random_plane(gen, 10, 6);
    CHECK(oracle::max_abs_diff(ifft2(fft2(p)), p) < 1e-13);
}

TEST_CASE("ifft2 rejects a spectrum that is not conjugate-symmetric") {
    Spectrum s{2, 2, {0, 0, 0, 0}, {0, 1, 0, 0}};
    CHECK_THROWS_AS(ifft2(s), DataError);
}

TEST_CASE("fft2 rejects non-finite input and names the position") {
    Plane p(3, 3);
    p.at(1, 2) = std::numeric_limits<double>::quiet_NaN();
    try {
        (void)fft2(p);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("(1, 2)") != std::string::npos);
    }
}

TEST_CASE("cross_correlate, convolve, autocorrelate agree with brute-force sums") {
    std::mt19937_64 gen(11);
    std::uniform_int_distribution<int> dim(1, 8);
    double worst = 0.0;
    for (int t = 0; t < 60; ++t) {
        const std::size_t h = dim(gen), w = dim(gen);
        const Plane a = oracle::random_plane(gen, h, w);
        const Plane b = oracle::random_plane(gen, h, w);
        worst = std::max(worst, oracle::max_abs_diff(cross_correlate(a, b), oracle::cross_correlate(a, b)));
        worst = std::max(worst, oracle::max_abs_diff(convolve(a, b), oracle::convolve(a, b)));
        worst = std::max(worst, oracle::max_abs_diff(autocorrelate(a), oracle::cross_correlate(a, a)));
    }
    CHECK(worst < 1e-10);
}

TEST_CASE("unit delta at zero lag is the identity") {
    std::mt19937_64 gen(12);
    const Plane x = oracle::random_plane(gen, 6, 5);
    Plane delta(6, 5);
    delta.at(0, 0) = 1.0;
    CHECK(oracle::max_abs_diff(convolve(x, delta), x) < 1e-14);
    CHECK(oracle::max_abs_diff(cross_correlate(x, delta), x) < 1e-14);
    CHECK(oracle::max_abs_diff(autocorrelate(delta), delta) < 1e-14);
}

TEST_CASE("autocorrelation is even and peaks at zero lag") {
    std::mt19937_64 gen(13);
    const Plane p = oracle::random_plane(gen, 7, 6);
    const Plane a = autocorrelate(p);
    double energy = 0.0;
    for (double v : p.values()) energy += v * v;
    CHECK(a.at(0, 0) == doctest::Approx(energy).epsilon(1e-12));
    for (std::size_t r = 0; r < 7; ++r)
        for (std::size_t c = 0; c < 6; ++c) {
            CHECK(std::abs(a.at(r, c) - a.at((7 - r) % 7, (6 - c) % 6)) < 1e-12);
            CHECK(a.at(r, c) <= a.at(0, 0) + 1e-12);
        }
}

TEST_CASE("convolution is commutative") {
    std::mt19937_64 gen(14);
    const Plane a = oracle::random_plane(gen, 8, 8);
    const Plane b = oracle::random_plane(gen, 8, 8);
    CHECK(oracle::max_abs_diff(convolve(a, b), convolve(b, a)) < 1e-12);
}

TEST_CASE("center_shift moves zero lag to the center and is self-inverse for even sizes") {
    Plane p(4, 6);
    p.at(0, 0) = 1.0;
    const Plane s = center_shift(p);
    CHECK(s.at(2, 3) == 1.0);
    CHECK(center_shift(s) == p);
}

TEST_CASE("shape mismatches are rejected with both shapes named") {
    const Plane a(3, 4), b(4, 3);
    try {
        (void)convolve(a, b);
        FAIL("expected throw");
    } catch (const std::exception& e) {
        const std::string msg = e.what();
        CHECK(msg.find("3x4") != std::string::npos);
        CHECK(msg.find("4x3") != std::string::npos);
    }
    CHECK_THROWS(cross_correlate(a, b));
}

TEST_CASE("Plane rejects empty dimensions and value-count mismatches") {
    CHECK_THROWS(Plane(0, 3));
    CHECK_THROWS(Plane(2, 2, std::vector<double>(3)));
}
