#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "dda/errors.hpp"
#include "dda/file_util.hpp"
#include "dda/rng.hpp"
#include "dda/transform.hpp"
#include "oracles.hpp"

using namespace dda;

namespace {

// Draw replay written against the raw engine: index = high 64 bits of next * n.
std::size_t replay_index(std::mt19937_64& gen, std::size_t n) {
    return static_cast<std::size_t>((static_cast<unsigned __int128>(gen()) * n) >> 64);
}

Dataset random_dataset(std::mt19937_64& gen, std::size_t n, std::size_t h, std::size_t w, std::size_t c,
                       DomainTag tag) {
    Dataset d;
    d.domain = tag;
    for (std::size_t i = 0; i < n; ++i) {
        d.images.push_back(oracle::random_image(gen, h, w, c));
        d.labels.push_back(static_cast<int>(i % 10));
    }
    return d;
}

DomainStats identity_stats(std::size_t h, std::size_t w, std::size_t c, DomainTag tag) {
    DomainStats s;
    s.mean_autocorr = oracle::unit_delta(h, w, c);
    s.mean_pixel.assign(c, 1.0);
    s.sample_count = 1;
    s.domain = tag;
    return s;
}

ImageTensor constant_image(std::size_t h, std::size_t w, std::size_t c, double v) {
    ImageTensor x(h, w, c);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (auto& p : x.plane(ch).values()) p = v;
    return x;
}

ImageTensor oracle_mean_autocorr(const std::vector<ImageTensor>& images) {
    const auto& first = images.front();
    ImageTensor out(first.height(), first.width(), first.channels());
    for (const auto& img : images)
        for (std::size_t c = 0; c < img.channels(); ++c) {
            const Plane a = oracle::cross_correlate(img.plane(c), img.plane(c));
            for (std::size_t i = 0; i < a.size(); ++i) out.plane(c)[i] += a[i];
        }
    for (std::size_t c = 0; c < out.channels(); ++c)
        for (auto& v : out.plane(c).values()) v /= static_cast<double>(images.size());
    return out;
}

}  // namespace

TEST_CASE("splitmix64 matches the published reference value") {
    CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
}

TEST_CASE("derive_seed separates streams and is order sensitive") {
    CHECK(derive_seed(1, {2, 3}) != derive_seed(1, {3, 2}));
    CHECK(derive_seed(1, {2}) != derive_seed(2, {2}));
    CHECK(derive_seed(5, {0, 1}) == derive_seed(5, {0, 1}));
}

TEST_CASE("Rng draws replay against the raw engine") {
    Rng rng(99);
    std::mt19937_64 gen(99);
    for (std::size_t n : {1u, 2u, 7u, 784u, 1000003u}) CHECK(rng.index(n) == replay_index(gen, n));
    const double u = rng.uniform();
    CHECK(u == static_cast<double>(gen() >> 11) * std::ldexp(1.0, -53));
    CHECK(rng.coin() == ((gen() >> 63) != 0));
}

TEST_CASE("mean_autocorrelation of a single unit delta is a unit delta") {
    const ImageTensor d = oracle::unit_delta(5, 4, 2);
    const std::vector<ImageTensor> v{d};
    CHECK(oracle::max_abs_diff(mean_autocorrelation(v), d) < 1e-15);
}

TEST_CASE("mean_autocorrelation of N copies equals the single autocorrelation") {
    std::mt19937_64 gen(21);
    const ImageTensor p = oracle::random_image(gen, 6, 6, 1);
    const std::vector<ImageTensor> v(4, p);
    const Plane ref = oracle::cross_correlate(p.plane(0), p.plane(0));
    CHECK(oracle::max_abs_diff(mean_autocorrelation(v).plane(0), ref) < 1e-12);
}

TEST_CASE("mean_autocorrelation matches per-image oracle then arithmetic mean") {
    std::mt19937_64 gen(22);
    std::vector<ImageTensor> v;
    for (int i = 0; i < 5; ++i) v.push_back(oracle::random_image(gen, 6, 6, 3));
    CHECK(oracle::max_abs_diff(mean_autocorrelation(v), oracle_mean_autocorr(v)) < 1e-10);
}

TEST_CASE("mean_autocorrelation rejects empty and mixed-geometry input") {
    std::vector<ImageTensor> empty;
    CHECK_THROWS_AS(mean_autocorrelation(empty), DataError);
    std::vector<ImageTensor> mixed{ImageTensor(4, 4, 1), ImageTensor(4, 5, 1)};
    try {
        (void)mean_autocorrelation(mixed);
        FAIL("expected throw");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("1") != std::string::npos);
    }
}

TEST_CASE("zero-phase property of the mean autocorrelation spectrum") {
    std::mt19937_64 gen(23);
    for (int t = 0; t < 20; ++t) {
        std::vector<ImageTensor> v;
        for (int i = 0; i < 5; ++i) v.push_back(oracle::random_image(gen, 8, 6, 1));
        const Spectrum s = fft2(mean_autocorrelation(v).plane(0));
        double peak = 0.0, max_im = 0.0, min_re = 0.0;
        for (std::size_t i = 0; i < s.re.size(); ++i) {
            peak = std::max(peak, std::hypot(s.re[i], s.im[i]));
            max_im = std::max(max_im, std::abs(s.im[i]));
            min_re = std::min(min_re, s.re[i]);
        }
        CHECK(max_im / peak < 1e-9);
        CHECK(min_re / peak > -1e-9);
    }
}

TEST_CASE("mean_random_pixel of a constant dataset is the constant") {
    std::vector<ImageTensor> v(7, constant_image(5, 5, 3, 0.25));
    for (std::uint64_t seed : {0ull, 1ull, 12345ull}) {
        const auto m = mean_random_pixel(v, seed);
        for (double x : m) CHECK(x == 0.25);
    }
}

TEST_CASE("mean_random_pixel of one image is a single drawn pixel") {
    std::mt19937_64 gen(24);
    const std::vector<ImageTensor> v{oracle::random_image(gen, 4, 5, 3)};
    const auto m = mean_random_pixel(v, 77);
    std::mt19937_64 replay(derive_seed(77, {0}));
    const std::size_t pos = replay_index(replay, 20);
    for (std::size_t c = 0; c < 3; ++c) CHECK(m[c] == v[0].plane(c)[pos]);
}

TEST_CASE("mean_random_pixel replays the seeded draw sequence") {
    std::mt19937_64 gen(25);
    std::vector<ImageTensor> v;
    for (int i = 0; i < 10; ++i) v.push_back(oracle::random_image(gen, 6, 7, 3));
    const auto m = mean_random_pixel(v, 4242);
    std::vector<double> ref(3, 0.0);
    for (std::size_t j = 0; j < v.size(); ++j) {
        std::mt19937_64 replay(derive_seed(4242, {j}));
        const std::size_t pos = replay_index(replay, 42);
        for (std::size_t c = 0; c < 3; ++c) ref[c] += v[j].plane(c)[pos];
    }
    for (std::size_t c = 0; c < 3; ++c) CHECK(m[c] == doctest::Approx(ref[c] / 10.0).epsilon(1e-15));
    std::vector<ImageTensor> empty;
    CHECK_THROWS_AS(mean_random_pixel(empty, 1), DataError);
}

TEST_CASE("unit drawn value with a centered kernel leaves the input unchanged") {
    std::mt19937_64 gen(26);
    const ImageTensor x = oracle::random_image(gen, 8, 6, 3);
    TransformConfig cfg;
    CHECK(correlate_with_random_pixel(x, constant_image(8, 6, 3, 1.0), 5, cfg) == x);
}

TEST_CASE("drawn value 2 doubles the input") {
    std::mt19937_64 gen(27);
    const ImageTensor x = oracle::random_image(gen, 8, 8, 1);
    const ImageTensor y = correlate_with_random_pixel(x, constant_image(8, 8, 1, 2.0), 5, TransformConfig{});
    for (std::size_t i = 0; i < 64; ++i) CHECK(std::abs(y.plane(0)[i] - 2.0 * x.plane(0)[i]) < 1e-12);
}

TEST_CASE("centered and zero-lag placements are related by center_shift") {
    std::mt19937_64 gen(28);
    const ImageTensor x = oracle::random_image(gen, 8, 6, 2);
    const ImageTensor donor = oracle::random_image(gen, 8, 6, 2);
    TransformConfig centered, raw;
    raw.center_kernels = false;
    const ImageTensor a = correlate_with_random_pixel(x, donor, 31, centered);
    const ImageTensor b = correlate_with_random_pixel(x, donor, 31, raw);
    for (std::size_t c = 0; c < 2; ++c) CHECK(oracle::max_abs_diff(a.plane(c), center_shift(b.plane(c))) < 1e-12);
}

TEST_CASE("random_pixel_kernel places draws relative to the first at the center") {
    std::mt19937_64 gen(29);
    const ImageTensor donor = oracle::random_image(gen, 6, 8, 3);
    TransformConfig cfg;
    cfg.pixels_per_draw = 3;
    const ImageTensor k = random_pixel_kernel(donor, 101, cfg);
    std::mt19937_64 replay(101);
    ImageTensor ref(6, 8, 3);
    std::size_t ar = 0, ac = 0;
    for (int d = 0; d < 3; ++d) {
        const std::size_t pos = replay_index(replay, 48);
        const std::size_t r = pos / 8, c = pos % 8;
        if (d == 0) {
            ar = r;
            ac = c;
        }
        for (std::size_t ch = 0; ch < 3; ++ch)
            ref.at(ch, oracle::wrap(static_cast<long long>(r) - static_cast<long long>(ar) + 3, 6),
                   oracle::wrap(static_cast<long long>(c) - static_cast<long long>(ac) + 4, 8)) += donor.plane(ch)[pos];
    }
    CHECK(oracle::max_abs_diff(k, ref) == 0.0);
    cfg.pixels_per_draw = 0;
    CHECK_THROWS(cfg.validate());
}

TEST_CASE("renormalize hand-computed examples") {
    Plane p(1, 3, {-2.0, 0.0, 2.0});
    const auto y = renormalize(ImageTensor(std::vector<Plane>{p}));
    CHECK(y.plane(0).values() == std::vector<double>{-1.0, 0.0, 1.0});
    Plane q(1, 2, {0.0, 4.0});
    CHECK(renormalize(ImageTensor(std::vector<Plane>{q})).plane(0).values() == std::vector<double>{-1.0, 1.0});

    std::vector<Plane> planes{Plane(1, 2, {0.0, 1.0}), Plane(1, 2, {0.0, 2.0}), Plane(1, 2, {0.0, 4.0})};
    const auto z = renormalize(ImageTensor(planes));
    CHECK(z.at(0, 0, 1) == doctest::Approx(2.0 * 0.25 - 1.0));
    CHECK(z.at(1, 0, 1) == doctest::Approx(2.0 * 0.5 - 1.0));
    CHECK(z.at(2, 0, 1) == 1.0);
    CHECK(z.at(0, 0, 0) == -1.0);
    CHECK_THROWS_AS(renormalize(constant_image(3, 3, 2, 0.5)), DegenerateImageError);
}

TEST_CASE("identity statistics collapse both transforms to renormalize") {
    std::mt19937_64 gen(30);
    const auto stats_t = identity_stats(8, 8, 3, DomainTag::target);
    const auto stats_s = identity_stats(8, 8, 3, DomainTag::source);
    const std::vector<double> one(3, 1.0);
    TransformConfig cfg;
    cfg.seed = 3;
    for (int t = 0; t < 10; ++t) {
        const ImageTensor x = oracle::random_image(gen, 8, 8, 3);
        CHECK(transform_source(x, constant_image(8, 8, 3, 1.0), stats_t, cfg) == renormalize(x));
        CHECK(transform_target(x, one, stats_s, cfg) == renormalize(x));
    }
}

TEST_CASE("transform_source matches a straight-line composition oracle") {
    std::mt19937_64 gen(31);
    std::vector<ImageTensor> target_set;
    for (int i = 0; i < 3; ++i) target_set.push_back(oracle::random_image(gen, 8, 8, 1));
    Dataset t;
    t.images = target_set;
    t.labels = {0, 1, 2};
    t.domain = DomainTag::target;
    const DomainStats stats = compute_domain_stats(t, 9);
    const ImageTensor x = oracle::random_image(gen, 8, 8, 1);
    const ImageTensor donor = oracle::random_image(gen, 8, 8, 1);
    TransformConfig cfg;
    cfg.seed = 555;
    const ImageTensor y = transform_source(x, donor, stats, cfg);

    std::mt19937_64 replay(555);
    const double k = donor.plane(0)[replay_index(replay, 64)];
    Plane scaled = x.plane(0);
    for (auto& v : scaled.values()) v *= k;
    const Plane conv = oracle::convolve(scaled, oracle_mean_autocorr(target_set).plane(0));
    const ImageTensor ref = oracle::renormalize(ImageTensor(std::vector<Plane>{conv}));
    CHECK(oracle::max_abs_diff(y, ref) < 1e-10);
}

TEST_CASE("transform_target matches a straight-line composition oracle") {
    std::mt19937_64 gen(32);
    std::vector<ImageTensor> source_set;
    for (int i = 0; i < 4; ++i) source_set.push_back(oracle::random_image(gen, 8, 8, 3));
    Dataset s;
    s.images = source_set;
    s.labels = {0, 1, 2, 3};
    const DomainStats stats = compute_domain_stats(s, 1);
    const ImageTensor x = oracle::random_image(gen, 8, 8, 3);
    const std::vector<double> m{0.3, -0.2, 0.7};
    const ImageTensor y = transform_target(x, m, stats, TransformConfig{});
    const ImageTensor ac = oracle_mean_autocorr(source_set);
    std::vector<Plane> planes;
    for (std::size_t c = 0; c < 3; ++c) {
        Plane scaled = x.plane(c);
        for (auto& v : scaled.values()) v *= m[c];
        planes.push_back(oracle::convolve(scaled, ac.plane(c)));
    }
    CHECK(oracle::max_abs_diff(y, oracle::renormalize(ImageTensor(planes))) < 1e-10);
}

TEST_CASE("zero target mean pixel is rejected as degenerate after renormalization") {
    std::mt19937_64 gen(33);
    const auto stats = identity_stats(6, 6, 3, DomainTag::source);
    const std::vector<double> zero(3, 0.0);
    CHECK_THROWS_AS(transform_target(oracle::random_image(gen, 6, 6, 3), zero, stats, TransformConfig{}),
                    DegenerateImageError);
    TransformConfig no_norm;
    no_norm.renormalize = false;
    const auto y = transform_target(oracle::random_image(gen, 6, 6, 3), zero, stats, no_norm);
    for (std::size_t c = 0; c < 3; ++c)
        for (double v : y.plane(c).values()) CHECK(v == 0.0);
}

TEST_CASE("swapping the convolution operand order leaves outputs unchanged") {
    std::mt19937_64 gen(34);
    Dataset t = random_dataset(gen, 6, 8, 8, 3, DomainTag::target);
    const DomainStats stats = compute_domain_stats(t, 2);
    TransformConfig a, b;
    b.swap_convolution_operands = true;
    for (int i = 0; i < 10; ++i) {
        a.seed = b.seed = static_cast<std::uint64_t>(i);
        const auto x = oracle::random_image(gen, 8, 8, 3);
        const auto donor = oracle::random_image(gen, 8, 8, 3);
        CHECK(oracle::max_abs_diff(transform_source(x, donor, stats, a), transform_source(x, donor, stats, b)) < 1e-12);
        CHECK(oracle::max_abs_diff(transform_target(x, stats.mean_pixel, stats, a),
                                   transform_target(x, stats.mean_pixel, stats, b)) < 1e-12);
    }
}

TEST_CASE("transform outputs span exactly [-1, 1]") {
    std::mt19937_64 gen(35);
    Dataset t = random_dataset(gen, 4, 8, 8, 3, DomainTag::target);
    const DomainStats stats = compute_domain_stats(t, 2);
    for (int i = 0; i < 10; ++i) {
        TransformConfig cfg;
        cfg.seed = static_cast<std::uint64_t>(i);
        const auto y = transform_source(oracle::random_image(gen, 8, 8, 3), oracle::random_image(gen, 8, 8, 3), stats, cfg);
        double lo = 1e9, hi = -1e9;
        for (std::size_t c = 0; c < 3; ++c)
            for (double v : y.plane(c).values()) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        CHECK(lo == -1.0);
        CHECK(hi == 1.0);
    }
}

TEST_CASE("pre-normalization output keeps the phase of the scaled input") {
    std::mt19937_64 gen(36);
    Dataset t = random_dataset(gen, 5, 8, 8, 1, DomainTag::target);
    const DomainStats stats = compute_domain_stats(t, 2);
    const auto x = oracle::random_image(gen, 8, 8, 1);
    const std::vector<double> m{0.8};
    TransformConfig cfg;
    cfg.renormalize = false;
    const Spectrum out = fft2(transform_target(x, m, stats, cfg).plane(0));
    Plane scaled = x.plane(0);
    for (auto& v : scaled.values()) v *= 0.8;
    const Spectrum in = fft2(scaled);
    double peak = 0.0;
    for (std::size_t i = 0; i < out.re.size(); ++i) peak = std::max(peak, std::hypot(out.re[i], out.im[i]));
    for (std::size_t i = 0; i < out.re.size(); ++i) {
        const double mag = std::hypot(out.re[i], out.im[i]);
        if (mag < 1e-9 * peak) continue;
        const double cross = out.re[i] * in.im[i] - out.im[i] * in.re[i];
        const double dot = out.re[i] * in.re[i] + out.im[i] * in.im[i];
        CHECK(std::abs(std::atan2(cross, dot)) < 1e-8);
    }
}

TEST_CASE("geometry mismatch between stats and input is rejected") {
    const auto stats = identity_stats(8, 8, 3, DomainTag::target);
    std::mt19937_64 gen(37);
    const auto x = oracle::random_image(gen, 6, 8, 3);
    CHECK_THROWS_AS(transform_source(x, x, stats, TransformConfig{}), DataError);
    CHECK_THROWS_AS(transform_target(x, stats.mean_pixel, stats, TransformConfig{}), DataError);
    const auto y = oracle::random_image(gen, 8, 8, 3);
    const std::vector<double> two(2, 1.0);
    CHECK_THROWS_AS(transform_target(y, two, stats, TransformConfig{}), DataError);
}

TEST_CASE("identical dataset, seed and config give bitwise identical statistics") {
    std::mt19937_64 g1(38), g2(38);
    const Dataset a = random_dataset(g1, 6, 8, 8, 3, DomainTag::source);
    const Dataset b = random_dataset(g2, 6, 8, 8, 3, DomainTag::source);
    CHECK(compute_domain_stats(a, 11) == compute_domain_stats(b, 11));
}

TEST_CASE("stats cache round-trips and rejects corrupt files") {
    std::mt19937_64 gen(39);
    const Dataset d = random_dataset(gen, 4, 6, 5, 3, DomainTag::target);
    const DomainStats s = compute_domain_stats(d, 17);
    const auto dir = oracle::temp_dir("stats");
    write_stats(dir / "t.bin", s);
    CHECK(read_stats(dir / "t.bin", DomainTag::target) == s);

    auto bytes = encode_stats(s);
    CHECK(bytes.size() == 8 + 4 * 4 + 8 + 8 + 3 * 8 + 3 * 30 * 8);
    CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "DDASTATS");
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_stats(bad, DomainTag::target), DataError);
    auto version = bytes;
    version[8] = 9;
    CHECK_THROWS_AS(decode_stats(version, DomainTag::target), DataError);
    const std::vector<unsigned char> truncated(bytes.begin(), bytes.end() - 5);
    CHECK_THROWS_AS(decode_stats(truncated, DomainTag::target), DataError);
    auto extra = bytes;
    extra.push_back(0);
    CHECK_THROWS_AS(decode_stats(extra, DomainTag::target), DataError);
    CHECK_THROWS_AS(read_stats(dir / "missing.bin", DomainTag::target), DataError);
}

TEST_CASE("stats access counter moves only when stats are produced or consumed") {
    const auto before = stats_access_count();
    (void)renormalize(ImageTensor(std::vector<Plane>{Plane(1, 2, {0.0, 1.0})}));
    CHECK(stats_access_count() == before);
    const auto stats = identity_stats(4, 4, 1, DomainTag::source);
    const std::vector<double> one{1.0};
    std::mt19937_64 gen(40);
    (void)transform_target(oracle::random_image(gen, 4, 4, 1), one, stats, TransformConfig{});
    CHECK(stats_access_count() == before + 1);
}
