#include <fstream>
#include <sstream>

#include "dda/binary_io.hpp"
#include "dda/errors.hpp"
#include "dda/file_util.hpp"
#include "dda/transform.hpp"

namespace dda {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    write_file(path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

std::uint64_t fnv1a64(std::span<const unsigned char> bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<unsigned char> encode_stats(const DomainStats& stats) {
    const auto& ac = stats.mean_autocorr;
    if (stats.mean_pixel.size() != ac.channels()) {
        throw DataError("domain stats: mean_pixel/channel count mismatch");
    }
    binary::Writer w;
    w.bytes("DDASTATS");
    w.u32(kStatsVersion);
    w.u32(static_cast<std::uint32_t>(ac.height()));
    w.u32(static_cast<std::uint32_t>(ac.width()));
    w.u32(static_cast<std::uint32_t>(ac.channels()));
    w.i64(stats.seed);
    w.u64(stats.sample_count);
    for (const double v : stats.mean_pixel) w.f64(v);
    for (const auto& p : ac.planes()) {
        for (const double v : p.values()) w.f64(v);
    }
    return std::move(w.data());
}

DomainStats decode_stats(std::span<const unsigned char> bytes, DomainTag domain) {
    binary::Reader r(bytes, "stats cache");
    r.expect("DDASTATS");
    if (const auto version = r.u32(); version != kStatsVersion) {
        r.fail("unsupported version " + std::to_string(version));
    }
    const std::size_t h = r.u32();
    const std::size_t w = r.u32();
    const std::size_t channels = r.u32();
    if (h == 0 || w == 0 || channels == 0) r.fail("zero geometry");
    DomainStats stats;
    stats.domain = domain;
    stats.seed = r.i64();
    stats.sample_count = r.u64();
    if (stats.sample_count == 0) r.fail("zero sample_count");
    r.need((channels + channels * h * w) * sizeof(double));
    for (std::size_t c = 0; c < channels; ++c) stats.mean_pixel.push_back(r.f64());
    std::vector<Plane> planes;
    for (std::size_t c = 0; c < channels; ++c) {
        std::vector<double> values(h * w);
        for (auto& v : values) v = r.f64();
        planes.emplace_back(h, w, std::move(values));
    }
    stats.mean_autocorr = ImageTensor(std::move(planes));
    if (!r.done()) r.fail("trailing bytes");
    return stats;
}

void write_stats(const std::filesystem::path& path, const DomainStats& stats) {
    write_file(path, encode_stats(stats));
}

DomainStats read_stats(const std::filesystem::path& path, DomainTag domain) {
    detail::note_stats_access();
    const auto bytes = read_file(path);
    try {
        return decode_stats(bytes, domain);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

}  // namespace dda
