#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dda/errors.hpp"

namespace dda::binary {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

/// Little-endian record writer.
class Writer {
public:
    void bytes(std::string_view raw) { out_.insert(out_.end(), raw.begin(), raw.end()); }

    template <typename T>
    void scalar(T value) {
        unsigned char buf[sizeof(T)];
        std::memcpy(buf, &value, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
        out_.insert(out_.end(), buf, buf + sizeof(T));
    }

    void u32(std::uint32_t v) { scalar(v); }
    void u64(std::uint64_t v) { scalar(v); }
    void i64(std::int64_t v) { scalar(v); }
    void f64(double v) { scalar(v); }

    [[nodiscard]] std::vector<unsigned char>& data() noexcept { return out_; }

private:
    std::vector<unsigned char> out_;
};

/// Little-endian record reader; errors report the byte offset.
class Reader {
public:
    Reader(std::span<const unsigned char> data, std::string what) : data_(data), what_(std::move(what)) {}

    void expect(std::string_view magic) {
        need(magic.size());
        if (std::memcmp(data_.data() + pos_, magic.data(), magic.size()) != 0) {
            fail("bad magic, expected \"" + std::string(magic) + "\"");
        }
        pos_ += magic.size();
    }

    template <typename T>
    T scalar() {
        need(sizeof(T));
        unsigned char buf[sizeof(T)];
        std::memcpy(buf, data_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
        T value;
        std::memcpy(&value, buf, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    std::uint32_t u32() { return scalar<std::uint32_t>(); }
    std::uint64_t u64() { return scalar<std::uint64_t>(); }
    std::int64_t i64() { return scalar<std::int64_t>(); }
    double f64() { return scalar<double>(); }

    [[nodiscard]] std::size_t offset() const noexcept { return pos_; }
    [[nodiscard]] bool done() const noexcept { return pos_ == data_.size(); }

    [[noreturn]] void fail(const std::string& why) const {
        throw DataError(what_ + ": " + why + " at byte offset " + std::to_string(pos_));
    }

    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) fail("truncated payload");
    }

private:
    std::span<const unsigned char> data_;
    std::string what_;
    std::size_t pos_ = 0;
};

}  // namespace dda::binary
