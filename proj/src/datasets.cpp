#include "dda/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "dda/errors.hpp"
#include "dda/file_util.hpp"
#include "dda/png_io.hpp"
#include "dda/rng.hpp"

namespace dda {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr int kDigitClasses = 10;

class BigEndianReader {
public:
    BigEndianReader(const std::vector<unsigned char>& data, std::string what) : data_(data), what_(std::move(what)) {}

    std::uint32_t u32() {
        need(4);
        const std::uint32_t v = (std::uint32_t{data_[pos_]} << 24) | (std::uint32_t{data_[pos_ + 1]} << 16) |
                                (std::uint32_t{data_[pos_ + 2]} << 8) | std::uint32_t{data_[pos_ + 3]};
        pos_ += 4;
        return v;
    }

    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) {
            fail("truncated payload (need " + std::to_string(n) + " bytes, have " +
                 std::to_string(data_.size() - pos_) + ")");
        }
    }

    [[noreturn]] void fail(const std::string& why) const {
        throw DataError(what_ + ": " + why + " at byte offset " + std::to_string(pos_));
    }

    [[nodiscard]] std::size_t offset() const noexcept { return pos_; }
    [[nodiscard]] std::size_t remaining() const noexcept { return data_.size() - pos_; }

private:
    const std::vector<unsigned char>& data_;
    std::string what_;
    std::size_t pos_ = 0;
};

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v >> 24));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v));
}

void check_label(int label, const std::string& where) {
    if (label < 0 || label >= kDigitClasses) {
        throw DataError(where + ": label " + std::to_string(label) + " outside [0, 9]");
    }
}

}  // namespace

void PatchBank::validate() const {
    if (patches.empty()) throw DataError("patch bank is empty");
    for (std::size_t i = 0; i < patches.size(); ++i) {
        if (!patches[i].same_geometry(patches.front())) {
            throw DataError("patch bank: patch " + std::to_string(i) + " has geometry " +
                            patches[i].shape_string());
        }
        for (const auto& p : patches[i].planes()) {
            for (const double v : p.values()) {
                if (!(v >= 0.0 && v <= 1.0)) {
                    throw DataError("patch bank: patch " + std::to_string(i) + " has values outside [0,1]");
                }
            }
        }
    }
}

IdxHeader read_idx_header(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    BigEndianReader r(bytes, path.string());
    IdxHeader header;
    header.magic = r.u32();
    if ((header.magic >> 16) != 0 || ((header.magic >> 8) & 0xff) != 0x08) {
        throw DataError(path.string() + ": bad IDX magic 0x" + [&] {
            std::ostringstream s;
            s << std::hex << header.magic;
            return s.str();
        }() + " at byte offset 0");
    }
    const std::uint32_t rank = header.magic & 0xff;
    for (std::uint32_t d = 0; d < rank; ++d) header.dims.push_back(r.u32());
    return header;
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 DomainTag domain) {
    const auto image_bytes = read_file(images_path);
    const auto label_bytes = read_file(labels_path);

    BigEndianReader ir(image_bytes, images_path.string());
    if (ir.u32() != kIdxImagesMagic) {
        throw DataError(images_path.string() + ": bad magic (expected 0x00000803) at byte offset 0");
    }
    const std::size_t count = ir.u32();
    const std::size_t rows = ir.u32();
    const std::size_t cols = ir.u32();
    if (rows == 0 || cols == 0) ir.fail("zero image dimension");
    ir.need(count * rows * cols);

    BigEndianReader lr(label_bytes, labels_path.string());
    if (lr.u32() != kIdxLabelsMagic) {
        throw DataError(labels_path.string() + ": bad magic (expected 0x00000801) at byte offset 0");
    }
    const std::size_t label_count = lr.u32();
    if (label_count != count) {
        throw DataError(labels_path.string() + ": label count " + std::to_string(label_count) +
                        " does not match image count " + std::to_string(count) + " (byte offset 4)");
    }
    lr.need(count);

    Dataset data;
    data.domain = domain;
    data.name = images_path.filename().string();
    data.images.reserve(count);
    data.labels.reserve(count);
    const std::size_t pixels = rows * cols;
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<double> values(pixels);
        const unsigned char* src = image_bytes.data() + ir.offset() + i * pixels;
        for (std::size_t k = 0; k < pixels; ++k) values[k] = src[k] / 255.0;
        data.images.emplace_back(std::vector<Plane>{Plane(rows, cols, std::move(values))});
        const int label = label_bytes[lr.offset() + i];
        check_label(label, labels_path.string() + " (byte offset " + std::to_string(lr.offset() + i) + ")");
        data.labels.push_back(label);
    }
    return data;
}

void save_idx(const Dataset& data, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path) {
    data.validate();
    std::vector<unsigned char> images;
    std::vector<unsigned char> labels;
    const std::size_t rows = data.empty() ? 0 : data.images.front().height();
    const std::size_t cols = data.empty() ? 0 : data.images.front().width();
    put_be32(images, kIdxImagesMagic);
    put_be32(images, static_cast<std::uint32_t>(data.size()));
    put_be32(images, static_cast<std::uint32_t>(rows));
    put_be32(images, static_cast<std::uint32_t>(cols));
    put_be32(labels, kIdxLabelsMagic);
    put_be32(labels, static_cast<std::uint32_t>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.images[i].channels() != 1) throw DataError("save_idx: image " + std::to_string(i) + " is not mono");
        for (const double v : data.images[i].plane(0).values()) {
            images.push_back(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
        }
        labels.push_back(static_cast<unsigned char>(data.labels[i]));
    }
    write_file(images_path, images);
    write_file(labels_path, labels);
}

Dataset to_rgb(const Dataset& data) {
    Dataset out;
    out.domain = data.domain;
    out.name = data.name;
    out.labels = data.labels;
    out.images.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& image = data.images[i];
        if (image.channels() != 1) {
            throw DataError("to_rgb: image " + std::to_string(i) + " already has " +
                            std::to_string(image.channels()) + " channels");
        }
        out.images.emplace_back(std::vector<Plane>{image.plane(0), image.plane(0), image.plane(0)});
    }
    return out;
}

Dataset to_signed_range(const Dataset& data) {
    Dataset out = data;
    for (auto& image : out.images) {
        for (std::size_t c = 0; c < image.channels(); ++c) {
            for (auto& v : image.plane(c).values()) v = 2.0 * v - 1.0;
        }
    }
    return out;
}

Dataset synthesize_target(const Dataset& digits, const PatchBank& bank, std::uint64_t seed) {
    bank.validate();
    digits.validate();
    Dataset out;
    out.domain = DomainTag::target;
    out.name = digits.name + "+synth";
    out.labels = digits.labels;
    out.images.reserve(digits.size());
    for (std::size_t i = 0; i < digits.size(); ++i) {
        const auto& digit = digits.images[i];
        if (!digit.same_geometry(bank.patches.front())) {
            throw DataError("synthesize_target: digit " + digit.shape_string() + " vs patch " +
                            bank.patches.front().shape_string());
        }
        Rng rng(derive_seed(seed, {i}));
        const auto& patch = bank.patches[rng.index(bank.patches.size())];
        ImageTensor blended = digit;
        for (std::size_t c = 0; c < blended.channels(); ++c) {
            auto& dst = blended.plane(c).values();
            const auto& src = patch.plane(c).values();
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = std::abs(src[k] - dst[k]);
        }
        out.images.push_back(std::move(blended));
    }
    return out;
}

Dataset load_image_dir(const std::filesystem::path& dir_path, const std::filesystem::path& labels_file,
                       DomainTag domain) {
    std::ifstream manifest(labels_file);
    if (!manifest) throw DataError("cannot open manifest " + labels_file.string());
    Dataset data;
    data.domain = domain;
    data.name = dir_path.filename().string();
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(manifest, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        const std::string where = labels_file.string() + ":" + std::to_string(line_no);
        if (tab == std::string::npos) throw DataError(where + ": expected \"path<TAB>label\"");
        const std::string file = line.substr(0, tab);
        int label = 0;
        try {
            std::size_t used = 0;
            label = std::stoi(line.substr(tab + 1), &used);
            if (used != line.size() - tab - 1) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw DataError(where + ": bad label for " + file);
        }
        check_label(label, file);
        const auto path = dir_path / file;
        if (!std::filesystem::exists(path)) throw DataError("missing image file " + path.string());
        data.images.push_back(read_png(path));
        data.labels.push_back(label);
    }
    data.validate();
    return data;
}

void save_image_dir(const Dataset& data, const std::filesystem::path& dir_path) {
    data.validate();
    std::filesystem::create_directories(dir_path);
    std::ostringstream manifest;
    for (std::size_t i = 0; i < data.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "%06zu.png", i);
        write_png(dir_path / name, data.images[i]);
        manifest << name << '\t' << data.labels[i] << '\n';
    }
    write_text(dir_path / "labels.tsv", manifest.str());
}

Dataset subsample(const Dataset& data, std::size_t n_per_class, std::uint64_t seed) {
    data.validate();
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);
    bool short_class = by_class.empty() && n_per_class > 0;
    for (const auto& [label, members] : by_class) short_class |= members.size() < n_per_class;
    if (short_class) {
        std::ostringstream msg;
        msg << "subsample: need " << n_per_class << " per class, have";
        for (const auto& [label, members] : by_class) msg << ' ' << label << ':' << members.size();
        throw DataError(msg.str());
    }
    std::vector<std::size_t> chosen;
    for (auto& [label, members] : by_class) {
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(label)}));
        rng.shuffle(members.begin(), members.end());
        chosen.insert(chosen.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_per_class));
    }
    std::sort(chosen.begin(), chosen.end());
    Dataset out;
    out.domain = data.domain;
    out.name = data.name;
    for (const auto i : chosen) {
        out.images.push_back(data.images[i]);
        out.labels.push_back(data.labels[i]);
    }
    return out;
}

PatchBank procedural_patch_bank(std::size_t count, std::size_t height, std::size_t width, std::uint64_t seed) {
    constexpr int kTerms = 12;
    constexpr int kMaxFrequency = 8;
    PatchBank bank;
    bank.origin = "procedural(seed=" + std::to_string(seed) + ")";
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng(derive_seed(seed, {i}));
        ImageTensor patch(height, width, 3);
        for (std::size_t c = 0; c < 3; ++c) {
            auto& values = patch.plane(c).values();
            for (int t = 0; t < kTerms; ++t) {
                const int fx = static_cast<int>(rng.index(2 * kMaxFrequency + 1)) - kMaxFrequency;
                const int fy = static_cast<int>(rng.index(2 * kMaxFrequency + 1)) - kMaxFrequency;
                const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
                const double amp = rng.uniform() / std::max(1.0, std::hypot(fx, fy));
                for (std::size_t r = 0; r < height; ++r) {
                    for (std::size_t col = 0; col < width; ++col) {
                        const double arg = 2.0 * std::numbers::pi *
                                           (fx * static_cast<double>(col) / static_cast<double>(width) +
                                            fy * static_cast<double>(r) / static_cast<double>(height));
                        values[r * width + col] += amp * std::cos(arg + phase);
                    }
                }
            }
            const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
            const double lo_field = *mn;
            const double span = *mx - *mn;
            const double lo = rng.uniform(0.0, 0.6);
            const double hi = rng.uniform(lo + 0.2, 1.0);
            for (auto& v : values) {
                const double unit = span > 0.0 ? (v - lo_field) / span : 0.5;
                v = std::clamp(lo + (hi - lo) * unit, 0.0, 1.0);
            }
        }
        bank.patches.push_back(std::move(patch));
    }
    return bank;
}

PatchBank photo_patch_bank(const std::filesystem::path& photo_dir, std::size_t count, std::size_t height,
                           std::size_t width, std::uint64_t seed) {
    if (!std::filesystem::is_directory(photo_dir)) throw DataError("photo directory not found: " + photo_dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(photo_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<ImageTensor> photos;
    for (const auto& f : files) {
        auto photo = read_png(f);
        if (photo.height() < height || photo.width() < width) continue;
        if (photo.channels() == 1) photo = ImageTensor({photo.plane(0), photo.plane(0), photo.plane(0)});
        photos.push_back(std::move(photo));
    }
    if (photos.empty()) throw DataError("no usable PNG photos in " + photo_dir.string());
    PatchBank bank;
    bank.origin = "photos(" + photo_dir.string() + ")";
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng(derive_seed(seed, {i}));
        const auto& photo = photos[rng.index(photos.size())];
        const std::size_t top = rng.index(photo.height() - height + 1);
        const std::size_t left = rng.index(photo.width() - width + 1);
        ImageTensor patch(height, width, 3);
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t r = 0; r < height; ++r) {
                for (std::size_t col = 0; col < width; ++col) patch.at(c, r, col) = photo.at(c, top + r, left + col);
            }
        }
        bank.patches.push_back(std::move(patch));
    }
    return bank;
}

void export_patch_bank(const PatchBank& bank, const std::filesystem::path& dir_path) {
    Dataset as_data;
    as_data.images = bank.patches;
    as_data.labels.assign(bank.patches.size(), 0);
    as_data.name = bank.origin;
    save_image_dir(as_data, dir_path);
}

std::uint64_t label_checksum(const Dataset& data) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const int label : data.labels) {
        h ^= static_cast<std::uint64_t>(label) + 1;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace dda
