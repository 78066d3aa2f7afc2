#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dda/image.hpp"

namespace dda {

/// 3-channel background patches in [0,1] used by the target synthesizer.
struct PatchBank {
    std::vector<ImageTensor> patches;
    std::string origin;

    void validate() const;
};

struct IdxHeader {
    std::uint32_t magic = 0;
    std::vector<std::uint32_t> dims;
};

/// Big-endian IDX header (magic + dimension sizes).
IdxHeader read_idx_header(const std::filesystem::path& path);

/// MNIST-style IDX pair. Pixels map to [0,1] by /255; the two count fields
/// must agree.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 DomainTag domain = DomainTag::source);

/// Writes an IDX pair from a single-channel dataset in [0,1].
void save_idx(const Dataset& data, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path);

/// Replicates the single channel into three identical channels.
Dataset to_rgb(const Dataset& data);

/// Maps [0,1] pixel values to [-1,1] (x -> 2x - 1), the input range of the
/// transforms and the classifier.
Dataset to_signed_range(const Dataset& data);

/// Absolute-difference blend |patch - digit| with one uniformly drawn patch
/// per image. Labels are kept; the result is tagged as target domain.
Dataset synthesize_target(const Dataset& digits, const PatchBank& bank, std::uint64_t seed);

/// Loads "relative/path.png<TAB>label" manifest lines relative to dir_path.
Dataset load_image_dir(const std::filesystem::path& dir_path, const std::filesystem::path& labels_file,
                       DomainTag domain = DomainTag::target);

/// Writes images as PNG plus a "labels.tsv" manifest in the load_image_dir format.
void save_image_dir(const Dataset& data, const std::filesystem::path& dir_path);

/// Class-balanced subsample; selected images keep their original order.
Dataset subsample(const Dataset& data, std::size_t n_per_class, std::uint64_t seed);

/// Smooth seeded color fields: per channel a mixture of low-frequency
/// cosines with 1/|f| amplitude falloff, rescaled to a random [lo, hi].
PatchBank procedural_patch_bank(std::size_t count, std::size_t height, std::size_t width, std::uint64_t seed);

/// Random crops from the PNG photos in a directory.
PatchBank photo_patch_bank(const std::filesystem::path& photo_dir, std::size_t count, std::size_t height,
                           std::size_t width, std::uint64_t seed);

void export_patch_bank(const PatchBank& bank, const std::filesystem::path& dir_path);

/// Order-sensitive checksum of the label sequence.
std::uint64_t label_checksum(const Dataset& data) noexcept;

}  // namespace dda
