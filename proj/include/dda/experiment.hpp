#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "dda/classifier.hpp"
#include "dda/datasets.hpp"
#include "dda/diagnostics.hpp"
#include "dda/transform.hpp"

namespace dda {

/// Plain-text key=value experiment description. Relative paths resolve
/// against the config file's directory.
struct ExperimentConfig {
    std::filesystem::path source_train_images;
    std::filesystem::path source_train_labels;
    std::filesystem::path source_test_images;
    std::filesystem::path source_test_labels;

    std::string target = "synth";  ///< "synth" or "dir"
    std::filesystem::path target_train_dir;
    std::filesystem::path target_train_manifest;
    std::filesystem::path target_test_dir;
    std::filesystem::path target_test_manifest;
    std::string patch_bank = "procedural";  ///< "procedural" or a photo directory
    std::size_t patch_count = 500;

    std::size_t train_per_class = 200;  ///< 0 keeps every image
    std::size_t test_per_class = 50;

    ClassifierKind classifier = ClassifierKind::tiny_cnn;
    std::size_t epochs = 15;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    bool augment = true;
    bool use_dda = true;
    TransformConfig transform;

    std::optional<std::uint64_t> seed;
    std::size_t pca_cap = 2000;
    std::filesystem::path out_dir = "out";

    double min_target_gain = 0.15;
    double max_source_gap = 0.05;

    /// Sets one key; throws ConfigError for unknown keys or bad values.
    void set(std::string_view key, std::string_view value, const std::filesystem::path& base_dir = {});

    /// 100 epochs, batch 128, no subsampling.
    void apply_full_scale();

    /// Seed present, referenced paths exist.
    void validate() const;

    [[nodiscard]] std::uint64_t require_seed() const;
};

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Source and target partitions as the classifier sees them: 3 channels,
/// values in [-1, 1]. Targets never carry labels into training.
struct PreparedData {
    Dataset source_train;
    Dataset source_test;
    Dataset target_train;
    Dataset target_test;
};

PreparedData prepare_data(const ExperimentConfig& cfg);

struct StatsPair {
    DomainStats source;
    DomainStats target;
};

StatsPair compute_stats(const PreparedData& data, std::uint64_t seed);

std::filesystem::path source_stats_path(const std::filesystem::path& out_dir);
std::filesystem::path target_stats_path(const std::filesystem::path& out_dir);

/// Training-side transform over a dataset, one random donor per image.
/// Degenerate outputs are skipped; the result keeps labels aligned.
Dataset transform_source_dataset(const Dataset& data, const DomainStats& target_stats, const TransformConfig& cfg,
                                 std::uint64_t seed);

/// Inference-side transform over a dataset (own mean pixel, other domain's stats).
Dataset transform_inference_dataset(const Dataset& data, std::span<const double> mean_pixel,
                                    const DomainStats& other_stats, const TransformConfig& cfg);

struct PcaOutcome {
    ProjectionTable table;
    double gap = 0.0;
};

/// PCA fit on the union of both sets (each capped at cap images by a
/// seeded class-agnostic subsample), projected and scored.
PcaOutcome pca_union(const Dataset& source, const Dataset& target, std::size_t cap, std::uint64_t seed);

struct RunSummary {
    double baseline_source_acc = 0.0;
    double baseline_target_acc = 0.0;
    std::optional<double> dda_source_acc;
    std::optional<double> dda_target_acc;
    double gap_before = 0.0;
    std::optional<double> gap_after;
    double baseline_seconds = 0.0;
    double dda_seconds = 0.0;

    [[nodiscard]] std::string to_csv(std::uint64_t seed) const;
    /// Empty when all margins hold; otherwise one line per failed margin.
    [[nodiscard]] std::vector<std::string> margin_failures(const ExperimentConfig& cfg) const;
};

/// Writes the stats caches and returns them.
StatsPair cmd_stats(const ExperimentConfig& cfg, std::ostream& log);

/// Baseline (and, unless disabled, DDA) training plus evaluation and PCA.
RunSummary cmd_run(const ExperimentConfig& cfg, std::ostream& log);

struct TransformInputs {
    std::optional<Dataset> explicit_inputs;  ///< otherwise both test partitions
    std::size_t count = 10;
};

/// Writes composite and per-channel PNGs. In paired mode also writes
/// pairs.csv with the raw and transformed correlation of each pair.
void cmd_transform(const ExperimentConfig& cfg, const TransformInputs& inputs, std::ostream& log);

/// PCA scatter before/after DDA; returns (gap_before, gap_after).
std::pair<double, double> cmd_pca(const ExperimentConfig& cfg, std::ostream& log);

/// Exports the patch bank and synthesized target partitions as PNG + manifest.
void cmd_synth(const ExperimentConfig& cfg, std::ostream& log);

void cmd_idx_info(const std::filesystem::path& path, std::ostream& log);

/// Pearson correlation of two flattened images of equal geometry.
double pixel_correlation(const ImageTensor& a, const ImageTensor& b);

/// Exclusive lock on an output directory for the lifetime of the object.
class OutputLock {
public:
    explicit OutputLock(const std::filesystem::path& out_dir);
    ~OutputLock();
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    std::filesystem::path path_;
};

}  // namespace dda
