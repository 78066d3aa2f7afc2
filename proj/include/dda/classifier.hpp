#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dda/image.hpp"
#include "dda/transform.hpp"

namespace dda {

enum class ClassifierKind : std::uint32_t { logistic = 0, tiny_cnn = 1 };

std::string_view to_string(ClassifierKind kind);
ClassifierKind parse_classifier(std::string_view text);

struct InputGeometry {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;

    friend bool operator==(const InputGeometry&, const InputGeometry&) = default;
};

/// One trainable layer. Conv weights are [out][in][k][k], dense weights [out][in].
struct Layer {
    std::string name;
    std::vector<std::size_t> weight_shape;
    std::vector<double> weights;
    std::vector<double> biases;

    friend bool operator==(const Layer&, const Layer&) = default;
};

/// tiny_cnn: conv(8,5x5) -> maxpool2 -> ReLU -> conv(16,5x5) -> maxpool2 ->
/// ReLU -> FC(64) -> ReLU -> FC(K) -> softmax. Valid convolutions, stride 1.
/// logistic: FC(K) on the flattened input -> softmax.
struct ModelParams {
    ClassifierKind kind = ClassifierKind::tiny_cnn;
    InputGeometry input;
    std::size_t classes = 10;
    std::vector<Layer> layers;

    [[nodiscard]] std::size_t parameter_count() const;
    void validate() const;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Layer list of the architecture with all parameters zero.
ModelParams make_model(ClassifierKind kind, InputGeometry input, std::size_t classes = 10);

/// Weights uniform in [-a, a], a = sqrt(6 / (fan_in + fan_out)); biases zero.
ModelParams init_model(ClassifierKind kind, InputGeometry input, std::size_t classes, std::uint64_t seed);

/// Same layer structure as the model it was computed for.
struct Gradient {
    std::vector<Layer> layers;
};

/// Row i holds the class probabilities of batch[i].
Eigen::MatrixXd forward(const ModelParams& model, std::span<const ImageTensor> batch);

struct LossAndGrad {
    double loss = 0.0;  ///< mean cross-entropy
    Gradient grad;
    Eigen::MatrixXd probabilities;
};

LossAndGrad loss_and_grad(const ModelParams& model, std::span<const ImageTensor> batch, std::span<const int> labels);

struct OptimState {
    std::vector<Layer> first_moment;
    std::vector<Layer> second_moment;
    std::uint64_t step = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

OptimState make_optim_state(const ModelParams& model, double learning_rate = 1e-3);

/// Bias-corrected Adam update in place. Throws DataError on a non-finite
/// gradient without touching the model or state.
void adam_step(ModelParams& model, const Gradient& grad, OptimState& state);

ImageTensor reverse_polarity(const ImageTensor& image);
ImageTensor permute_channels(const ImageTensor& image, std::span<const std::size_t> order);

/// Per image (stream derived from seed and batch position): with p = 0.5
/// reverse polarity, with p = 0.5 apply a uniformly random channel permutation.
std::vector<ImageTensor> augment(std::span<const ImageTensor> batch, std::uint64_t seed);

enum class EvalMode { raw, dda_target };

/// Evaluation input: raw, or transformed with the dataset's own mean random
/// pixel and the other domain's statistics.
struct EvalSet {
    std::string name;
    const Dataset* data = nullptr;
    EvalMode mode = EvalMode::raw;
    const DomainStats* other_stats = nullptr;
    std::vector<double> mean_pixel;
};

struct TrainConfig {
    ClassifierKind kind = ClassifierKind::tiny_cnn;
    std::size_t epochs = 15;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    bool use_dda = true;
    bool augment = true;
    TransformConfig transform;
    double max_drop_fraction = 0.01;
};

struct EpochRow {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    std::vector<double> eval_acc;
    std::size_t dropped = 0;
    double seconds = 0.0;
};

struct TrainReport {
    std::vector<std::string> eval_names;
    std::vector<EpochRow> epochs;

    /// epoch,train_loss,train_acc,<eval>_acc...,dropped (wall-clock excluded
    /// so the file is reproducible).
    [[nodiscard]] std::string to_csv() const;
};

struct TrainResult {
    ModelParams model;
    TrainReport report;
};

/// Seeded epoch loop over the source set. With cfg.use_dda each sample is
/// transformed on the fly (fresh donor image and pixel per epoch); target_stats
/// is never read otherwise and may be null.
TrainResult train(const Dataset& source, const DomainStats* target_stats, const TrainConfig& cfg,
                  std::span<const EvalSet> evals = {});

/// Inputs as the model sees them for one evaluation set.
std::vector<ImageTensor> prepare_eval_inputs(const EvalSet& set, const TransformConfig& cfg);

std::vector<int> predict(const ModelParams& model, std::span<const ImageTensor> inputs);

double evaluate(const ModelParams& model, const EvalSet& set, const TransformConfig& cfg = {});

// Checkpoint: "DDAMODEL", u32 version, u32 kind, u32 height, width, channels,
// classes, layer count; per layer u32 name length + bytes, then weight and
// bias tensors as u32 rank, u64 dims, f64 data. Little-endian.
inline constexpr std::uint32_t kModelVersion = 1;

std::vector<unsigned char> encode_model(const ModelParams& model);
ModelParams decode_model(std::span<const unsigned char> bytes);
void save_model(const std::filesystem::path& path, const ModelParams& model);
ModelParams load_model(const std::filesystem::path& path);

}  // namespace dda
