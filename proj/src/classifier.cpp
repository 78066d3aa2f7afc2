#include "dda/classifier.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "dda/errors.hpp"
#include "dda/parallel.hpp"
#include "dda/rng.hpp"

namespace dda {

namespace {

constexpr std::size_t kKernel = 5;
constexpr std::size_t kConv1Filters = 8;
constexpr std::size_t kConv2Filters = 16;
constexpr std::size_t kHidden = 64;

// Stream tags for derive_seed.
constexpr std::uint64_t kTagInit = 1;
constexpr std::uint64_t kTagShuffle = 2;
constexpr std::uint64_t kTagDonor = 3;
constexpr std::uint64_t kTagPixel = 4;
constexpr std::uint64_t kTagAugment = 5;

struct CnnDims {
    std::size_t c0, h0, w0;  // input
    std::size_t h1, w1;      // conv1 output
    std::size_t q1, r1;      // pool1 output
    std::size_t h2, w2;      // conv2 output
    std::size_t q2, r2;      // pool2 output
    std::size_t flat;        // conv2 filters * q2 * r2
};

CnnDims cnn_dims(const InputGeometry& g) {
    CnnDims d{};
    d.c0 = g.channels;
    d.h0 = g.height;
    d.w0 = g.width;
    if (g.height < 16 || g.width < 16) {
        throw ConfigError("tiny_cnn needs inputs of at least 16x16, got " + std::to_string(g.height) + "x" +
                          std::to_string(g.width));
    }
    d.h1 = d.h0 - kKernel + 1;
    d.w1 = d.w0 - kKernel + 1;
    d.q1 = d.h1 / 2;
    d.r1 = d.w1 / 2;
    d.h2 = d.q1 - kKernel + 1;
    d.w2 = d.r1 - kKernel + 1;
    d.q2 = d.h2 / 2;
    d.r2 = d.w2 / 2;
    d.flat = kConv2Filters * d.q2 * d.r2;
    return d;
}

std::size_t product(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Layer make_layer(std::string name, std::vector<std::size_t> shape) {
    Layer l;
    l.name = std::move(name);
    l.weight_shape = std::move(shape);
    l.weights.assign(product(l.weight_shape), 0.0);
    l.biases.assign(l.weight_shape.front(), 0.0);
    return l;
}

std::vector<Layer> zeros_like(const std::vector<Layer>& layers) {
    std::vector<Layer> out = layers;
    for (auto& l : out) {
        std::fill(l.weights.begin(), l.weights.end(), 0.0);
        std::fill(l.biases.begin(), l.biases.end(), 0.0);
    }
    return out;
}

// out[o][y][x] = b[o] + sum_{c,ky,kx} w[o][c][ky][kx] * in[c][y+ky][x+kx]
void conv_forward(const double* in, std::size_t channels, std::size_t h, std::size_t w, const Layer& layer,
                  double* out) {
    const std::size_t filters = layer.weight_shape[0];
    const std::size_t oh = h - kKernel + 1;
    const std::size_t ow = w - kKernel + 1;
    for (std::size_t o = 0; o < filters; ++o) {
        double* dst = out + o * oh * ow;
        std::fill(dst, dst + oh * ow, layer.biases[o]);
        for (std::size_t c = 0; c < channels; ++c) {
            const double* src = in + c * h * w;
            const double* wk = layer.weights.data() + (o * channels + c) * kKernel * kKernel;
            for (std::size_t ky = 0; ky < kKernel; ++ky) {
                for (std::size_t kx = 0; kx < kKernel; ++kx) {
                    const double wv = wk[ky * kKernel + kx];
                    for (std::size_t y = 0; y < oh; ++y) {
                        const double* row = src + (y + ky) * w + kx;
                        double* drow = dst + y * ow;
                        for (std::size_t x = 0; x < ow; ++x) drow[x] += wv * row[x];
                    }
                }
            }
        }
    }
}

void conv_backward(const double* in, std::size_t channels, std::size_t h, std::size_t w, const Layer& layer,
                   const double* dout, Layer& grad, double* din) {
    const std::size_t filters = layer.weight_shape[0];
    const std::size_t oh = h - kKernel + 1;
    const std::size_t ow = w - kKernel + 1;
    for (std::size_t o = 0; o < filters; ++o) {
        const double* g = dout + o * oh * ow;
        double bias = 0.0;
        for (std::size_t i = 0; i < oh * ow; ++i) bias += g[i];
        grad.biases[o] += bias;
        for (std::size_t c = 0; c < channels; ++c) {
            const double* src = in + c * h * w;
            const double* wk = layer.weights.data() + (o * channels + c) * kKernel * kKernel;
            double* gk = grad.weights.data() + (o * channels + c) * kKernel * kKernel;
            double* dsrc = din ? din + c * h * w : nullptr;
            for (std::size_t ky = 0; ky < kKernel; ++ky) {
                for (std::size_t kx = 0; kx < kKernel; ++kx) {
                    double acc = 0.0;
                    const double wv = wk[ky * kKernel + kx];
                    for (std::size_t y = 0; y < oh; ++y) {
                        const double* row = src + (y + ky) * w + kx;
                        const double* grow = g + y * ow;
                        for (std::size_t x = 0; x < ow; ++x) acc += grow[x] * row[x];
                        if (dsrc) {
                            double* drow = dsrc + (y + ky) * w + kx;
                            for (std::size_t x = 0; x < ow; ++x) drow[x] += wv * grow[x];
                        }
                    }
                    gk[ky * kKernel + kx] += acc;
                }
            }
        }
    }
}

// 2x2 max pool, stride 2; trailing odd rows/cols are dropped. argmax holds
// the flat input index of each winner (first maximum on ties).
void maxpool_forward(const double* in, std::size_t channels, std::size_t h, std::size_t w, double* out,
                     std::size_t* argmax) {
    const std::size_t oh = h / 2;
    const std::size_t ow = w / 2;
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                std::size_t best = c * h * w + (2 * y) * w + 2 * x;
                for (std::size_t dy = 0; dy < 2; ++dy) {
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t idx = c * h * w + (2 * y + dy) * w + 2 * x + dx;
                        if (in[idx] > in[best]) best = idx;
                    }
                }
                const std::size_t o = (c * oh + y) * ow + x;
                out[o] = in[best];
                argmax[o] = best;
            }
        }
    }
}

void dense_forward(const Layer& layer, const double* in, double* out) {
    const std::size_t rows = layer.weight_shape[0];
    const std::size_t cols = layer.weight_shape[1];
    for (std::size_t o = 0; o < rows; ++o) {
        const double* wr = layer.weights.data() + o * cols;
        double s = layer.biases[o];
        for (std::size_t i = 0; i < cols; ++i) s += wr[i] * in[i];
        out[o] = s;
    }
}

void dense_backward(const Layer& layer, const double* in, const double* dout, Layer& grad, double* din) {
    const std::size_t rows = layer.weight_shape[0];
    const std::size_t cols = layer.weight_shape[1];
    for (std::size_t o = 0; o < rows; ++o) {
        const double g = dout[o];
        grad.biases[o] += g;
        double* gw = grad.weights.data() + o * cols;
        for (std::size_t i = 0; i < cols; ++i) gw[i] += g * in[i];
        if (din) {
            const double* wr = layer.weights.data() + o * cols;
            for (std::size_t i = 0; i < cols; ++i) din[i] += g * wr[i];
        }
    }
}

// Activations of one sample, kept for the backward pass.
struct Trace {
    std::vector<double> input;
    std::vector<double> z1, p1, z2, p2, z3, a3;
    std::vector<std::size_t> arg1, arg2;
    std::vector<double> logits;
};

void relu_inplace(std::vector<double>& v) {
    for (auto& x : v) x = std::max(x, 0.0);
}

void sample_forward(const ModelParams& m, const ImageTensor& image, Trace& t) {
    t.input = image.flatten();
    t.logits.assign(m.classes, 0.0);
    if (m.kind == ClassifierKind::logistic) {
        dense_forward(m.layers[0], t.input.data(), t.logits.data());
        return;
    }
    const CnnDims d = cnn_dims(m.input);
    t.z1.assign(kConv1Filters * d.h1 * d.w1, 0.0);
    conv_forward(t.input.data(), d.c0, d.h0, d.w0, m.layers[0], t.z1.data());
    t.p1.assign(kConv1Filters * d.q1 * d.r1, 0.0);
    t.arg1.assign(t.p1.size(), 0);
    maxpool_forward(t.z1.data(), kConv1Filters, d.h1, d.w1, t.p1.data(), t.arg1.data());
    relu_inplace(t.p1);  // ReLU after pooling; p1 now holds the activation
    t.z2.assign(kConv2Filters * d.h2 * d.w2, 0.0);
    conv_forward(t.p1.data(), kConv1Filters, d.q1, d.r1, m.layers[1], t.z2.data());
    t.p2.assign(d.flat, 0.0);
    t.arg2.assign(d.flat, 0);
    maxpool_forward(t.z2.data(), kConv2Filters, d.h2, d.w2, t.p2.data(), t.arg2.data());
    relu_inplace(t.p2);
    t.z3.assign(kHidden, 0.0);
    dense_forward(m.layers[2], t.p2.data(), t.z3.data());
    t.a3 = t.z3;
    relu_inplace(t.a3);
    dense_forward(m.layers[3], t.a3.data(), t.logits.data());
}

void sample_backward(const ModelParams& m, const Trace& t, const std::vector<double>& dlogits, Gradient& g) {
    if (m.kind == ClassifierKind::logistic) {
        dense_backward(m.layers[0], t.input.data(), dlogits.data(), g.layers[0], nullptr);
        return;
    }
    const CnnDims d = cnn_dims(m.input);
    std::vector<double> da3(kHidden, 0.0);
    dense_backward(m.layers[3], t.a3.data(), dlogits.data(), g.layers[3], da3.data());
    for (std::size_t i = 0; i < kHidden; ++i) {
        if (t.z3[i] <= 0.0) da3[i] = 0.0;
    }
    std::vector<double> dp2(d.flat, 0.0);
    dense_backward(m.layers[2], t.p2.data(), da3.data(), g.layers[2], dp2.data());
    std::vector<double> dz2(t.z2.size(), 0.0);
    for (std::size_t i = 0; i < d.flat; ++i) {
        if (t.p2[i] > 0.0) dz2[t.arg2[i]] += dp2[i];
    }
    std::vector<double> dp1(t.p1.size(), 0.0);
    conv_backward(t.p1.data(), kConv1Filters, d.q1, d.r1, m.layers[1], dz2.data(), g.layers[1], dp1.data());
    std::vector<double> dz1(t.z1.size(), 0.0);
    for (std::size_t i = 0; i < t.p1.size(); ++i) {
        if (t.p1[i] > 0.0) dz1[t.arg1[i]] += dp1[i];
    }
    conv_backward(t.input.data(), d.c0, d.h0, d.w0, m.layers[0], dz1.data(), g.layers[0], nullptr);
}

void check_batch(const ModelParams& m, std::span<const ImageTensor> batch) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& x = batch[i];
        if (x.height() != m.input.height || x.width() != m.input.width || x.channels() != m.input.channels) {
            std::ostringstream msg;
            msg << "batch image " << i << " is " << x.shape_string() << ", model expects " << m.input.height << "x"
                << m.input.width << "x" << m.input.channels;
            throw DataError(msg.str());
        }
    }
}

// Numerically stable log-softmax.
std::vector<double> log_softmax(const std::vector<double>& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (const double l : logits) sum += std::exp(l - mx);
    const double log_norm = mx + std::log(sum);
    std::vector<double> out(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) out[k] = logits[k] - log_norm;
    return out;
}

void add_into(Gradient& acc, const Gradient& g) {
    for (std::size_t l = 0; l < acc.layers.size(); ++l) {
        auto& a = acc.layers[l];
        const auto& b = g.layers[l];
        for (std::size_t i = 0; i < a.weights.size(); ++i) a.weights[i] += b.weights[i];
        for (std::size_t i = 0; i < a.biases.size(); ++i) a.biases[i] += b.biases[i];
    }
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string_view to_string(ClassifierKind kind) {
    return kind == ClassifierKind::logistic ? "logistic" : "tiny_cnn";
}

ClassifierKind parse_classifier(std::string_view text) {
    if (text == "logistic") return ClassifierKind::logistic;
    if (text == "tiny_cnn") return ClassifierKind::tiny_cnn;
    throw ConfigError("unknown classifier '" + std::string(text) + "' (expected logistic or tiny_cnn)");
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.biases.size();
    return n;
}

void ModelParams::validate() const {
    const ModelParams ref = make_model(kind, input, classes);
    if (layers.size() != ref.layers.size()) throw DataError("model: wrong layer count for architecture");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (layers[l].weight_shape != ref.layers[l].weight_shape ||
            layers[l].weights.size() != ref.layers[l].weights.size() ||
            layers[l].biases.size() != ref.layers[l].biases.size()) {
            throw DataError("model: layer " + layers[l].name + " has inconsistent shape");
        }
    }
}

ModelParams make_model(ClassifierKind kind, InputGeometry input, std::size_t classes) {
    if (input.height == 0 || input.width == 0 || input.channels == 0 || classes < 2) {
        throw ConfigError("model: invalid input geometry or class count");
    }
    ModelParams m;
    m.kind = kind;
    m.input = input;
    m.classes = classes;
    if (kind == ClassifierKind::logistic) {
        m.layers.push_back(make_layer("fc", {classes, input.height * input.width * input.channels}));
        return m;
    }
    const CnnDims d = cnn_dims(input);
    m.layers.push_back(make_layer("conv1", {kConv1Filters, input.channels, kKernel, kKernel}));
    m.layers.push_back(make_layer("conv2", {kConv2Filters, kConv1Filters, kKernel, kKernel}));
    m.layers.push_back(make_layer("fc1", {kHidden, d.flat}));
    m.layers.push_back(make_layer("fc2", {classes, kHidden}));
    return m;
}

ModelParams init_model(ClassifierKind kind, InputGeometry input, std::size_t classes, std::uint64_t seed) {
    ModelParams m = make_model(kind, input, classes);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        auto& layer = m.layers[l];
        const auto& s = layer.weight_shape;
        const std::size_t receptive = s.size() == 4 ? s[2] * s[3] : 1;
        const double fan_in = static_cast<double>(s[1] * receptive);
        const double fan_out = static_cast<double>(s[0] * receptive);
        const double a = std::sqrt(6.0 / (fan_in + fan_out));
        Rng rng(derive_seed(seed, {kTagInit, l}));
        for (auto& w : layer.weights) w = rng.uniform(-a, a);
    }
    return m;
}

Eigen::MatrixXd forward(const ModelParams& model, std::span<const ImageTensor> batch) {
    check_batch(model, batch);
    Eigen::MatrixXd probs(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(model.classes));
    parallel_for(batch.size(), [&](std::size_t i) {
        Trace t;
        sample_forward(model, batch[i], t);
        const auto logp = log_softmax(t.logits);
        for (std::size_t k = 0; k < model.classes; ++k) {
            probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = std::exp(logp[k]);
        }
    });
    return probs;
}

LossAndGrad loss_and_grad(const ModelParams& model, std::span<const ImageTensor> batch, std::span<const int> labels) {
    check_batch(model, batch);
    if (labels.size() != batch.size()) throw DataError("loss_and_grad: label count does not match batch size");
    if (batch.empty()) throw DataError("loss_and_grad: empty batch");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= model.classes) {
            throw DataError("loss_and_grad: label " + std::to_string(labels[i]) + " at batch index " +
                            std::to_string(i) + " out of range");
        }
    }
    const std::size_t n = batch.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<Gradient> per_sample(n);
    std::vector<double> losses(n);
    LossAndGrad out;
    out.probabilities.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(model.classes));

    parallel_for(n, [&](std::size_t i) {
        Trace t;
        sample_forward(model, batch[i], t);
        const auto logp = log_softmax(t.logits);
        const auto y = static_cast<std::size_t>(labels[i]);
        losses[i] = -logp[y];
        std::vector<double> dlogits(model.classes);
        for (std::size_t k = 0; k < model.classes; ++k) {
            const double p = std::exp(logp[k]);
            out.probabilities(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = p;
            dlogits[k] = (p - (k == y ? 1.0 : 0.0)) * inv_n;
        }
        per_sample[i].layers = zeros_like(model.layers);
        sample_backward(model, t, dlogits, per_sample[i]);
    });

    // fixed reduction order keeps results independent of the thread count
    out.grad.layers = zeros_like(model.layers);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        add_into(out.grad, per_sample[i]);
        loss += losses[i];
    }
    out.loss = loss * inv_n;
    return out;
}

OptimState make_optim_state(const ModelParams& model, double learning_rate) {
    OptimState s;
    s.first_moment = zeros_like(model.layers);
    s.second_moment = zeros_like(model.layers);
    s.learning_rate = learning_rate;
    return s;
}

void adam_step(ModelParams& model, const Gradient& grad, OptimState& state) {
    if (grad.layers.size() != model.layers.size() || state.first_moment.size() != model.layers.size()) {
        throw DataError("adam_step: gradient/state do not match the model");
    }
    for (std::size_t l = 0; l < grad.layers.size(); ++l) {
        const auto& g = grad.layers[l];
        if (g.weights.size() != model.layers[l].weights.size() || g.biases.size() != model.layers[l].biases.size()) {
            throw DataError("adam_step: gradient shape mismatch in layer " + model.layers[l].name);
        }
        const auto finite = [](double v) { return std::isfinite(v); };
        if (!std::all_of(g.weights.begin(), g.weights.end(), finite) ||
            !std::all_of(g.biases.begin(), g.biases.end(), finite)) {
            throw DataError("adam_step: non-finite gradient in layer " + model.layers[l].name);
        }
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(state.beta1, t);
    const double correction2 = 1.0 - std::pow(state.beta2, t);
    auto update = [&](std::vector<double>& param, const std::vector<double>& g, std::vector<double>& m,
                      std::vector<double>& v) {
        for (std::size_t i = 0; i < param.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            param[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    };
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        update(model.layers[l].weights, grad.layers[l].weights, state.first_moment[l].weights,
               state.second_moment[l].weights);
        update(model.layers[l].biases, grad.layers[l].biases, state.first_moment[l].biases,
               state.second_moment[l].biases);
    }
}

ImageTensor reverse_polarity(const ImageTensor& image) {
    ImageTensor out = image;
    for (std::size_t c = 0; c < out.channels(); ++c) {
        for (auto& v : out.plane(c).values()) v = -v;
    }
    return out;
}

ImageTensor permute_channels(const ImageTensor& image, std::span<const std::size_t> order) {
    if (order.size() != image.channels()) throw DataError("permute_channels: order has wrong length");
    std::vector<Plane> planes;
    planes.reserve(order.size());
    for (const auto c : order) {
        if (c >= image.channels()) throw DataError("permute_channels: channel index out of range");
        planes.push_back(image.plane(c));
    }
    return ImageTensor(std::move(planes));
}

std::vector<ImageTensor> augment(std::span<const ImageTensor> batch, std::uint64_t seed) {
    std::vector<ImageTensor> out;
    out.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Rng rng(derive_seed(seed, {i}));
        const bool flip = rng.coin();
        const bool shuffle = rng.coin();
        ImageTensor x = flip ? reverse_polarity(batch[i]) : batch[i];
        if (shuffle) {
            std::vector<std::size_t> order(x.channels());
            std::iota(order.begin(), order.end(), std::size_t{0});
            rng.shuffle(order.begin(), order.end());
            x = permute_channels(x, order);
        }
        out.push_back(std::move(x));
    }
    return out;
}

std::string TrainReport::to_csv() const {
    std::ostringstream csv;
    csv << "epoch,train_loss,train_acc";
    for (const auto& name : eval_names) csv << ',' << name << "_acc";
    csv << ",dropped\n";
    for (const auto& row : epochs) {
        csv << row.epoch << ',' << format_double(row.train_loss) << ',' << format_double(row.train_acc);
        for (const double a : row.eval_acc) csv << ',' << format_double(a);
        csv << ',' << row.dropped << '\n';
    }
    return csv.str();
}

std::vector<ImageTensor> prepare_eval_inputs(const EvalSet& set, const TransformConfig& cfg) {
    if (set.data == nullptr) throw DataError("eval set '" + set.name + "' has no data");
    if (set.mode == EvalMode::raw) return set.data->images;
    if (set.other_stats == nullptr) {
        throw DataError("eval set '" + set.name + "': dda_target mode requires the other domain's statistics");
    }
    if (set.other_stats->domain == set.data->domain) {
        throw DataError("eval set '" + set.name + "': statistics come from the " +
                        std::string(to_string(set.other_stats->domain)) + " domain, same as the data");
    }
    if (set.mean_pixel.empty()) throw DataError("eval set '" + set.name + "': dda_target mode requires a mean pixel");
    std::vector<ImageTensor> inputs(set.data->size());
    TransformConfig tcfg = cfg;
    tcfg.renormalize = true;
    parallel_for(inputs.size(), [&](std::size_t i) {
        try {
            inputs[i] = transform_target(set.data->images[i], set.mean_pixel, *set.other_stats, tcfg);
        } catch (const DataError& e) {
            throw DataError("eval set '" + set.name + "' image " + std::to_string(i) + ": " + e.what());
        }
    });
    return inputs;
}

std::vector<int> predict(const ModelParams& model, std::span<const ImageTensor> inputs) {
    const Eigen::MatrixXd probs = forward(model, inputs);
    std::vector<int> out(inputs.size());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        Eigen::Index best = 0;
        probs.row(i).maxCoeff(&best);
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

namespace {

double accuracy(const ModelParams& model, std::span<const ImageTensor> inputs, std::span<const int> labels) {
    if (inputs.empty()) return 0.0;
    const auto pred = predict(model, inputs);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace

double evaluate(const ModelParams& model, const EvalSet& set, const TransformConfig& cfg) {
    const auto inputs = prepare_eval_inputs(set, cfg);
    return accuracy(model, inputs, set.data->labels);
}

TrainResult train(const Dataset& source, const DomainStats* target_stats, const TrainConfig& cfg,
                  std::span<const EvalSet> evals) {
    source.validate();
    if (source.empty()) throw DataError("train: empty source dataset");
    if (source.domain != DomainTag::source) throw DataError("train: dataset '" + source.name + "' is not source-tagged");
    if (cfg.batch_size == 0 || cfg.epochs == 0) throw ConfigError("train: epochs and batch size must be positive");
    const auto& first = source.images.front();
    if (cfg.use_dda) {
        if (target_stats == nullptr) throw DataError("train: DDA enabled but no target statistics given");
        if (target_stats->domain != DomainTag::target) {
            throw DataError("train: DDA needs target-domain statistics, got source-domain statistics");
        }
        if (!target_stats->mean_autocorr.same_geometry(first)) {
            throw DataError("train: statistics geometry " + target_stats->mean_autocorr.shape_string() +
                            " does not match source images " + first.shape_string());
        }
        cfg.transform.validate();
    }

    const InputGeometry geometry{first.height(), first.width(), first.channels()};
    TrainResult result{init_model(cfg.kind, geometry, 10, cfg.seed), {}};
    OptimState optim = make_optim_state(result.model, cfg.learning_rate);

    std::vector<std::vector<ImageTensor>> eval_inputs;
    for (const auto& set : evals) {
        result.report.eval_names.push_back(set.name);
        eval_inputs.push_back(prepare_eval_inputs(set, cfg.transform));
    }

    const std::size_t n = source.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        Rng shuffler(derive_seed(cfg.seed, {kTagShuffle, epoch}));
        shuffler.shuffle(order.begin(), order.end());

        double loss_sum = 0.0;
        std::size_t hits = 0;
        std::size_t seen = 0;
        std::size_t dropped = 0;
        for (std::size_t start = 0, batch_no = 0; start < n; start += cfg.batch_size, ++batch_no) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            const std::size_t count = stop - start;
            std::vector<ImageTensor> inputs(count);
            std::vector<char> keep(count, 1);
            parallel_for(count, [&](std::size_t k) {
                const std::size_t i = order[start + k];
                if (!cfg.use_dda) {
                    inputs[k] = source.images[i];
                    return;
                }
                Rng donor_rng(derive_seed(cfg.seed, {kTagDonor, epoch, i}));
                std::size_t donor = i;
                if (n > 1) {
                    donor = donor_rng.index(n - 1);
                    if (donor >= i) ++donor;
                }
                TransformConfig tcfg = cfg.transform;
                tcfg.seed = derive_seed(cfg.seed, {kTagPixel, epoch, i});
                try {
                    inputs[k] = transform_source(source.images[i], source.images[donor], *target_stats, tcfg);
                } catch (const DegenerateImageError&) {
                    keep[k] = 0;
                }
            });
            std::vector<ImageTensor> batch;
            std::vector<int> labels;
            for (std::size_t k = 0; k < count; ++k) {
                if (keep[k]) {
                    batch.push_back(std::move(inputs[k]));
                    labels.push_back(source.labels[order[start + k]]);
                } else {
                    ++dropped;
                }
            }
            if (batch.empty()) continue;
            if (cfg.augment) batch = augment(batch, derive_seed(cfg.seed, {kTagAugment, epoch, batch_no}));

            LossAndGrad lg = loss_and_grad(result.model, batch, labels);
            if (!std::isfinite(lg.loss)) {
                throw DataError("train: non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                                std::to_string(batch_no));
            }
            try {
                adam_step(result.model, lg.grad, optim);
            } catch (const DataError& e) {
                throw DataError("train: epoch " + std::to_string(epoch + 1) + ", batch " + std::to_string(batch_no) +
                                ": " + e.what());
            }
            loss_sum += lg.loss * static_cast<double>(batch.size());
            for (Eigen::Index r = 0; r < lg.probabilities.rows(); ++r) {
                Eigen::Index best = 0;
                lg.probabilities.row(r).maxCoeff(&best);
                hits += best == labels[static_cast<std::size_t>(r)] ? 1 : 0;
            }
            seen += batch.size();
        }
        if (static_cast<double>(dropped) > cfg.max_drop_fraction * static_cast<double>(n)) {
            throw DataError("train: " + std::to_string(dropped) + " of " + std::to_string(n) +
                            " samples produced degenerate transforms in epoch " + std::to_string(epoch + 1));
        }

        EpochRow row;
        row.epoch = epoch + 1;
        row.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
        row.train_acc = seen ? static_cast<double>(hits) / static_cast<double>(seen) : 0.0;
        row.dropped = dropped;
        for (std::size_t e = 0; e < evals.size(); ++e) {
            row.eval_acc.push_back(accuracy(result.model, eval_inputs[e], evals[e].data->labels));
        }
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        result.report.epochs.push_back(std::move(row));
    }
    return result;
}

}  // namespace dda
