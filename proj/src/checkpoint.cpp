#include "dda/binary_io.hpp"
#include "dda/classifier.hpp"
#include "dda/file_util.hpp"

namespace dda {

namespace {

void put_tensor(binary::Writer& w, const std::vector<std::size_t>& shape, const std::vector<double>& data) {
    w.u32(static_cast<std::uint32_t>(shape.size()));
    for (const auto d : shape) w.u64(d);
    for (const double v : data) w.f64(v);
}

std::pair<std::vector<std::size_t>, std::vector<double>> get_tensor(binary::Reader& r) {
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) r.fail("bad tensor rank " + std::to_string(rank));
    std::vector<std::size_t> shape(rank);
    std::size_t count = 1;
    for (auto& d : shape) {
        d = r.u64();
        count *= d;
    }
    r.need(count * sizeof(double));
    std::vector<double> data(count);
    for (auto& v : data) v = r.f64();
    return {std::move(shape), std::move(data)};
}

}  // namespace

std::vector<unsigned char> encode_model(const ModelParams& model) {
    model.validate();
    binary::Writer w;
    w.bytes("DDAMODEL");
    w.u32(kModelVersion);
    w.u32(static_cast<std::uint32_t>(model.kind));
    w.u32(static_cast<std::uint32_t>(model.input.height));
    w.u32(static_cast<std::uint32_t>(model.input.width));
    w.u32(static_cast<std::uint32_t>(model.input.channels));
    w.u32(static_cast<std::uint32_t>(model.classes));
    w.u32(static_cast<std::uint32_t>(model.layers.size()));
    for (const auto& layer : model.layers) {
        w.u32(static_cast<std::uint32_t>(layer.name.size()));
        w.bytes(layer.name);
        put_tensor(w, layer.weight_shape, layer.weights);
        put_tensor(w, {layer.biases.size()}, layer.biases);
    }
    return std::move(w.data());
}

ModelParams decode_model(std::span<const unsigned char> bytes) {
    binary::Reader r(bytes, "model checkpoint");
    r.expect("DDAMODEL");
    if (const auto version = r.u32(); version != kModelVersion) r.fail("unsupported version " + std::to_string(version));
    const auto kind = r.u32();
    if (kind > static_cast<std::uint32_t>(ClassifierKind::tiny_cnn)) r.fail("unknown classifier kind");
    InputGeometry input;
    input.height = r.u32();
    input.width = r.u32();
    input.channels = r.u32();
    const std::size_t classes = r.u32();
    ModelParams model = make_model(static_cast<ClassifierKind>(kind), input, classes);
    const std::uint32_t layer_count = r.u32();
    if (layer_count != model.layers.size()) r.fail("layer count does not match architecture");
    for (auto& layer : model.layers) {
        const std::uint32_t name_len = r.u32();
        r.need(name_len);
        std::string name;
        for (std::uint32_t i = 0; i < name_len; ++i) name.push_back(static_cast<char>(r.scalar<unsigned char>()));
        if (name != layer.name) r.fail("expected layer '" + layer.name + "', found '" + name + "'");
        auto [wshape, weights] = get_tensor(r);
        if (wshape != layer.weight_shape) r.fail("weight shape mismatch in layer " + name);
        auto [bshape, biases] = get_tensor(r);
        if (bshape.size() != 1 || bshape[0] != layer.biases.size()) r.fail("bias shape mismatch in layer " + name);
        layer.weights = std::move(weights);
        layer.biases = std::move(biases);
    }
    if (!r.done()) r.fail("trailing bytes");
    return model;
}

void save_model(const std::filesystem::path& path, const ModelParams& model) { write_file(path, encode_model(model)); }

ModelParams load_model(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    try {
        return decode_model(bytes);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

}  // namespace dda
