#include "dda/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

#include "dda/errors.hpp"
#include "dda/file_util.hpp"
#include "dda/png_io.hpp"
#include "dda/rng.hpp"

namespace dda {
namespace fs = std::filesystem;

namespace {

// Seed purposes, fed to derive_seed(seed, {purpose}).
constexpr std::uint64_t kSeedSourceTrain = 10;
constexpr std::uint64_t kSeedSourceTest = 11;
constexpr std::uint64_t kSeedTargetDigits = 12;
constexpr std::uint64_t kSeedPatchBank = 13;
constexpr std::uint64_t kSeedSynthTrain = 14;
constexpr std::uint64_t kSeedSynthTest = 15;
constexpr std::uint64_t kSeedTargetTrainSub = 16;
constexpr std::uint64_t kSeedTargetTestSub = 17;
constexpr std::uint64_t kSeedStatsSource = 20;
constexpr std::uint64_t kSeedStatsTarget = 21;
constexpr std::uint64_t kSeedTrain = 30;
constexpr std::uint64_t kSeedPca = 40;
constexpr std::uint64_t kSeedPcaTransform = 41;

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
    T out{};
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc{} || ptr != end) {
        throw ConfigError("config: " + std::string(key) + " expects a number, got '" + std::string(value) + "'");
    }
    return out;
}

double parse_double(std::string_view key, std::string_view value) {
    const std::string text(value);
    char* end = nullptr;
    const double out = std::strtod(text.c_str(), &end);
    if (text.empty() || end != text.c_str() + text.size() || !std::isfinite(out)) {
        throw ConfigError("config: " + std::string(key) + " expects a real number, got '" + text + "'");
    }
    return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    throw ConfigError("config: " + std::string(key) + " expects true/false, got '" + std::string(value) + "'");
}

fs::path resolve(const fs::path& base, std::string_view value) {
    fs::path p{std::string(value)};
    if (p.is_relative() && !base.empty()) p = base / p;
    return p;
}

void require_path(const fs::path& p, const char* key) {
    if (p.empty()) throw ConfigError(std::string("config: ") + key + " is not set");
    if (!fs::exists(p)) throw DataError(std::string("config: ") + key + " does not exist: " + p.string());
}

Dataset maybe_subsample(const Dataset& data, std::size_t per_class, std::uint64_t seed) {
    if (per_class == 0) return data;
    return subsample(data, per_class, seed);
}

Dataset retag(Dataset data, DomainTag tag, std::string name) {
    data.domain = tag;
    data.name = std::move(name);
    return data;
}

double elapsed_seconds(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Class-agnostic seeded cap; selected images keep their order.
Dataset cap_dataset(const Dataset& data, std::size_t cap, std::uint64_t seed) {
    if (cap == 0 || data.size() <= cap) return data;
    std::vector<std::size_t> idx(data.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(seed);
    rng.shuffle(idx.begin(), idx.end());
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
    Dataset out;
    out.domain = data.domain;
    out.name = data.name;
    for (const auto i : idx) {
        out.images.push_back(data.images[i]);
        out.labels.push_back(data.labels[i]);
    }
    return out;
}

void check_stats_geometry(const DomainStats& stats, const Dataset& data, const char* what) {
    if (data.empty()) return;
    const auto& img = data.images.front();
    if (!stats.mean_autocorr.same_geometry(img)) {
        throw DataError(std::string(what) + ": stats cache geometry " + stats.mean_autocorr.shape_string() +
                        " does not match input geometry " + img.shape_string());
    }
}

// Three channels side by side, 2-pixel gap, single-channel output.
ImageTensor channel_strip(const ImageTensor& img) {
    constexpr std::size_t gap = 2;
    const std::size_t h = img.height();
    const std::size_t w = img.width();
    const std::size_t c = img.channels();
    Plane strip(h, c * w + (c - 1) * gap, std::vector<double>(h * (c * w + (c - 1) * gap), -1.0));
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t col = 0; col < w; ++col) strip.at(r, ch * (w + gap) + col) = img.at(ch, r, col);
    return ImageTensor(std::vector<Plane>{std::move(strip)});
}

void write_visuals(const fs::path& dir, std::size_t index, const ImageTensor& img) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "%06zu", index);
    write_png(dir / (std::string(stem) + "_composite.png"), img, -1.0, 1.0);
    write_png(dir / (std::string(stem) + "_channels.png"), channel_strip(img), -1.0, 1.0);
}

}  // namespace

void ExperimentConfig::set(std::string_view key, std::string_view value, const fs::path& base_dir) {
    if (key == "source_train_images") source_train_images = resolve(base_dir, value);
    else if (key == "source_train_labels") source_train_labels = resolve(base_dir, value);
    else if (key == "source_test_images") source_test_images = resolve(base_dir, value);
    else if (key == "source_test_labels") source_test_labels = resolve(base_dir, value);
    else if (key == "target") {
        if (value != "synth" && value != "dir") throw ConfigError("config: target must be synth or dir");
        target = std::string(value);
    } else if (key == "target_train_dir") target_train_dir = resolve(base_dir, value);
    else if (key == "target_train_manifest") target_train_manifest = resolve(base_dir, value);
    else if (key == "target_test_dir") target_test_dir = resolve(base_dir, value);
    else if (key == "target_test_manifest") target_test_manifest = resolve(base_dir, value);
    else if (key == "patch_bank") patch_bank = value == "procedural" ? std::string(value) : resolve(base_dir, value).string();
    else if (key == "patch_count") patch_count = parse_number<std::size_t>(key, value);
    else if (key == "train_per_class") train_per_class = parse_number<std::size_t>(key, value);
    else if (key == "test_per_class") test_per_class = parse_number<std::size_t>(key, value);
    else if (key == "classifier") {
        try {
            classifier = parse_classifier(value);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
    } else if (key == "epochs") epochs = parse_number<std::size_t>(key, value);
    else if (key == "batch_size") batch_size = parse_number<std::size_t>(key, value);
    else if (key == "learning_rate") learning_rate = parse_double(key, value);
    else if (key == "augment") augment = parse_bool(key, value);
    else if (key == "use_dda") use_dda = parse_bool(key, value);
    else if (key == "pixels_per_draw") transform.pixels_per_draw = parse_number<std::size_t>(key, value);
    else if (key == "renormalize") transform.renormalize = parse_bool(key, value);
    else if (key == "center_kernels") transform.center_kernels = parse_bool(key, value);
    else if (key == "swap_convolution_operands") transform.swap_convolution_operands = parse_bool(key, value);
    else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
    else if (key == "pca_cap") pca_cap = parse_number<std::size_t>(key, value);
    else if (key == "out_dir") out_dir = resolve(base_dir, value);
    else if (key == "min_target_gain") min_target_gain = parse_double(key, value);
    else if (key == "max_source_gap") max_source_gap = parse_double(key, value);
    else throw ConfigError("config: unknown key '" + std::string(key) + "'");
}

void ExperimentConfig::apply_full_scale() {
    epochs = 100;
    batch_size = 128;
    train_per_class = 0;
    test_per_class = 0;
}

std::uint64_t ExperimentConfig::require_seed() const {
    if (!seed) throw ConfigError("config: seed is mandatory (set seed= or pass --seed)");
    return *seed;
}

void ExperimentConfig::validate() const {
    (void)require_seed();
    if (epochs == 0) throw ConfigError("config: epochs must be positive");
    if (batch_size == 0) throw ConfigError("config: batch_size must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("config: learning_rate must be positive");
    try {
        transform.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    require_path(source_train_images, "source_train_images");
    require_path(source_train_labels, "source_train_labels");
    require_path(source_test_images, "source_test_images");
    require_path(source_test_labels, "source_test_labels");
    if (target == "dir") {
        require_path(target_train_dir, "target_train_dir");
        require_path(target_train_manifest, "target_train_manifest");
        require_path(target_test_dir, "target_test_dir");
        require_path(target_test_manifest, "target_test_manifest");
    } else if (patch_bank != "procedural") {
        require_path(patch_bank, "patch_bank");
    }
    if (out_dir.empty()) throw ConfigError("config: out_dir is empty");
}

ExperimentConfig parse_config(std::string_view text, const fs::path& base_dir) {
    ExperimentConfig cfg;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        auto line = raw.substr(0, raw.find('#'));
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
        }
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        try {
            cfg.set(key, value, base_dir);
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path());
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
    const auto seed = cfg.require_seed();
    const Dataset mnist_train = load_idx(cfg.source_train_images, cfg.source_train_labels);
    const Dataset mnist_test = load_idx(cfg.source_test_images, cfg.source_test_labels);

    const Dataset src_train = maybe_subsample(mnist_train, cfg.train_per_class, derive_seed(seed, {kSeedSourceTrain}));
    const Dataset src_test = maybe_subsample(mnist_test, cfg.test_per_class, derive_seed(seed, {kSeedSourceTest}));

    PreparedData out;
    out.source_train = retag(to_signed_range(to_rgb(src_train)), DomainTag::source, "source_train");
    out.source_test = retag(to_signed_range(to_rgb(src_test)), DomainTag::source, "source_test");

    if (cfg.target == "dir") {
        const Dataset tt = load_image_dir(cfg.target_train_dir, cfg.target_train_manifest);
        const Dataset te = load_image_dir(cfg.target_test_dir, cfg.target_test_manifest);
        out.target_train = retag(to_signed_range(maybe_subsample(tt, cfg.train_per_class,
                                                                 derive_seed(seed, {kSeedTargetTrainSub}))),
                                 DomainTag::target, "target_train");
        out.target_test = retag(to_signed_range(maybe_subsample(te, cfg.test_per_class,
                                                                derive_seed(seed, {kSeedTargetTestSub}))),
                                DomainTag::target, "target_test");
    } else {
        const std::size_t h = mnist_train.images.front().height();
        const std::size_t w = mnist_train.images.front().width();
        const PatchBank bank =
            cfg.patch_bank == "procedural"
                ? procedural_patch_bank(cfg.patch_count, h, w, derive_seed(seed, {kSeedPatchBank}))
                : photo_patch_bank(cfg.patch_bank, cfg.patch_count, h, w, derive_seed(seed, {kSeedPatchBank}));
        // Target training digits come from a separate draw so the two
        // training sets are not pixel-paired.
        const Dataset digits = maybe_subsample(mnist_train, cfg.train_per_class, derive_seed(seed, {kSeedTargetDigits}));
        out.target_train = retag(to_signed_range(synthesize_target(to_rgb(digits), bank, derive_seed(seed, {kSeedSynthTrain}))),
                                 DomainTag::target, "target_train");
        // Test targets are paired with the source test digits.
        out.target_test = retag(to_signed_range(synthesize_target(to_rgb(src_test), bank, derive_seed(seed, {kSeedSynthTest}))),
                                DomainTag::target, "target_test");
    }
    if (!out.source_train.images.front().same_geometry(out.target_train.images.front())) {
        throw DataError("source geometry " + out.source_train.images.front().shape_string() +
                        " differs from target geometry " + out.target_train.images.front().shape_string());
    }
    return out;
}

StatsPair compute_stats(const PreparedData& data, std::uint64_t seed) {
    StatsPair out;
    out.source = compute_domain_stats(data.source_train, derive_seed(seed, {kSeedStatsSource}));
    out.target = compute_domain_stats(data.target_train, derive_seed(seed, {kSeedStatsTarget}));
    return out;
}

fs::path source_stats_path(const fs::path& out_dir) { return out_dir / "source_stats.bin"; }
fs::path target_stats_path(const fs::path& out_dir) { return out_dir / "target_stats.bin"; }

Dataset transform_source_dataset(const Dataset& data, const DomainStats& target_stats, const TransformConfig& cfg,
                                 std::uint64_t seed) {
    Dataset out;
    out.domain = data.domain;
    out.name = data.name;
    const std::size_t n = data.size();
    for (std::size_t i = 0; i < n; ++i) {
        Rng donor_rng(derive_seed(seed, {3, i}));
        std::size_t donor = i;
        if (n > 1) {
            donor = donor_rng.index(n - 1);
            if (donor >= i) ++donor;
        }
        TransformConfig tcfg = cfg;
        tcfg.seed = derive_seed(seed, {4, i});
        try {
            out.images.push_back(transform_source(data.images[i], data.images[donor], target_stats, tcfg));
            out.labels.push_back(data.labels[i]);
        } catch (const DegenerateImageError&) {
        }
    }
    return out;
}

Dataset transform_inference_dataset(const Dataset& data, std::span<const double> mean_pixel,
                                    const DomainStats& other_stats, const TransformConfig& cfg) {
    Dataset out;
    out.domain = data.domain;
    out.name = data.name;
    for (std::size_t i = 0; i < data.size(); ++i) {
        try {
            out.images.push_back(transform_target(data.images[i], mean_pixel, other_stats, cfg));
            out.labels.push_back(data.labels[i]);
        } catch (const DegenerateImageError&) {
        }
    }
    return out;
}

PcaOutcome pca_union(const Dataset& source, const Dataset& target, std::size_t cap, std::uint64_t seed) {
    const Dataset s = cap_dataset(source, cap, derive_seed(seed, {0}));
    const Dataset t = cap_dataset(target, cap, derive_seed(seed, {1}));
    std::vector<ImageTensor> all = s.images;
    all.insert(all.end(), t.images.begin(), t.images.end());
    const PcaModel model = fit_pca(stack_flattened(all), 2);
    PcaOutcome out;
    out.table = project(model, s.images, s.labels, DomainTag::source);
    const auto tt = project(model, t.images, t.labels, DomainTag::target);
    out.table.insert(out.table.end(), tt.begin(), tt.end());
    out.gap = domain_gap(out.table);
    return out;
}

std::string RunSummary::to_csv(std::uint64_t seed) const {
    std::string s = "metric,value\n";
    s += "seed," + std::to_string(seed) + "\n";
    s += "baseline_source_test_acc," + fmt(baseline_source_acc) + "\n";
    s += "baseline_target_test_acc," + fmt(baseline_target_acc) + "\n";
    if (dda_source_acc && dda_target_acc) {
        s += "dda_source_test_acc," + fmt(*dda_source_acc) + "\n";
        s += "dda_target_test_acc," + fmt(*dda_target_acc) + "\n";
        s += "target_acc_gain," + fmt(*dda_target_acc - baseline_target_acc) + "\n";
        s += "source_acc_change," + fmt(*dda_source_acc - baseline_source_acc) + "\n";
    }
    s += "domain_gap_before," + fmt(gap_before) + "\n";
    if (gap_after) s += "domain_gap_after," + fmt(*gap_after) + "\n";
    return s;
}

std::vector<std::string> RunSummary::margin_failures(const ExperimentConfig& cfg) const {
    std::vector<std::string> out;
    if (!dda_source_acc || !dda_target_acc || !gap_after) {
        out.emplace_back("margins need the DDA run (remove --no-dda)");
        return out;
    }
    const double gain = *dda_target_acc - baseline_target_acc;
    if (!(gain >= cfg.min_target_gain)) {
        out.push_back("target accuracy gain " + fmt(gain) + " < " + fmt(cfg.min_target_gain));
    }
    const double change = std::abs(*dda_source_acc - baseline_source_acc);
    if (!(change <= cfg.max_source_gap)) {
        out.push_back("source accuracy change " + fmt(change) + " > " + fmt(cfg.max_source_gap));
    }
    if (!(*gap_after < gap_before)) {
        out.push_back("domain gap after " + fmt(*gap_after) + " >= before " + fmt(gap_before));
    }
    return out;
}

StatsPair cmd_stats(const ExperimentConfig& cfg, std::ostream& log) {
    cfg.validate();
    OutputLock lock(cfg.out_dir);
    const PreparedData data = prepare_data(cfg);
    const StatsPair stats = compute_stats(data, cfg.require_seed());
    for (const auto* s : {&stats.source, &stats.target}) {
        const auto path = s->domain == DomainTag::source ? source_stats_path(cfg.out_dir) : target_stats_path(cfg.out_dir);
        const auto bytes = encode_stats(*s);
        write_file(path, bytes);
        char sum[24];
        std::snprintf(sum, sizeof sum, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
        log << to_string(s->domain) << " stats: geometry " << s->mean_autocorr.shape_string()
            << ", sample_count " << s->sample_count << ", fnv1a64 " << sum << ", file " << path.string() << "\n";
    }
    return stats;
}

RunSummary cmd_run(const ExperimentConfig& cfg, std::ostream& log) {
    cfg.validate();
    OutputLock lock(cfg.out_dir);
    const auto seed = cfg.require_seed();
    const PreparedData data = prepare_data(cfg);
    log << "source train " << data.source_train.size() << ", source test " << data.source_test.size()
        << ", target train " << data.target_train.size() << ", target test " << data.target_test.size() << "\n";

    TrainConfig tc;
    tc.kind = cfg.classifier;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.learning_rate = cfg.learning_rate;
    tc.seed = derive_seed(seed, {kSeedTrain});
    tc.augment = cfg.augment;
    tc.transform = cfg.transform;

    RunSummary summary;

    // Baseline: identical training with the transform switched off.
    {
        const auto t0 = std::chrono::steady_clock::now();
        TrainConfig base = tc;
        base.use_dda = false;
        const std::vector<EvalSet> evals = {
            {"source_test", &data.source_test, EvalMode::raw, nullptr, {}},
            {"target_test", &data.target_test, EvalMode::raw, nullptr, {}},
        };
        const TrainResult r = train(data.source_train, nullptr, base, evals);
        const fs::path dir = cfg.out_dir / "baseline";
        save_model(dir / "model.ckpt", r.model);
        write_text(dir / "report.csv", r.report.to_csv());
        summary.baseline_source_acc = r.report.epochs.back().eval_acc[0];
        summary.baseline_target_acc = r.report.epochs.back().eval_acc[1];
        summary.baseline_seconds = elapsed_seconds(t0);
        log << "baseline: source_test " << summary.baseline_source_acc << ", target_test "
            << summary.baseline_target_acc << " (" << summary.baseline_seconds << " s)\n";
    }

    const PcaOutcome before = pca_union(data.source_train, data.target_train, cfg.pca_cap, derive_seed(seed, {kSeedPca}));
    write_text(cfg.out_dir / "pca_before.csv", projection_csv(before.table));
    write_text(cfg.out_dir / "pca_before.svg", projection_svg(before.table, "PCA before DDA"));
    summary.gap_before = before.gap;

    if (cfg.use_dda) {
        const auto t0 = std::chrono::steady_clock::now();
        const StatsPair stats = compute_stats(data, seed);
        write_stats(source_stats_path(cfg.out_dir), stats.source);
        write_stats(target_stats_path(cfg.out_dir), stats.target);

        TrainConfig dda = tc;
        dda.use_dda = true;
        const std::vector<EvalSet> evals = {
            {"source_test", &data.source_test, EvalMode::dda_target, &stats.target, stats.source.mean_pixel},
            {"target_test", &data.target_test, EvalMode::dda_target, &stats.source, stats.target.mean_pixel},
        };
        const TrainResult r = train(data.source_train, &stats.target, dda, evals);
        const fs::path dir = cfg.out_dir / "dda";
        save_model(dir / "model.ckpt", r.model);
        write_text(dir / "report.csv", r.report.to_csv());
        summary.dda_source_acc = r.report.epochs.back().eval_acc[0];
        summary.dda_target_acc = r.report.epochs.back().eval_acc[1];
        summary.dda_seconds = elapsed_seconds(t0);
        log << "dda: source_test " << *summary.dda_source_acc << ", target_test " << *summary.dda_target_acc
            << " (" << summary.dda_seconds << " s)\n";

        const Dataset src_after = transform_source_dataset(data.source_train, stats.target, cfg.transform,
                                                           derive_seed(seed, {kSeedPcaTransform}));
        const Dataset tgt_after =
            transform_inference_dataset(data.target_train, stats.target.mean_pixel, stats.source, cfg.transform);
        const PcaOutcome after = pca_union(src_after, tgt_after, cfg.pca_cap, derive_seed(seed, {kSeedPca}));
        write_text(cfg.out_dir / "pca_after.csv", projection_csv(after.table));
        write_text(cfg.out_dir / "pca_after.svg", projection_svg(after.table, "PCA after DDA"));
        summary.gap_after = after.gap;
    }

    write_text(cfg.out_dir / "summary.csv", summary.to_csv(seed));
    log << "domain gap before " << summary.gap_before;
    if (summary.gap_after) log << ", after " << *summary.gap_after;
    log << "\n";
    return summary;
}

void cmd_transform(const ExperimentConfig& cfg, const TransformInputs& inputs, std::ostream& log) {
    cfg.validate();
    OutputLock lock(cfg.out_dir);
    const DomainStats source = read_stats(source_stats_path(cfg.out_dir), DomainTag::source);
    const DomainStats target = read_stats(target_stats_path(cfg.out_dir), DomainTag::target);
    const fs::path root = cfg.out_dir / "transform";

    auto apply = [&](const Dataset& data, const char* what) {
        const bool is_source = data.domain == DomainTag::source;
        const DomainStats& own = is_source ? source : target;
        const DomainStats& other = is_source ? target : source;
        check_stats_geometry(other, data, what);
        std::vector<ImageTensor> out;
        out.reserve(data.size());
        for (const auto& img : data.images) out.push_back(transform_target(img, own.mean_pixel, other, cfg.transform));
        return out;
    };

    if (inputs.explicit_inputs) {
        const Dataset& data = *inputs.explicit_inputs;
        const auto out = apply(data, "transform");
        const fs::path dir = root / to_string(data.domain);
        std::string manifest;
        for (std::size_t i = 0; i < out.size(); ++i) {
            write_visuals(dir, i, out[i]);
            char line[64];
            std::snprintf(line, sizeof line, "%06zu_composite.png\t%d\n", i, data.labels[i]);
            manifest += line;
        }
        write_text(dir / "labels.tsv", manifest);
        log << "transformed " << out.size() << " " << to_string(data.domain) << " images into " << dir.string() << "\n";
        return;
    }

    const PreparedData data = prepare_data(cfg);
    const std::size_t n = std::min({inputs.count, data.source_test.size(), data.target_test.size()});
    Dataset src = data.source_test;
    Dataset tgt = data.target_test;
    src.images.resize(n);
    src.labels.resize(n);
    tgt.images.resize(n);
    tgt.labels.resize(n);
    const auto src_out = apply(src, "transform source");
    const auto tgt_out = apply(tgt, "transform target");
    const bool paired = cfg.target == "synth";
    std::string csv = "index,label,raw_corr,dda_corr\n";
    for (std::size_t i = 0; i < n; ++i) {
        write_visuals(root / "source", i, src_out[i]);
        write_visuals(root / "target", i, tgt_out[i]);
        if (paired) {
            csv += std::to_string(i) + "," + std::to_string(src.labels[i]) + "," +
                   fmt(pixel_correlation(src.images[i], tgt.images[i])) + "," +
                   fmt(pixel_correlation(src_out[i], tgt_out[i])) + "\n";
        }
    }
    if (paired) write_text(root / "pairs.csv", csv);
    log << "transformed " << n << " source and " << n << " target images into " << root.string() << "\n";
}

std::pair<double, double> cmd_pca(const ExperimentConfig& cfg, std::ostream& log) {
    cfg.validate();
    OutputLock lock(cfg.out_dir);
    const auto seed = cfg.require_seed();
    const PreparedData data = prepare_data(cfg);
    const StatsPair stats = compute_stats(data, seed);
    const PcaOutcome before = pca_union(data.source_train, data.target_train, cfg.pca_cap, derive_seed(seed, {kSeedPca}));
    const Dataset src_after = transform_source_dataset(data.source_train, stats.target, cfg.transform,
                                                       derive_seed(seed, {kSeedPcaTransform}));
    const Dataset tgt_after =
        transform_inference_dataset(data.target_train, stats.target.mean_pixel, stats.source, cfg.transform);
    const PcaOutcome after = pca_union(src_after, tgt_after, cfg.pca_cap, derive_seed(seed, {kSeedPca}));
    write_text(cfg.out_dir / "pca_before.csv", projection_csv(before.table));
    write_text(cfg.out_dir / "pca_before.svg", projection_svg(before.table, "PCA before DDA"));
    write_text(cfg.out_dir / "pca_after.csv", projection_csv(after.table));
    write_text(cfg.out_dir / "pca_after.svg", projection_svg(after.table, "PCA after DDA"));
    log << "domain gap before " << before.gap << ", after " << after.gap << "\n";
    return {before.gap, after.gap};
}

void cmd_synth(const ExperimentConfig& cfg, std::ostream& log) {
    cfg.validate();
    if (cfg.target != "synth") throw ConfigError("synth: config target must be synth");
    OutputLock lock(cfg.out_dir);
    const auto seed = cfg.require_seed();
    const IdxHeader hdr = read_idx_header(cfg.source_train_images);
    if (hdr.dims.size() != 3) throw DataError("synth: " + cfg.source_train_images.string() + " is not an image IDX file");
    const PatchBank bank =
        cfg.patch_bank == "procedural"
            ? procedural_patch_bank(cfg.patch_count, hdr.dims[1], hdr.dims[2], derive_seed(seed, {kSeedPatchBank}))
            : photo_patch_bank(cfg.patch_bank, cfg.patch_count, hdr.dims[1], hdr.dims[2],
                               derive_seed(seed, {kSeedPatchBank}));
    const fs::path root = cfg.out_dir / "synth";
    export_patch_bank(bank, root / "patch_bank");
    // Same draws as prepare_data, kept in [0, 1] for PNG export.
    const Dataset mnist_train = load_idx(cfg.source_train_images, cfg.source_train_labels);
    const Dataset mnist_test = load_idx(cfg.source_test_images, cfg.source_test_labels);
    const Dataset digits = maybe_subsample(mnist_train, cfg.train_per_class, derive_seed(seed, {kSeedTargetDigits}));
    const Dataset test_digits = maybe_subsample(mnist_test, cfg.test_per_class, derive_seed(seed, {kSeedSourceTest}));
    const Dataset train = synthesize_target(to_rgb(digits), bank, derive_seed(seed, {kSeedSynthTrain}));
    const Dataset test = synthesize_target(to_rgb(test_digits), bank, derive_seed(seed, {kSeedSynthTest}));
    save_image_dir(train, root / "target_train");
    save_image_dir(test, root / "target_test");
    log << "patch bank " << bank.patches.size() << " (" << bank.origin << "), target train " << train.size()
        << ", target test " << test.size() << " written to " << root.string() << "\n";
}

void cmd_idx_info(const fs::path& path, std::ostream& log) {
    const IdxHeader hdr = read_idx_header(path);
    char magic[16];
    std::snprintf(magic, sizeof magic, "0x%08x", hdr.magic);
    log << path.string() << ": magic " << magic << ", dims";
    for (const auto d : hdr.dims) log << " " << d;
    log << "\n";
}

double pixel_correlation(const ImageTensor& a, const ImageTensor& b) {
    if (!a.same_geometry(b)) {
        throw DataError("pixel_correlation: geometry " + a.shape_string() + " vs " + b.shape_string());
    }
    const auto x = a.flatten();
    const auto y = b.flatten();
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

OutputLock::OutputLock(const fs::path& out_dir) : path_(out_dir / ".dda.lock") {
    fs::create_directories(out_dir);
    // "x" mode fails if the file already exists.
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) {
        throw ConfigError("output directory " + out_dir.string() + " is locked by another run (" + path_.string() +
                          "); remove the file if no run is active");
    }
    std::fclose(f);
}

OutputLock::~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

}  // namespace dda
