#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "dda/datasets.hpp"
#include "dda/errors.hpp"
#include "dda/experiment.hpp"
#include "dda/file_util.hpp"
#include "oracles.hpp"

using namespace dda;
namespace fs = std::filesystem;

namespace {

// 16x16 single-channel digits: a bright bar whose position encodes the label.
void write_digits(const fs::path& dir, const std::string& stem, std::size_t per_class, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> noise(0.0, 0.2);
    Dataset d;
    for (std::size_t i = 0; i < per_class * 10; ++i) {
        const int label = static_cast<int>(i % 10);
        Plane p(16, 16);
        for (std::size_t k = 0; k < p.size(); ++k) p[k] = noise(gen);
        for (std::size_t r = 3; r < 13; ++r) p.at(r, static_cast<std::size_t>(3 + label)) = 1.0;
        d.images.emplace_back(std::vector<Plane>{p});
        d.labels.push_back(label);
    }
    save_idx(d, dir / (stem + "-images"), dir / (stem + "-labels"));
}

fs::path make_fixture(const std::string& name) {
    const auto dir = oracle::temp_dir(name);
    write_digits(dir, "train", 6, 1);
    write_digits(dir, "test", 3, 2);
    std::ofstream(dir / "exp.conf") << "# tiny\n"
                                       "source_train_images = train-images\n"
                                       "source_train_labels = train-labels\n"
                                       "source_test_images = test-images\n"
                                       "source_test_labels = test-labels\n"
                                       "patch_count = 5\n"
                                       "train_per_class = 4\n"
                                       "test_per_class = 2\n"
                                       "classifier = logistic\n"
                                       "epochs = 2\n"
                                       "batch_size = 8\n"
                                       "pca_cap = 30\n"
                                       "seed = 7\n"
                                       "out_dir = out\n";
    return dir;
}

}  // namespace

TEST_CASE("config parsing resolves paths, comments and types") {
    const auto cfg = parse_config("seed = 3 # trailing\n\nepochs=4\nsource_train_images = a/b\nswap_convolution_operands = true\n",
                                  "/base");
    CHECK(cfg.seed == 3u);
    CHECK(cfg.epochs == 4);
    CHECK(cfg.source_train_images == fs::path("/base/a/b"));
    CHECK(cfg.transform.swap_convolution_operands);
    CHECK_THROWS_AS(parse_config("bogus = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("epochs = many\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("no equals sign\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("augment = maybe\n"), ConfigError);
}

TEST_CASE("seed is mandatory and referenced paths must exist") {
    const auto dir = make_fixture("cfg_validate");
    auto cfg = load_config(dir / "exp.conf");
    CHECK_NOTHROW(cfg.validate());
    cfg.seed.reset();
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.seed = 1;
    cfg.source_test_images = dir / "absent";
    try {
        cfg.validate();
        FAIL("expected throw");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("absent") != std::string::npos);
    }
    CHECK_THROWS_AS(load_config(dir / "missing.conf"), ConfigError);
}

TEST_CASE("full-scale switch sets the long protocol") {
    ExperimentConfig cfg;
    cfg.apply_full_scale();
    CHECK(cfg.epochs == 100);
    CHECK(cfg.batch_size == 128);
    CHECK(cfg.train_per_class == 0);
}

TEST_CASE("output lock excludes a second holder and releases on scope exit") {
    const auto dir = oracle::temp_dir("lock");
    {
        OutputLock a(dir);
        CHECK_THROWS_AS(OutputLock{dir}, ConfigError);
    }
    CHECK_NOTHROW(OutputLock{dir});
}

TEST_CASE("prepare_data yields tagged, balanced, signed-range partitions") {
    const auto dir = make_fixture("prepare");
    const auto data = prepare_data(load_config(dir / "exp.conf"));
    CHECK(data.source_train.size() == 40);
    CHECK(data.target_train.size() == 40);
    CHECK(data.source_test.size() == 20);
    CHECK(data.target_test.size() == 20);
    CHECK(data.source_train.domain == DomainTag::source);
    CHECK(data.target_test.domain == DomainTag::target);
    CHECK(data.target_test.labels == data.source_test.labels);
    for (const auto* d : {&data.source_train, &data.target_train})
        for (const auto& img : d->images) {
            CHECK(img.channels() == 3);
            for (std::size_t c = 0; c < 3; ++c)
                for (double v : img.plane(c).values()) {
                    CHECK(v >= -1.0);
                    CHECK(v <= 1.0);
                }
        }
}

TEST_CASE("cmd_stats is idempotent and matches an independent recomputation") {
    const auto dir = make_fixture("stats_cmd");
    const auto cfg = load_config(dir / "exp.conf");
    std::ostringstream log;
    const auto stats = cmd_stats(cfg, log);
    const auto first = read_file(dir / "out" / "target_stats.bin");
    cmd_stats(cfg, log);
    CHECK(read_file(dir / "out" / "target_stats.bin") == first);
    CHECK(log.str().find("sample_count 40") != std::string::npos);

    // Recompute the target mean autocorrelation by brute force.
    const auto data = prepare_data(cfg);
    for (std::size_t c = 0; c < 3; ++c) {
        Plane acc(16, 16);
        for (const auto& img : data.target_train.images) {
            const Plane a = oracle::cross_correlate(img.plane(c), img.plane(c));
            for (std::size_t k = 0; k < a.size(); ++k) acc[k] += a[k] / 40.0;
        }
        CHECK(oracle::max_abs_diff(acc, stats.target.mean_autocorr.plane(c)) < 1e-9);
    }
    CHECK(read_stats(dir / "out" / "source_stats.bin", DomainTag::source) == stats.source);
}

TEST_CASE("cmd_run writes every artifact and replays byte-identically") {
    const auto dir = make_fixture("run");
    auto cfg = load_config(dir / "exp.conf");
    std::ostringstream log;
    const auto a = cmd_run(cfg, log);
    const fs::path out = dir / "out";
    for (const char* f : {"summary.csv", "baseline/model.ckpt", "baseline/report.csv", "dda/model.ckpt",
                          "dda/report.csv", "pca_before.csv", "pca_before.svg", "pca_after.csv", "pca_after.svg",
                          "source_stats.bin", "target_stats.bin"})
        CHECK_MESSAGE(fs::exists(out / f), f);
    CHECK_FALSE(fs::exists(out / ".dda.lock"));
    const auto summary = read_file(out / "summary.csv");
    const auto ckpt = read_file(out / "dda" / "model.ckpt");
    const auto pca = read_file(out / "pca_after.csv");
    const std::string text(summary.begin(), summary.end());
    CHECK(text.rfind("metric,value\n", 0) == 0);
    CHECK(text.find("target_acc_gain,") != std::string::npos);
    CHECK(text.find("baseline_target_test_acc,") != std::string::npos);

    cfg.out_dir = dir / "out2";
    const auto b = cmd_run(cfg, log);
    CHECK(read_file(dir / "out2" / "summary.csv") == summary);
    CHECK(read_file(dir / "out2" / "dda" / "model.ckpt") == ckpt);
    CHECK(read_file(dir / "out2" / "pca_after.csv") == pca);
    CHECK(a.baseline_target_acc == b.baseline_target_acc);
}

TEST_CASE("--no-dda never touches statistics") {
    const auto dir = make_fixture("nodda");
    auto cfg = load_config(dir / "exp.conf");
    cfg.use_dda = false;
    std::ostringstream log;
    const auto before = stats_access_count();
    const auto s = cmd_run(cfg, log);
    CHECK(stats_access_count() == before);
    CHECK_FALSE(fs::exists(dir / "out" / "source_stats.bin"));
    CHECK_FALSE(s.dda_target_acc.has_value());
    const auto bytes = read_file(dir / "out" / "summary.csv");
    const std::string text(bytes.begin(), bytes.end());
    CHECK(text.find("baseline_target_test_acc,") != std::string::npos);
    CHECK(text.find("dda_") == std::string::npos);
    CHECK_FALSE(s.margin_failures(cfg).empty());
}

TEST_CASE("cmd_transform writes one visualization pair per input and rejects mismatched caches") {
    const auto dir = make_fixture("transform");
    const auto cfg = load_config(dir / "exp.conf");
    std::ostringstream log;
    cmd_stats(cfg, log);
    TransformInputs in;
    in.count = 4;
    cmd_transform(cfg, in, log);
    const fs::path root = dir / "out" / "transform";
    std::size_t pngs = 0;
    for (const auto& e : fs::directory_iterator(root / "target")) pngs += e.path().extension() == ".png";
    CHECK(pngs == 8);
    const auto bytes = read_file(root / "pairs.csv");
    const std::string csv(bytes.begin(), bytes.end());
    CHECK(csv.rfind("index,label,raw_corr,dda_corr\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);

    Dataset wrong;
    wrong.domain = DomainTag::target;
    wrong.images = {ImageTensor(8, 8, 3)};
    wrong.labels = {1};
    in.explicit_inputs = wrong;
    CHECK_THROWS_AS(cmd_transform(cfg, in, log), DataError);
}

TEST_CASE("cmd_transform without caches fails with the cache path") {
    const auto dir = make_fixture("transform_nocache");
    const auto cfg = load_config(dir / "exp.conf");
    std::ostringstream log;
    try {
        cmd_transform(cfg, TransformInputs{}, log);
        FAIL("expected throw");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("source_stats.bin") != std::string::npos);
    }
}

TEST_CASE("identity statistics make the inference transform a plain renormalization") {
    std::mt19937_64 gen(3);
    Dataset d;
    d.domain = DomainTag::target;
    for (int i = 0; i < 3; ++i) {
        d.images.push_back(oracle::random_image(gen, 6, 6, 3));
        d.labels.push_back(i);
    }
    DomainStats id;
    id.mean_autocorr = oracle::unit_delta(6, 6, 3);
    id.mean_pixel.assign(3, 1.0);
    const std::vector<double> one(3, 1.0);
    const Dataset out = transform_inference_dataset(d, one, id, TransformConfig{});
    REQUIRE(out.size() == d.size());
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(out.images[i] == oracle::renormalize(d.images[i]));
}

TEST_CASE("pixel_correlation is Pearson's r") {
    ImageTensor a(std::vector<Plane>{Plane(1, 4, {1, 2, 3, 4})});
    ImageTensor b(std::vector<Plane>{Plane(1, 4, {2, 4, 6, 8})});
    ImageTensor c(std::vector<Plane>{Plane(1, 4, {4, 3, 2, 1})});
    CHECK(pixel_correlation(a, b) == doctest::Approx(1.0));
    CHECK(pixel_correlation(a, c) == doctest::Approx(-1.0));
}

TEST_CASE("cmd_synth exports the bank and both target partitions") {
    const auto dir = make_fixture("synth");
    std::ostringstream log;
    cmd_synth(load_config(dir / "exp.conf"), log);
    const fs::path root = dir / "out" / "synth";
    CHECK(fs::exists(root / "patch_bank"));
    const Dataset t = load_image_dir(root / "target_train", root / "target_train" / "labels.tsv");
    CHECK(t.size() == 40);
    CHECK(t.images.front().channels() == 3);
}
