// dda: command-line front end for the direct domain adaptation pipeline.
#include <chrono>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dda/datasets.hpp"
#include "dda/errors.hpp"
#include "dda/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitMargins = 3;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool full_scale = false;
    std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "Experiment config (key=value file)")->required();
    cmd->add_option("--seed", c.seed, "Override the config seed");
    cmd->add_option("--out", c.out, "Override the output directory");
    cmd->add_flag("--full-scale", c.full_scale, "100 epochs, batch 128, no subsampling");
    cmd->add_option("--set", c.sets, "Override any config key (key=value), repeatable");
}

dda::ExperimentConfig build_config(const Common& c) {
    auto cfg = dda::load_config(c.config);
    if (c.full_scale) cfg.apply_full_scale();
    for (const auto& kv : c.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw dda::ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (c.seed) cfg.seed = *c.seed;
    if (!c.out.empty()) cfg.out_dir = c.out;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Direct domain adaptation: statistics, transforms, training and diagnostics"};
    app.require_subcommand(1);

    Common stats_opts, run_opts, tr_opts, pca_opts, synth_opts;

    auto* stats = app.add_subcommand("stats", "Compute and cache per-domain statistics");
    add_common(stats, stats_opts);

    auto* run = app.add_subcommand("run", "Train baseline and DDA models, evaluate, write PCA diagnostics");
    add_common(run, run_opts);
    bool no_dda = false;
    bool assert_margins = false;
    run->add_flag("--no-dda", no_dda, "Baseline only; stats caches are never touched");
    run->add_flag("--assert-margins", assert_margins, "Exit 3 unless the accuracy and domain-gap margins hold");

    auto* tr = app.add_subcommand("transform", "Write transformed images using the cached statistics");
    add_common(tr, tr_opts);
    std::size_t count = 10;
    std::string in_images, in_labels, in_dir, in_manifest, in_domain = "target";
    tr->add_option("--count", count, "Number of paired test images when no inputs are given");
    tr->add_option("--images", in_images, "IDX image file to transform");
    tr->add_option("--labels", in_labels, "IDX label file matching --images");
    tr->add_option("--dir", in_dir, "PNG directory to transform");
    tr->add_option("--manifest", in_manifest, "Manifest for --dir (path<TAB>label)");
    tr->add_option("--domain", in_domain, "Domain of the explicit inputs")->check(CLI::IsMember({"source", "target"}));

    auto* pca = app.add_subcommand("pca", "PCA scatter of both domains before and after DDA");
    add_common(pca, pca_opts);

    auto* synth = app.add_subcommand("synth", "Export the patch bank and synthesized target images");
    add_common(synth, synth_opts);

    auto* idx = app.add_subcommand("idx-info", "Print an IDX file header");
    std::string idx_path;
    idx->add_option("path", idx_path, "IDX file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        const auto t0 = std::chrono::steady_clock::now();
        if (*stats) {
            dda::cmd_stats(build_config(stats_opts), std::cout);
        } else if (*run) {
            auto cfg = build_config(run_opts);
            if (no_dda) cfg.use_dda = false;
            const auto summary = dda::cmd_run(cfg, std::cout);
            std::cout << summary.to_csv(cfg.require_seed());
            if (assert_margins) {
                const auto failures = summary.margin_failures(cfg);
                for (const auto& f : failures) std::cerr << "margin failed: " << f << "\n";
                if (!failures.empty()) return kExitMargins;
                std::cout << "all margins hold\n";
            }
        } else if (*tr) {
            const auto cfg = build_config(tr_opts);
            dda::TransformInputs inputs;
            inputs.count = count;
            const auto domain = dda::parse_domain(in_domain);
            if (!in_images.empty()) {
                if (in_labels.empty()) throw dda::ConfigError("--images needs --labels");
                inputs.explicit_inputs = dda::to_signed_range(dda::to_rgb(dda::load_idx(in_images, in_labels, domain)));
            } else if (!in_dir.empty()) {
                if (in_manifest.empty()) throw dda::ConfigError("--dir needs --manifest");
                inputs.explicit_inputs = dda::to_signed_range(dda::load_image_dir(in_dir, in_manifest, domain));
            }
            if (inputs.explicit_inputs) inputs.explicit_inputs->domain = domain;
            dda::cmd_transform(cfg, inputs, std::cout);
        } else if (*pca) {
            dda::cmd_pca(build_config(pca_opts), std::cout);
        } else if (*synth) {
            dda::cmd_synth(build_config(synth_opts), std::cout);
        } else if (*idx) {
            dda::cmd_idx_info(idx_path, std::cout);
        }
        std::cout << "elapsed " << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
                  << " s\n";
    } catch (const dda::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const dda::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitOk;
}
