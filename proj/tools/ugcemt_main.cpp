// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Links only the public C API.
#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "ugcemt/ugcemt.h"

namespace {

struct ConfigHandle {
    ugc_config* c = nullptr;
    ConfigHandle() : c(ugc_config_create()) {}
    ~ConfigHandle() { ugc_config_destroy(c); }
    ConfigHandle(const ConfigHandle&) = delete;
    ConfigHandle& operator=(const ConfigHandle&) = delete;
};

int report(ugc_status s) {
    if (s == UGC_OK) return 0;
    std::cerr << "error (" << ugc_status_name(s) << "): " << ugc_last_error() << "\n";
    return int(s);
}

// Precedence: --set flags > config file > defaults. Explicit sets go in
// first; file loading never overrides existing keys.
int apply_config(ConfigHandle& h, const std::string& config_file,
                 const std::vector<std::string>& sets) {
    for (const std::string& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            std::cerr << "error (config-error): --set expects key=value, got: " << kv << "\n";
            return int(UGC_ERR_CONFIG);
        }
        const ugc_status s =
            ugc_config_set(h.c, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
        if (s != UGC_OK) return report(s);
    }
    if (!config_file.empty()) {
        const ugc_status s = ugc_config_load_file(h.c, config_file.c_str());
        if (s != UGC_OK) return report(s);
    }
    return 0;
}

// UGCEMT_OUT_ROOT prefixes relative output paths.
std::string resolve_out(const std::string& path) {
    const char* root = std::getenv("UGCEMT_OUT_ROOT");
    if (!root || !*root || path.empty() || path.front() == '/') return path;
    return std::string(root) + "/" + path;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"UG-CEMT semi-supervised 3D segmentation"};
    app.require_subcommand(1);
    app.fallthrough();  // --config/--set may appear after the subcommand

    std::string config_file;
    std::vector<std::string> sets;
    app.add_option("--config", config_file, "key=value config file")->capture_default_str();
    app.add_option("--set", sets, "override a config key (key=value, repeatable)");

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    std::string gen_out = "data";
    gen->add_option("-o,--out", gen_out, "dataset directory")->capture_default_str();

    auto* train = app.add_subcommand("train", "train phase 1, phase 2, or both");
    std::string phase = "both";
    train->add_option("--phase", phase, "1, 2, or both")->capture_default_str();

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    std::string checkpoint, eval_csv = "eval.csv";
    eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    eval->add_option("-o,--out", eval_csv, "output CSV")->capture_default_str();

    auto* ablate = app.add_subcommand("ablate", "run the Baseline/MT/CEMT/UG-CEMT study");
    std::string ablate_out = "ablation";
    ablate->add_option("-o,--out", ablate_out, "output directory")->capture_default_str();

    auto* plot = app.add_subcommand("plot", "render curves from CSV logs");
    plot->require_subcommand(1);
    auto* plot_losses = plot->add_subcommand("losses", "loss curves from losses.csv");
    std::string losses_csv, losses_svg = "losses.svg";
    plot_losses->add_option("csv", losses_csv, "losses.csv path")->required();
    plot_losses->add_option("-o,--out", losses_svg, "output SVG")->capture_default_str();
    auto* plot_cmp =
        plot->add_subcommand("compare", "metric panels for two runs (e.g. CR vs PLG)");
    std::string cmp_a, cmp_b, label_a = "CR", label_b = "PLG", cmp_svg = "compare.svg";
    plot_cmp->add_option("csv_a", cmp_a, "first metrics.csv")->required();
    plot_cmp->add_option("csv_b", cmp_b, "second metrics.csv")->required();
    plot_cmp->add_option("--label-a", label_a)->capture_default_str();
    plot_cmp->add_option("--label-b", label_b)->capture_default_str();
    plot_cmp->add_option("-o,--out", cmp_svg, "output SVG")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    ConfigHandle cfg;
    if (int rc = apply_config(cfg, config_file, sets)) return rc;

    if (gen->parsed()) return report(ugc_generate_dataset(cfg.c, resolve_out(gen_out).c_str()));

    if (train->parsed()) {
        int p;
        if (phase == "both")
            p = 0;
        else if (phase == "1")
            p = 1;
        else if (phase == "2")
            p = 2;
        else {
            std::cerr << "error (config-error): --phase must be 1, 2, or both\n";
            return int(UGC_ERR_CONFIG);
        }
        char out_dir[1024];
        if (ugc_config_get(cfg.c, "out_dir", out_dir, sizeof(out_dir)) == UGC_OK) {
            const std::string resolved = resolve_out(out_dir);
            if (resolved != out_dir) ugc_config_set(cfg.c, "out_dir", resolved.c_str());
        }
        return report(ugc_train(cfg.c, p));
    }

    if (eval->parsed())
        return report(ugc_evaluate(cfg.c, checkpoint.c_str(), resolve_out(eval_csv).c_str()));

    if (ablate->parsed()) return report(ugc_ablate(cfg.c, resolve_out(ablate_out).c_str()));

    if (plot_losses->parsed())
        return report(ugc_plot_losses(losses_csv.c_str(), resolve_out(losses_svg).c_str()));

    if (plot_cmp->parsed())
        return report(ugc_plot_metric_comparison(cmp_a.c_str(), label_a.c_str(), cmp_b.c_str(),
                                                 label_b.c_str(),
                                                 resolve_out(cmp_svg).c_str()));

    return 0;
}
