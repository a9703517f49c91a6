// Copyright (c) 2026, The palora-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "palora/commands.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"palora: preference-aware low-rank adapters for multi-task Pareto fronts"};
    app.require_subcommand(1);

    palora::CommandOptions opts;
    std::string ref_text;
    std::uint64_t seed = 0;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--out", opts.out_dir, "output directory");
        sub->add_option("--seed", seed, "seed overriding the config");
    };

    auto* train = app.add_subcommand("train", "train a model from a config");
    train->add_option("--config", opts.config, "run config (JSON)")->required();
    common(train);

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a preference grid");
    eval->add_option("--checkpoint", opts.checkpoint, "checkpoint file")->required();
    eval->add_option("--grid", opts.grid, "grid size per simplex edge");
    eval->add_option("--ref", ref_text, "hypervolume reference \"v1,v2[,v3]\"");
    common(eval);

    auto* expand = app.add_subcommand("expand", "expand a single-point checkpoint into a front");
    expand->add_option("--checkpoint", opts.checkpoint, "checkpoint file")->required();
    expand->add_option("--config", opts.config, "expand-mode run config")->required();
    common(expand);

    auto* probe = app.add_subcommand("probe", "evaluate arbitrary (pseudo)preferences");
    probe->add_option("--checkpoint", opts.checkpoint, "checkpoint file")->required();
    probe->add_option("--lambdas", opts.lambdas, "JSON list of vectors, or a file holding one")->required();
    common(probe);

    auto* ablate = app.add_subcommand("ablate", "run a sweep and write ablation.csv");
    ablate->add_option("--config", opts.config, "run config with a \"sweep\" object")->required();
    common(ablate);

    auto* hv = app.add_subcommand("hv", "hypervolume of the loss columns of a CSV");
    hv->add_option("csv", opts.csv, "CSV file")->required();
    hv->add_option("--ref", ref_text, "reference point \"v1,v2[,v3]\"")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : palora::kExitConfigError;
    }

    for (auto* sub : {train, eval, expand, probe, ablate}) {
        if (sub->parsed() && sub->count("--seed") > 0) opts.seed = seed;
    }
    if (!ref_text.empty()) {
        try {
            opts.ref = palora::parse_point(ref_text);
        } catch (const std::exception& e) {
            std::cerr << "palora: --ref: " << e.what() << '\n';
            return palora::kExitConfigError;
        }
    }

    if (train->parsed()) return palora::cmd_train(opts, std::cout, std::cerr);
    if (eval->parsed()) return palora::cmd_eval(opts, std::cout, std::cerr);
    if (expand->parsed()) return palora::cmd_expand(opts, std::cout, std::cerr);
    if (probe->parsed()) return palora::cmd_probe(opts, std::cout, std::cerr);
    if (ablate->parsed()) return palora::cmd_ablate(opts, std::cout, std::cerr);
    return palora::cmd_hv(opts, std::cout, std::cerr);
}
