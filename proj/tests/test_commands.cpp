// Copyright (c) 2026, The palora-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "palora/commands.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace palora;
namespace fs = std::filesystem;

namespace {

class Workspace : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("palora_cmd_") + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    /// The synthetic config with a few overrides, written into the workspace.
    std::string config(const std::string& name, const json& patch = json::object()) const {
        auto j = read_json_file(std::string(PALORA_SOURCE_DIR) + "/configs/synthetic.json");
        j["train"]["epochs"] = 4;
        j["outputs"]["directory"] = (dir_ / name).string();
        j.merge_patch(patch);
        const auto path = dir_ / (name + ".json");
        std::ofstream(path) << j.dump(2);
        return path.string();
    }

    std::string text(const fs::path& p) const {
        std::ifstream in(p, std::ios::binary);
        return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    }

    int run(int (*cmd)(const CommandOptions&, std::ostream&, std::ostream&), const CommandOptions& opts) {
        out_.str("");
        err_.str("");
        return cmd(opts, out_, err_);
    }

    int cli(const std::string& args) const {
        const std::string line = std::string(PALORA_CLI_PATH) + " " + args + " > " + (dir_ / "cli.out").string() +
                                 " 2> " + (dir_ / "cli.err").string();
        const int status = std::system(line.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    fs::path dir_;
    std::ostringstream out_;
    std::ostringstream err_;
};

CommandOptions train_opts(const std::string& cfg) {
    CommandOptions o;
    o.config = cfg;
    return o;
}

std::vector<std::vector<double>> loss_rows(const CsvTable& t) {
    std::vector<std::vector<double>> out;
    for (const auto& row : t.rows) {
        std::vector<double> p;
        for (std::size_t c = 0; c < t.header.size(); ++c)
            if (t.header[c].rfind("loss_", 0) == 0) p.push_back(row[c]);
        out.push_back(p);
    }
    return out;
}

std::vector<std::vector<std::string>> split_csv(const std::string& body) {
    std::vector<std::vector<std::string>> out;
    std::stringstream lines(body);
    std::string line, cell;
    while (std::getline(lines, line)) {
        std::stringstream cells(line);
        out.emplace_back();
        while (std::getline(cells, cell, ',')) out.back().push_back(cell);
    }
    return out;
}

}  // namespace

TEST_F(Workspace, TrainWritesAllOutputsAndIsDeterministic) {
    const auto cfg = config("a");
    ASSERT_EQ(run(cmd_train, train_opts(cfg)), kExitOk) << err_.str();
    for (const char* f : {"checkpoint.palora", "history.csv", "front.csv", "summary.json"}) {
        EXPECT_TRUE(fs::exists(dir_ / "a" / f)) << f;
    }
    const auto summary = json::parse(text(dir_ / "a" / "summary.json"));
    EXPECT_EQ(summary.at("grid_size"), 11);
    EXPECT_TRUE(summary.contains("analytic_hv"));
    EXPECT_EQ(read_csv((dir_ / "a" / "history.csv").string()).rows.size(), 4u);

    auto again = train_opts(cfg);
    again.out_dir = (dir_ / "b").string();
    ASSERT_EQ(run(cmd_train, again), kExitOk);
    EXPECT_EQ(text(dir_ / "a" / "front.csv"), text(dir_ / "b" / "front.csv"));
    EXPECT_EQ(text(dir_ / "a" / "checkpoint.palora"), text(dir_ / "b" / "checkpoint.palora"));

    again.out_dir = (dir_ / "c").string();
    again.seed = 77;
    ASSERT_EQ(run(cmd_train, again), kExitOk);
    EXPECT_NE(text(dir_ / "a" / "checkpoint.palora"), text(dir_ / "c" / "checkpoint.palora"));
}

TEST_F(Workspace, TrainZeroEpochsStoresInitialModel) {
    ASSERT_EQ(run(cmd_train, train_opts(config("z", {{"train", {{"epochs", 0}}}}))), kExitOk);
    const auto ck = load_checkpoint(dir_ / "z" / "checkpoint.palora");
    const auto cfg = load_run_config((dir_ / "z.json").string());
    EXPECT_EQ(ck.model, Model::build(cfg.model, cfg.seed));
    const auto front = read_csv((dir_ / "z" / "front.csv").string());
    for (const auto& row : loss_rows(front)) EXPECT_EQ(row, loss_rows(front).front());
}

TEST_F(Workspace, TrainConfigErrorsExitTwo) {
    EXPECT_EQ(run(cmd_train, train_opts((dir_ / "missing.json").string())), kExitConfigError);
    std::ofstream(dir_ / "bad.json") << "{\"model\": {}}";
    EXPECT_EQ(run(cmd_train, train_opts((dir_ / "bad.json").string())), kExitConfigError);
    EXPECT_EQ(run(cmd_train, train_opts(config("e", {{"train", {{"mode", "expand"}}}}))), kExitConfigError);
}

TEST_F(Workspace, TrainDivergenceExitsOne) {
    const auto cfg = config("d", {{"train", {{"optimizer", {{"kind", "sgd"}, {"learning_rate", 1e6}}}}}});
    EXPECT_EQ(run(cmd_train, train_opts(cfg)), kExitTrainingFailed);
    EXPECT_NE(err_.str().find("non-finite"), std::string::npos);
}

TEST_F(Workspace, EvalReproducesTrainFrontAndHypervolume) {
    ASSERT_EQ(run(cmd_train, train_opts(config("t"))), kExitOk);
    CommandOptions o;
    o.checkpoint = (dir_ / "t" / "checkpoint.palora").string();
    o.out_dir = (dir_ / "ev").string();
    ASSERT_EQ(run(cmd_eval, o), kExitOk) << err_.str();
    EXPECT_EQ(text(dir_ / "ev" / "front.csv"), text(dir_ / "t" / "front.csv"));

    const auto summary = json::parse(text(dir_ / "ev" / "summary.json"));
    const auto pts = loss_rows(read_csv((dir_ / "ev" / "front.csv").string()));
    const auto ref = summary.at("hv_reference").get<ObjectivePoint>();
    EXPECT_DOUBLE_EQ(hypervolume(pts, ref), summary.at("hv").get<double>());

    o.grid = 1;
    ASSERT_EQ(run(cmd_eval, o), kExitOk);
    const auto single = read_csv((dir_ / "ev" / "front.csv").string());
    ASSERT_EQ(single.rows.size(), 1u);
    EXPECT_EQ(single.rows[0][0], 0.5);
    EXPECT_EQ(single.rows[0][1], 0.5);

    o.grid.reset();
    o.ref = {100.0, 100.0};
    ASSERT_EQ(run(cmd_eval, o), kExitOk);
    EXPECT_EQ(json::parse(text(dir_ / "ev" / "summary.json")).at("hv_reference"), json({100.0, 100.0}));
}

TEST_F(Workspace, EvalCheckpointErrorsExitThree) {
    CommandOptions o;
    o.checkpoint = (dir_ / "none.palora").string();
    EXPECT_EQ(run(cmd_eval, o), kExitCheckpointError);

    ASSERT_EQ(run(cmd_train, train_opts(config("t", {{"train", {{"epochs", 1}}}}))), kExitOk);
    auto bytes = read_file_bytes(dir_ / "t" / "checkpoint.palora");
    std::string s(bytes.begin(), bytes.end());
    s.replace(s.find("\"format_version\":1"), 18, "\"format_version\":7");
    std::ofstream(dir_ / "v7.palora", std::ios::binary) << s;
    o.checkpoint = (dir_ / "v7.palora").string();
    EXPECT_EQ(run(cmd_eval, o), kExitCheckpointError);
    EXPECT_NE(err_.str().find("version"), std::string::npos);
}

TEST_F(Workspace, ExpandGrowsFrontAroundFrozenBase) {
    const json scalarize = {{"train", {{"schedule", {{"mode", "fixed"}, {"samples_per_batch", 1},
                                                     {"fixed_preference", {0.5, 0.5}}}}}}};
    ASSERT_EQ(run(cmd_train, train_opts(config("s", scalarize))), kExitOk);
    const auto ckpt = (dir_ / "s" / "checkpoint.palora").string();

    CommandOptions o;
    o.checkpoint = ckpt;
    o.config = config("x", {{"train", {{"mode", "expand"}, {"epochs", 6}}}});
    ASSERT_EQ(run(cmd_expand, o), kExitOk) << err_.str();
    const auto summary = json::parse(text(dir_ / "x" / "summary.json"));
    EXPECT_GT(summary.at("hv_delta").get<double>(), 0.0);

    const auto before = load_checkpoint(ckpt).model;
    const auto after = load_checkpoint(dir_ / "x" / "checkpoint.palora").model;
    for (std::size_t i = 0; i < before.layers().size(); ++i) {
        EXPECT_EQ(before.layers()[i].weight(), after.layers()[i].weight());
        EXPECT_EQ(before.layers()[i].bias(), after.layers()[i].bias());
    }

    o.config = config("x0", {{"train", {{"mode", "expand"}, {"epochs", 0}}}});
    ASSERT_EQ(run(cmd_expand, o), kExitOk);
    const auto flat = loss_rows(read_csv((dir_ / "x0" / "front.csv").string()));
    for (const auto& row : flat) EXPECT_EQ(row, flat.front());

    o.config = config("bad", {{"train", {{"mode", "expand"}}}, {"model", {{"alpha", 3.0}}}});
    EXPECT_EQ(run(cmd_expand, o), kExitConfigError);
    o.config = config("scratch");
    EXPECT_EQ(run(cmd_expand, o), kExitConfigError);
}

TEST_F(Workspace, ProbeMatchesBaseAndEvalEndpoints) {
    ASSERT_EQ(run(cmd_train, train_opts(config("t"))), kExitOk);
    const auto ckpt = (dir_ / "t" / "checkpoint.palora").string();
    CommandOptions o;
    o.checkpoint = ckpt;
    o.out_dir = (dir_ / "p").string();
    o.lambdas = "[[0,0],[1,0],[1,0],[-1,1],[0,1]]";
    ASSERT_EQ(run(cmd_probe, o), kExitOk) << err_.str();
    const auto table = read_csv((dir_ / "p" / "probe.csv").string());
    ASSERT_EQ(table.rows.size(), 5u);
    EXPECT_EQ(table.header.back(), "metric_2");
    EXPECT_EQ(table.rows[1], table.rows[2]);

    const auto ck = load_checkpoint(ckpt);
    const auto data = load_data(*ck.data);
    const auto base = ck.model.base_only().predict(data.val.inputs);
    EXPECT_EQ(table.rows[0][2], task_loss(base[0], data.val.targets[0]).loss);
    EXPECT_EQ(table.rows[0][3], task_loss(base[1], data.val.targets[1]).loss);

    const auto front = read_csv((dir_ / "t" / "front.csv").string());
    EXPECT_EQ(table.rows[1][2], front.rows.back()[2]);
    EXPECT_EQ(table.rows[4][3], front.rows.front()[3]);

    std::ofstream(dir_ / "lambdas.json") << "[[0.25, 0.75]]";
    o.lambdas = (dir_ / "lambdas.json").string();
    ASSERT_EQ(run(cmd_probe, o), kExitOk);
    EXPECT_EQ(read_csv((dir_ / "p" / "probe.csv").string()).rows.size(), 1u);

    o.lambdas = "[[1,0,0]]";
    EXPECT_EQ(run(cmd_probe, o), kExitConfigError);
    o.lambdas = "not json";
    EXPECT_EQ(run(cmd_probe, o), kExitConfigError);
}

TEST_F(Workspace, AblateRowCountAndAgreementWithTrain) {
    const json sweep = {{"sweep",
                         {{"m", {2, 3}},
                          {"alpha", {1.0}},
                          {"seeds", {1, 2}},
                          {"schedules",
                           {{{"mode", "deterministic"}, {"annealed", true}, {"temperature", 1.0}},
                            {{"mode", "dirichlet"}, {"annealed", false}, {"concentration", 1.0}}}}}},
                        {"train", {{"epochs", 2}}}};
    ASSERT_EQ(run(cmd_ablate, train_opts(config("ab", sweep))), kExitOk) << err_.str();
    const auto table = split_csv(text(dir_ / "ab" / "ablation.csv"));
    ASSERT_EQ(table.size(), 9u);
    EXPECT_EQ(table[0].size(), 11u);
    EXPECT_EQ(table[1][3], "deterministic");
    EXPECT_EQ(table[8][3], "dirichlet");

    // A 1x1 sweep reproduces the train command.
    const json one = {{"sweep", {{"m", {5}}, {"seeds", {1}}}}};
    ASSERT_EQ(run(cmd_ablate, train_opts(config("one", one))), kExitOk);
    ASSERT_EQ(run(cmd_train, train_opts(config("ref"))), kExitOk);
    const auto row = split_csv(text(dir_ / "one" / "ablation.csv")).at(1);
    const auto summary = json::parse(text(dir_ / "ref" / "summary.json"));
    EXPECT_EQ(std::stod(row[7]), summary.at("hv").get<double>());
    EXPECT_EQ(std::stod(row[8]), summary.at("alignment")[0].get<double>());
    EXPECT_EQ(std::stoul(row[10]), summary.at("nondominated_count").get<std::size_t>());

    EXPECT_EQ(run(cmd_ablate, train_opts((dir_ / "nope.json").string())), kExitConfigError);
}

TEST_F(Workspace, HvCommand) {
    std::ofstream(dir_ / "one.csv") << "loss_1,loss_2\n0.5,0.5\n";
    CommandOptions o;
    o.csv = (dir_ / "one.csv").string();
    o.ref = {1.0, 1.0};
    ASSERT_EQ(run(cmd_hv, o), kExitOk);
    EXPECT_EQ(json::parse(out_.str()).at("hv").get<double>(), 0.25);

    std::ofstream(dir_ / "f.csv") << "lambda_1,lambda_2,loss_1,loss_2\n1,0,0.2,0.8\n0,1,0.8,0.2\n0.5,0.5,0.9,0.9\n";
    std::ofstream(dir_ / "g.csv") << "lambda_1,lambda_2,loss_1,loss_2\n0.5,0.5,0.9,0.9\n0,1,0.8,0.2\n1,0,0.2,0.8\n";
    o.csv = (dir_ / "f.csv").string();
    ASSERT_EQ(run(cmd_hv, o), kExitOk);
    const auto a = json::parse(out_.str());
    EXPECT_DOUBLE_EQ(a.at("hv").get<double>(), 0.28);
    EXPECT_EQ(a.at("nondominated_count"), 2);
    o.csv = (dir_ / "g.csv").string();
    ASSERT_EQ(run(cmd_hv, o), kExitOk);
    EXPECT_EQ(json::parse(out_.str()).at("hv"), a.at("hv"));
    const auto mc = hypervolume_mc({{0.2, 0.8}, {0.8, 0.2}}, ObjectivePoint{1.0, 1.0}, 200000, 5);
    EXPECT_LT(std::abs(mc.estimate - 0.28), 4 * mc.std_error);

    std::ofstream(dir_ / "bad.csv") << "loss_1,loss_2\n0.5\n";
    o.csv = (dir_ / "bad.csv").string();
    EXPECT_EQ(run(cmd_hv, o), kExitConfigError);
    std::ofstream(dir_ / "text.csv") << "loss_1,loss_2\n0.5,abc\n";
    o.csv = (dir_ / "text.csv").string();
    EXPECT_EQ(run(cmd_hv, o), kExitConfigError);
    o.csv = (dir_ / "one.csv").string();
    o.ref = {1.0, 1.0, 1.0};
    EXPECT_EQ(run(cmd_hv, o), kExitConfigError);
}

TEST_F(Workspace, CliExitCodesAndDeterminism) {
    const auto cfg = config("cli", {{"train", {{"epochs", 2}}}});
    const auto a = (dir_ / "ra").string(), b = (dir_ / "rb").string();
    ASSERT_EQ(cli("train --config " + cfg + " --out " + a), 0) << text(dir_ / "cli.err");
    ASSERT_EQ(cli("train --config " + cfg + " --out " + b), 0);
    EXPECT_EQ(text(fs::path(a) / "front.csv"), text(fs::path(b) / "front.csv"));
    EXPECT_EQ(text(fs::path(a) / "checkpoint.palora"), text(fs::path(b) / "checkpoint.palora"));

    const auto ev1 = (dir_ / "ea").string(), ev2 = (dir_ / "eb").string();
    ASSERT_EQ(cli("eval --checkpoint " + a + "/checkpoint.palora --out " + ev1), 0);
    ASSERT_EQ(cli("eval --checkpoint " + a + "/checkpoint.palora --out " + ev2), 0);
    EXPECT_EQ(text(fs::path(ev1) / "front.csv"), text(fs::path(ev2) / "front.csv"));

    EXPECT_EQ(cli("hv " + ev1 + "/front.csv --ref 10,10"), 0);
    EXPECT_NE(text(dir_ / "cli.out").find("\"hv\""), std::string::npos);
    EXPECT_EQ(cli("eval --checkpoint " + (dir_ / "missing.palora").string()), 3);
    EXPECT_EQ(cli("train --config " + (dir_ / "missing.json").string()), 2);
    EXPECT_EQ(cli("train"), 2);
    EXPECT_EQ(cli("frobnicate"), 2);
    EXPECT_EQ(cli("hv " + ev1 + "/front.csv --ref 1,x"), 2);
    EXPECT_EQ(cli("--help"), 0);
}
