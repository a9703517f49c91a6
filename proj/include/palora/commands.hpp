// Copyright (c) 2026, The palora-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Implementation of the `palora` subcommands. Each command returns a process
// exit code:
//   0  success
//   1  training aborted (diverged loss, I/O failure, ...)
//   2  configuration or input parse error
//   3  checkpoint missing, corrupt or of an unsupported version

#pragma once

#include "palora/checkpoint.hpp"
#include "palora/config.hpp"
#include "palora/dataset.hpp"
#include "palora/metrics.hpp"
#include "palora/model.hpp"
#include "palora/trainer.hpp"

#include "json.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace palora {

inline constexpr int kExitOk = 0;
inline constexpr int kExitTrainingFailed = 1;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitCheckpointError = 3;

struct CommandOptions {
    std::string config;
    std::string checkpoint;
    std::string out_dir;                 // overrides the config's output directory
    std::optional<std::uint64_t> seed;   // overrides the config's seed
    std::optional<std::size_t> grid;
    ObjectivePoint ref;
    std::string lambdas;  // JSON list of preference vectors, or a path to one
    std::string csv;
};

// ---------------------------------------------------------------------------
// Formatting

/// Shortest form that round-trips is not required; 17 significant digits always is.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string front_csv(const std::vector<FrontRecord>& front, bool with_nondominated) {
    const std::size_t tasks = front.empty() ? 0 : front.front().losses.size();
    std::ostringstream os;
    std::string sep;
    for (const char* col : {"lambda_", "loss_", "metric_"}) {
        for (std::size_t t = 1; t <= tasks; ++t) {
            os << sep << col << t;
            sep = ",";
        }
    }
    if (with_nondominated) os << ",nondominated";
    os << '\n';
    std::vector<bool> nd(front.size(), false);
    if (with_nondominated && !front.empty()) {
        for (auto i : nondominated_filter(losses_of(front))) nd[i] = true;
    }
    for (std::size_t i = 0; i < front.size(); ++i) {
        const auto& r = front[i];
        sep.clear();
        for (double v : r.preference.weights()) os << std::exchange(sep, ",") << format_double(v);
        for (double v : r.losses) os << "," << format_double(v);
        for (double v : r.metrics) os << "," << format_double(v);
        if (with_nondominated) os << "," << (nd[i] ? 1 : 0);
        os << '\n';
    }
    return os.str();
}

inline std::string history_csv(const TrainHistory& history, std::size_t tasks) {
    std::ostringstream os;
    os << "epoch,mean_scalarized_loss";
    for (std::size_t t = 1; t <= tasks; ++t) os << ",uniform_loss_" << t;
    os << ",val_hv";
    for (std::size_t t = 1; t <= tasks; ++t) os << ",rho_" << t;
    os << '\n';
    for (const auto& row : history) {
        os << row.epoch << "," << format_double(row.mean_scalarized_loss);
        for (double v : row.uniform_losses) os << "," << format_double(v);
        os << "," << format_double(row.val_hv);
        for (double v : row.alignment) os << "," << format_double(v);
        os << '\n';
    }
    return os.str();
}

inline json summary_json(const FrontSummary& s, std::size_t grid_size) {
    return {{"hv", s.hv},
            {"hv_reference", s.reference},
            {"alignment", s.alignment},
            {"nondominated_count", s.nondominated},
            {"grid_size", grid_size}};
}

// ---------------------------------------------------------------------------
// Parsing helpers

/// "v1,v2[,v3]" -> point.
inline ObjectivePoint parse_point(const std::string& text) {
    ObjectivePoint out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            throw ConfigError("cannot parse number '" + item + "'");
        }
        if (item.find_first_not_of(" \t", used) != std::string::npos) throw ConfigError("cannot parse number '" + item + "'");
        out.push_back(v);
    }
    return out;
}

/// A JSON array of preference vectors, given inline or as a file path.
inline PreferenceSet parse_preferences(const std::string& text_or_path) {
    std::string text = text_or_path;
    if (std::filesystem::is_regular_file(text_or_path)) {
        std::ifstream in(text_or_path);
        text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    try {
        PreferenceSet out;
        for (const auto& v : json::parse(text)) out.emplace_back(v.get<std::vector<double>>());
        return out;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("cannot parse preference list: ") + e.what());
    }
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open csv '" + path + "'");
    CsvTable table;
    std::string line;
    auto split = [](const std::string& l) {
        std::vector<std::string> cells;
        std::stringstream ss(l);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        return cells;
    };
    if (!std::getline(in, line)) throw ConfigError("csv '" + path + "' is empty");
    table.header = split(line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = split(line);
        if (cells.size() != table.header.size()) {
            throw ConfigError("csv line " + std::to_string(lineno) + ": expected " +
                              std::to_string(table.header.size()) + " cells");
        }
        std::vector<double> row;
        for (const auto& c : cells) {
            const auto parsed = parse_point(c);
            if (parsed.size() != 1) throw ConfigError("csv line " + std::to_string(lineno) + ": bad cell '" + c + "'");
            row.push_back(parsed.front());
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

// ---------------------------------------------------------------------------
// Shared training path

struct RunOutputs {
    Model model;
    TrainHistory history;
    std::vector<FrontRecord> front;
    FrontSummary summary;
    std::optional<double> analytic_hv;
};

inline RunConfig apply_overrides(RunConfig cfg, const CommandOptions& opts) {
    if (opts.seed) {
        cfg.seed = *opts.seed;
        cfg.train.seed = *opts.seed;
        cfg.train.schedule.seed = *opts.seed;
    }
    if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
    return cfg;
}

inline RunOutputs run_training(const RunConfig& cfg, const DataSplits& data) {
    RunOutputs out;
    out.model = Model::build(cfg.model, cfg.seed);
    out.history = train(out.model, data.train, data.val, cfg.train);
    out.front = evaluate_front(out.model, data.val, eval_grid(cfg.model.num_tasks(), cfg.train.eval_grid_size));
    out.summary = summarize_front(out.front, cfg.train.hv_reference);
    if (data.problem) {
        out.analytic_hv = hypervolume(analytic_front(*data.problem, cfg.train.eval_grid_size), out.summary.reference);
    }
    return out;
}

inline json run_summary(const RunOutputs& run, const RunConfig& cfg) {
    json s = summary_json(run.summary, cfg.train.eval_grid_size);
    if (run.analytic_hv) s["analytic_hv"] = *run.analytic_hv;
    const auto pc = run.model.param_count();
    s["param_count"] = {{"base", pc.base}, {"bias", pc.bias}, {"adapters", pc.adapters}, {"total", pc.total()}};
    s["seed"] = cfg.seed;
    return s;
}

inline void write_run_files(const std::filesystem::path& dir, const RunOutputs& run, const RunConfig& cfg,
                            const json& summary) {
    Checkpoint ck{run.model, cfg.train.schedule, cfg.data, cfg.train};
    save_checkpoint(dir / "checkpoint.palora", ck);
    write_file_atomic(dir / "history.csv", history_csv(run.history, cfg.model.num_tasks()));
    write_file_atomic(dir / "front.csv", front_csv(run.front, true));
    write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Commands

inline int cmd_train(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    RunConfig cfg;
    DataSplits data;
    try {
        cfg = apply_overrides(load_run_config(opts.config), opts);
        if (cfg.train.mode != TrainMode::scratch) throw ConfigError("train: config mode must be scratch (use expand)");
        data = load_data(cfg.data);
    } catch (const std::exception& e) {
        err << "palora train: " << e.what() << '\n';
        return kExitConfigError;
    }
    try {
        const auto run = run_training(cfg, data);
        const auto summary = run_summary(run, cfg);
        write_run_files(cfg.output_dir, run, cfg, summary);
        out << summary.dump() << '\n';
    } catch (const std::exception& e) {
        err << "palora train: aborted: " << e.what() << '\n';
        return kExitTrainingFailed;
    }
    return kExitOk;
}

inline int cmd_eval(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    Checkpoint ck;
    try {
        ck = load_checkpoint(opts.checkpoint);
    } catch (const std::exception& e) {
        err << "palora eval: " << e.what() << '\n';
        return kExitCheckpointError;
    }
    try {
        if (!ck.data) throw ConfigError("checkpoint does not record its data source");
        const std::size_t k = opts.grid.value_or(ck.train ? ck.train->eval_grid_size : 11);
        const auto grid = eval_grid(ck.model.num_tasks(), k);
        ObjectivePoint ref = opts.ref;
        if (ref.empty() && ck.train) ref = ck.train->hv_reference;
        const auto data = load_data(*ck.data);
        const auto front = evaluate_front(ck.model, data.val, grid);
        const auto summary = summary_json(summarize_front(front, ref), grid.size());
        const std::filesystem::path dir = opts.out_dir.empty() ? "." : opts.out_dir;
        write_file_atomic(dir / "front.csv", front_csv(front, true));
        write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
        out << summary.dump() << '\n';
    } catch (const ConfigError& e) {
        err << "palora eval: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const std::exception& e) {
        err << "palora eval: " << e.what() << '\n';
        return kExitTrainingFailed;
    }
    return kExitOk;
}

inline int cmd_expand(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    Checkpoint ck;
    try {
        ck = load_checkpoint(opts.checkpoint);
    } catch (const std::exception& e) {
        err << "palora expand: " << e.what() << '\n';
        return kExitCheckpointError;
    }
    RunConfig cfg;
    DataSplits data;
    try {
        cfg = apply_overrides(load_run_config(opts.config), opts);
        if (cfg.train.mode != TrainMode::expand) throw ConfigError("expand: config train.mode must be expand");
        if (!(cfg.model == ck.model.spec())) throw ConfigError("expand: config model does not match the checkpoint");
        data = load_data(cfg.data);
    } catch (const std::exception& e) {
        err << "palora expand: " << e.what() << '\n';
        return kExitConfigError;
    }
    try {
        auto result = expand(ck.model, data.train, data.val, cfg.train);
        RunOutputs run;
        run.model = std::move(result.model);
        run.history = std::move(result.history);
        run.front = evaluate_front(run.model, data.val, eval_grid(cfg.model.num_tasks(), cfg.train.eval_grid_size));
        const auto start = evaluate_preference(ck.model, data.val, PreferenceVector::uniform(cfg.model.num_tasks()));
        ObjectivePoint ref = cfg.train.hv_reference;
        if (ref.empty()) {
            auto all = run.front;
            all.push_back(start);
            ref = auto_reference(all);
        }
        run.summary = summarize_front(run.front, ref);
        const double start_hv = hypervolume({start.losses}, ref);
        auto summary = run_summary(run, cfg);
        summary["checkpoint_hv"] = start_hv;
        summary["hv_delta"] = run.summary.hv - start_hv;
        write_run_files(cfg.output_dir, run, cfg, summary);
        out << summary.dump() << '\n';
    } catch (const std::exception& e) {
        err << "palora expand: aborted: " << e.what() << '\n';
        return kExitTrainingFailed;
    }
    return kExitOk;
}

inline int cmd_probe(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    Checkpoint ck;
    try {
        ck = load_checkpoint(opts.checkpoint);
    } catch (const std::exception& e) {
        err << "palora probe: " << e.what() << '\n';
        return kExitCheckpointError;
    }
    try {
        if (!ck.data) throw ConfigError("checkpoint does not record its data source");
        const auto pseudo = parse_preferences(opts.lambdas);
        for (const auto& p : pseudo) {
            if (p.size() != ck.model.num_tasks()) throw ConfigError("preference length does not match task count");
        }
        const auto data = load_data(*ck.data);
        const auto records = probe(ck.model, data.val, pseudo);
        const std::filesystem::path dir = opts.out_dir.empty() ? "." : opts.out_dir;
        const auto csv = front_csv(records, false);
        write_file_atomic(dir / "probe.csv", csv);
        out << csv;
    } catch (const ConfigError& e) {
        err << "palora probe: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const std::exception& e) {
        err << "palora probe: " << e.what() << '\n';
        return kExitTrainingFailed;
    }
    return kExitOk;
}

/// One point of an ablation sweep.
struct AblationRun {
    std::size_t m = 0;
    double alpha = 0.0;
    ScheduleConfig schedule;
    std::uint64_t seed = 0;
};

inline std::vector<AblationRun> ablation_grid(const json& sweep, const RunConfig& base) {
    const auto ms = sweep.value("m", std::vector<std::size_t>{base.train.schedule.samples_per_batch});
    const auto alphas = sweep.value("alpha", std::vector<double>{base.model.alpha});
    const auto seeds = sweep.value("seeds", std::vector<std::uint64_t>{base.seed});
    std::vector<ScheduleConfig> schedules;
    if (sweep.contains("schedules")) {
        for (const auto& s : sweep.at("schedules")) {
            schedules.push_back(schedule_from_json(s, base.model.num_tasks(), base.seed));
        }
    } else {
        schedules.push_back(base.train.schedule);
    }
    std::vector<AblationRun> runs;
    for (auto m : ms)
        for (double alpha : alphas)
            for (const auto& sch : schedules)
                for (auto seed : seeds) runs.push_back({m, alpha, sch, seed});
    return runs;
}

inline int cmd_ablate(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    RunConfig base;
    std::vector<AblationRun> runs;
    DataSplits data;
    try {
        const auto doc = read_json_file(opts.config);
        base = apply_overrides(run_config_from_json(doc), opts);
        runs = ablation_grid(doc.value("sweep", json::object()), base);
        data = load_data(base.data);
    } catch (const std::exception& e) {
        err << "palora ablate: " << e.what() << '\n';
        return kExitConfigError;
    }
    const std::size_t tasks = base.model.num_tasks();
    std::ostringstream csv;
    csv << "run_id,m,alpha,mode,annealed,temperature_or_p,seed,hv";
    for (std::size_t t = 1; t <= tasks; ++t) csv << ",rho_" << t;
    csv << ",nondominated_count\n";
    for (std::size_t id = 0; id < runs.size(); ++id) {
        const auto& r = runs[id];
        RunConfig cfg = base;
        cfg.seed = r.seed;
        cfg.model.alpha = r.alpha;
        cfg.train.seed = r.seed;
        cfg.train.schedule = r.schedule;
        cfg.train.schedule.samples_per_batch = r.m;
        cfg.train.schedule.seed = r.seed;
        const double knob = r.schedule.mode == SamplingMode::dirichlet ? r.schedule.concentration : r.schedule.temperature;
        csv << id << ',' << r.m << ',' << format_double(r.alpha) << ',' << to_string(r.schedule.mode) << ','
            << (r.schedule.annealed ? 1 : 0) << ',' << format_double(knob) << ',' << r.seed;
        try {
            const auto run = run_training(cfg, data);
            csv << ',' << format_double(run.summary.hv);
            for (double rho : run.summary.alignment) csv << ',' << format_double(rho);
            csv << ',' << run.summary.nondominated << '\n';
        } catch (const std::exception& e) {
            err << "palora ablate: run " << id << " failed: " << e.what() << '\n';
            csv << ",nan";
            for (std::size_t t = 0; t < tasks; ++t) csv << ",nan";
            csv << ",0\n";
        }
    }
    try {
        write_file_atomic(std::filesystem::path(base.output_dir) / "ablation.csv", csv.str());
    } catch (const std::exception& e) {
        err << "palora ablate: " << e.what() << '\n';
        return kExitTrainingFailed;
    }
    out << csv.str();
    return kExitOk;
}

inline int cmd_hv(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    try {
        const auto table = read_csv(opts.csv);
        std::vector<std::size_t> cols;
        for (std::size_t c = 0; c < table.header.size(); ++c) {
            if (table.header[c].rfind("loss_", 0) == 0) cols.push_back(c);
        }
        if (cols.empty()) {
            for (std::size_t c = 0; c < table.header.size(); ++c) cols.push_back(c);
        }
        if (table.rows.empty()) throw ConfigError("csv has no rows");
        std::vector<ObjectivePoint> pts;
        for (const auto& row : table.rows) {
            ObjectivePoint p;
            for (auto c : cols) p.push_back(row[c]);
            pts.push_back(std::move(p));
        }
        if (opts.ref.size() != cols.size()) {
            throw ConfigError("reference point has " + std::to_string(opts.ref.size()) + " coordinates, csv has " +
                              std::to_string(cols.size()) + " loss columns");
        }
        const json result = {{"hv", hypervolume(pts, opts.ref)},
                             {"nondominated_count", nondominated_filter(pts).size()},
                             {"reference", opts.ref}};
        out << result.dump() << '\n';
    } catch (const std::exception& e) {
        err << "palora hv: " << e.what() << '\n';
        return kExitConfigError;
    }
    return kExitOk;
}

}  // namespace palora
