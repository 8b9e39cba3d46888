// Command-line front end: train, evaluate, bench, groups, conflicts.

#include "mtlinear/mtlinear.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace fs = std::filesystem;
using namespace mtlinear;

namespace {

SeriesFrame load_frame(const RunConfig& cfg) {
    if (!fs::exists(cfg.dataset_path)) throw Error("dataset file not found: '" + cfg.dataset_path.string() + "'");
    SeriesFrame frame = load_csv(cfg.dataset_path, cfg.date_column, cfg.split);
    if (cfg.normalize) frame = normalized(std::move(frame), fit_normalizer(frame));
    return frame;
}

/// Refuses to reuse a populated output directory unless forced; forced runs clear our artifacts.
void prepare_output(const fs::path& out, bool force) {
    if (fs::exists(out) && !fs::is_empty(out)) {
        if (!force) throw ConfigError("output directory '" + out.string() + "' is not empty; pass --force to overwrite");
        for (const char* item : {"checkpoints", "logs", "reports", "results.csv", "results.json", "config.resolved"})
            fs::remove_all(out / item);
    }
    fs::create_directories(out / "checkpoints");
    fs::create_directories(out / "logs");
    fs::create_directories(out / "reports");
}

void write_conflict_reports(const fs::path& out, const SeriesFrame& frame, const DiagnosticsRecorder& rec) {
    ConflictLedger ledger = rec.ledger();
    SimilarityMatrix sim = correlation_matrix(frame, nullptr);
    ConflictReport report = correlation_vs_conflict_report(ledger, sim);
    write_text(out / "reports" / "conflicts.csv", conflict_csv(report, frame.variate_names));
    json series = conflict_series_json(ledger, frame.variate_names);
    series["rank_correlation"] = number_or_null(report.rank_correlation);
    write_text(out / "reports" / "conflicts_epochs.json", series.dump(1) + "\n");
    write_text(out / "reports" / "grad_error.csv", grad_error_csv(rec.trace(), frame.variate_names));
    std::cout << "conflicts: " << ledger.total() << " total over " << report.pairs.size()
              << " pairs; rank correlation |corr| vs conflicts = "
              << (std::isfinite(report.rank_correlation) ? format_fixed(report.rank_correlation, 4) : "n/a") << "\n";
}

int cmd_train(const RunConfig& cfg, bool force, bool diagnostics) {
    SeriesFrame frame = load_frame(cfg);
    prepare_output(cfg.out, force);
    write_text(cfg.out / "config.resolved", serialize(cfg, frame.split));

    DiagnosticsRecorder recorder(cfg.diagnostics_mode);
    TrainResult result = train(frame, cfg.train, diagnostics ? &recorder : nullptr);
    save_checkpoint(cfg.out / "checkpoints" / "model.json", result.ensemble);
    write_text(cfg.out / "logs" / "train.jsonl", log_lines(result.log));

    SimilarityMatrix sim = correlation_matrix(frame, nullptr);
    GroupReport groups = grouping_report(result.ensemble.grouping, frame.variate_names, &sim);
    write_text(cfg.out / "reports" / "groups.json", to_json(groups).dump(1) + "\n");

    MetricRecord rec = evaluate(result.ensemble, frame, Split::test);
    rec.dataset = cfg.dataset_name();
    rec.a = cfg.train.a;
    rec.seed = cfg.train.seed;
    write_text(cfg.out / "results.csv", metrics_csv({rec}));
    write_text(cfg.out / "results.json", json::array({to_json(rec)}).dump(1) + "\n");
    if (diagnostics) write_conflict_reports(cfg.out, frame, recorder);

    std::cout << cfg.dataset_name() << " " << to_string(cfg.train.variant) << " l=" << cfg.train.lookback
              << " h=" << cfg.train.horizon << " groups=" << result.ensemble.heads.size()
              << " test mse=" << format_fixed(rec.mse, 4) << " mae=" << format_fixed(rec.mae, 4) << "\n";
    return 0;
}

int cmd_evaluate(const RunConfig& cfg, const fs::path& checkpoint, const std::string& split_name, bool write_out,
                 bool force) {
    Split split = split_name == "train" ? Split::train : split_name == "val" ? Split::val : Split::test;
    SeriesFrame frame = load_frame(cfg);
    HeadEnsemble ensemble = load_checkpoint(checkpoint);
    MetricRecord rec = evaluate(ensemble, frame, split);
    rec.dataset = cfg.dataset_name();
    if (write_out) {
        prepare_output(cfg.out, force);
        write_text(cfg.out / "config.resolved", serialize(cfg, frame.split));
        write_text(cfg.out / "results.csv", metrics_csv({rec}));
    }
    std::cout << to_json(rec).dump() << "\n";
    return 0;
}

int cmd_bench(const RunConfig& cfg, bool force) {
    SeriesFrame frame = load_frame(cfg);
    prepare_output(cfg.out, force);
    write_text(cfg.out / "config.resolved", serialize(cfg, frame.split));

    SweepResult sweep = horizon_sweep(frame, cfg.sweep());
    std::vector<MetricRecord> records;
    std::size_t failed = 0;
    for (const auto& cell : sweep.cells) {
        const std::string tag = "h" + std::to_string(cell.horizon) + "_seed" + std::to_string(cell.seed);
        if (cell.grid) write_text(cfg.out / "reports" / ("grid_" + tag + ".csv"), grid_csv(*cell.grid));
        if (!cell.ok) {
            ++failed;
            std::cerr << "cell " << tag << " failed: " << cell.error << "\n";
            continue;
        }
        records.push_back(cell.record);
        save_checkpoint(cfg.out / "checkpoints" / (tag + ".json"), *cell.ensemble);
    }
    write_text(cfg.out / "results.csv", metrics_csv(records));
    write_text(cfg.out / "results.json", to_json(sweep).dump(1) + "\n");
    const std::string text = render(sweep, false);
    write_text(cfg.out / "reports" / "summary.txt", text);
    write_text(cfg.out / "reports" / "summary.md", render(sweep, true));
    std::cout << cfg.dataset_name() << " " << to_string(cfg.train.variant) << " l=" << cfg.train.lookback << "\n" << text;
    return failed == sweep.cells.size() ? 1 : 0;
}

int cmd_groups(const RunConfig& cfg, bool force) {
    SeriesFrame frame = load_frame(cfg);
    prepare_output(cfg.out, force);
    write_text(cfg.out / "config.resolved", serialize(cfg, frame.split));

    std::vector<double> alphas = cfg.alpha_grid;
    alphas.push_back(0.0);
    std::sort(alphas.begin(), alphas.end());
    alphas.erase(std::unique(alphas.begin(), alphas.end()), alphas.end());

    SimilarityMatrix sim = correlation_matrix(frame);
    json reports = json::array();
    std::string csv = "dataset,alpha_bar,d_alpha,groups\n";
    std::cout << cfg.dataset_name() << ":";
    for (double alpha : alphas) {
        VariateGrouping g = cluster(sim, alpha);
        reports.push_back(to_json(grouping_report(g, frame.variate_names, &sim)));
        csv += csv_field(cfg.dataset_name()) + "," + csv_number(alpha) + "," + csv_number(g.d_alpha) + "," +
               std::to_string(g.clusters.size()) + "\n";
        std::cout << " " << g.clusters.size();
    }
    std::cout << "\n";
    write_text(cfg.out / "reports" / "groups.json",
               json{{"dataset", cfg.dataset_name()}, {"groupings", reports}}.dump(1) + "\n");
    write_text(cfg.out / "reports" / "group_counts.csv", csv);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-head linear forecasting over correlated variate groups"};
    app.require_subcommand(1);

    Settings flags;
    std::string config_file;
    bool force = false;
    std::string checkpoint;
    std::string eval_split = "test";

    auto setting = [&flags](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
        sub->add_option_function<std::string>(flag, [&flags, key](const std::string& v) { flags[key] = v; }, help)
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    };
    auto toggle = [&flags](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& value,
                           const std::string& help) {
        sub->add_flag_callback(flag, [&flags, key, value] { flags[key] = value; }, help);
    };
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_file, "key = value settings file (flags win)");
        setting(sub, "--dataset", "dataset", "dataset CSV (relative paths also tried under $MTLINEAR_DATA_DIR)");
        setting(sub, "--date-column", "date_column", "name of the date column (default: date)");
        setting(sub, "--variant", "variant", "linear | nlinear | dlinear | rlinear");
        setting(sub, "--lookback", "lookback", "input window length (default 96, ILI 36)");
        setting(sub, "--horizons", "horizons", "comma-separated forecast horizons");
        setting(sub, "--alpha-bar", "alpha_bar", "grouping angle(s), e.g. pi/4 or pi/2,pi/3");
        setting(sub, "--a", "a", "penalty exponent(s), e.g. 1 or 1,2");
        toggle(sub, "--grid", "grid", "true", "grid-search alpha_bar x a (default grid unless given)");
        toggle(sub, "--no-grid", "grid", "false", "disable grid search");
        setting(sub, "--seeds", "seeds", "comma-separated seeds");
        setting(sub, "--seed", "seeds", "single seed");
        setting(sub, "--jobs", "jobs", "worker threads (default: all cores)");
        setting(sub, "--out", "out", "output directory");
        toggle(sub, "--diagnostics", "diagnostics", "true", "record gradient conflicts during training");
        setting(sub, "--diagnostics-mode", "diagnostics_mode", "per_step | probe_epoch");
        setting(sub, "--lr", "lr", "learning rate (default 0.01)");
        setting(sub, "--batch", "batch", "batch size (default 32)");
        setting(sub, "--epochs", "max_epochs", "maximum epochs (default 20)");
        setting(sub, "--patience", "patience", "early-stopping patience (default 3)");
        setting(sub, "--optimizer", "optimizer", "adam | sgd");
        setting(sub, "--ma-kernel", "ma_kernel", "DLinear moving-average kernel (default 25)");
        setting(sub, "--penalty-ema", "penalty_ema", "EMA factor for the error matrix (0 = per batch)");
        toggle(sub, "--no-bias", "use_bias", "false", "train heads without a bias row");
        toggle(sub, "--lr-halving", "lr_halving", "true", "halve the learning rate every epoch");
        toggle(sub, "--no-normalize", "normalize", "false", "skip per-variate standardization");
        setting(sub, "--train-frac", "split.train_frac", "train fraction of rows");
        setting(sub, "--val-frac", "split.val_frac", "validation fraction of rows");
        sub->add_flag("--force", force, "overwrite a non-empty output directory");
    };

    auto* train_cmd = app.add_subcommand("train", "group variates, train one head per group, write a checkpoint");
    auto* eval_cmd = app.add_subcommand("evaluate", "score a checkpoint on a split");
    auto* bench_cmd = app.add_subcommand("bench", "horizon sweep over seeds with grid search");
    auto* groups_cmd = app.add_subcommand("groups", "variate group counts for each alpha_bar");
    auto* conflicts_cmd = app.add_subcommand("conflicts", "train with gradient-conflict diagnostics");
    for (auto* sub : {train_cmd, eval_cmd, bench_cmd, groups_cmd, conflicts_cmd}) common(sub);
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint JSON")->required();
    eval_cmd->add_option("--split", eval_split, "train | val | test")->check(CLI::IsMember({"train", "val", "test"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        Settings settings;
        if (!config_file.empty()) settings = load_settings(config_file);
        for (const auto& [k, v] : flags) settings[k] = v;
        const bool grid_default = bench_cmd->parsed() || groups_cmd->parsed();
        RunConfig cfg = resolve(settings, grid_default);

        if (train_cmd->parsed()) return cmd_train(cfg, force, cfg.diagnostics);
        if (conflicts_cmd->parsed()) return cmd_train(cfg, force, true);
        if (eval_cmd->parsed()) return cmd_evaluate(cfg, checkpoint, eval_split, flags.count("out") > 0, force);
        if (bench_cmd->parsed()) return cmd_bench(cfg, force);
        if (groups_cmd->parsed()) return cmd_groups(cfg, force);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
