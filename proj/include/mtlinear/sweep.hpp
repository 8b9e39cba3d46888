#pragma once

#include "mtlinear/eval.hpp"
#include "mtlinear/trainer.hpp"

#include <cmath>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

namespace mtlinear {

struct SweepConfig {
    std::string dataset;
    TrainConfig base;
    std::vector<std::size_t> horizons{96, 192, 336, 720};
    std::vector<std::uint64_t> seeds{2021, 2022, 2023};
    bool grid = true;
    std::vector<double> alpha_grid = default_alpha_grid();
    std::vector<double> a_grid = default_a_grid();
    std::size_t jobs = 1;
};

/// One (horizon, seed) run: the grid winner (or the single configured cell) scored on test.
struct SweepCell {
    std::size_t horizon = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    MetricRecord record;
    std::optional<GridResult> grid;
    std::optional<HeadEnsemble> ensemble;
};

struct HorizonRow {
    std::size_t horizon = 0;  // 0 marks the averaged row
    double mse_mean = 0;
    double mse_std = 0;
    double mae_mean = 0;
    double mae_std = 0;
    std::size_t runs = 0;
};

struct SweepResult {
    std::vector<SweepCell> cells;  // horizon-major, then seed
    std::vector<HorizonRow> rows;
    std::optional<HorizonRow> average;
};

/// Population mean and std.
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    double m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

inline SweepCell run_sweep_cell(const SeriesFrame& frame, const SweepConfig& config, std::size_t horizon,
                                std::uint64_t seed, std::size_t jobs) {
    SweepCell cell;
    cell.horizon = horizon;
    cell.seed = seed;
    TrainConfig tc = config.base;
    tc.horizon = horizon;
    tc.seed = seed;
    tc.jobs = jobs;
    try {
        HeadEnsemble ensemble;
        if (config.grid) {
            GridResult grid = grid_search(frame, tc, config.alpha_grid, config.a_grid, jobs);
            if (!grid.best) throw Error("every grid cell failed");
            const GridCell& best = grid.cells[*grid.best];
            tc.alpha_bar = best.alpha_bar;
            tc.a = best.a;
            ensemble = *grid.best_ensemble;
            grid.best_ensemble.reset();
            cell.grid = std::move(grid);
        } else {
            ensemble = train(frame, tc, nullptr, nullptr).ensemble;
        }
        cell.record = evaluate(ensemble, frame, Split::test);
        cell.record.dataset = config.dataset;
        cell.record.variant = tc.variant;
        cell.record.alpha_bar = tc.alpha_bar;
        cell.record.a = tc.a;
        cell.record.seed = seed;
        cell.ok = std::isfinite(cell.record.mse);
        if (!cell.ok) cell.error = "non-finite test metric";
        cell.ensemble = std::move(ensemble);
    } catch (const std::exception& e) {
        cell.error = e.what();
    }
    return cell;
}

/// Trains and scores every (horizon, seed) cell, then summarizes per horizon (mean +- std over
/// seeds) and across horizons.
inline SweepResult horizon_sweep(const SeriesFrame& frame, const SweepConfig& config) {
    if (config.horizons.empty() || config.seeds.empty()) throw Error("sweep needs at least one horizon and one seed");
    SweepResult result;
    result.cells.resize(config.horizons.size() * config.seeds.size());
    const std::size_t n = result.cells.size();
    const std::size_t outer = std::min(config.jobs, n);
    const std::size_t inner = outer > 1 ? 1 : config.jobs;
    parallel_for(n, outer, [&](std::size_t c) {
        result.cells[c] = run_sweep_cell(frame, config, config.horizons[c / config.seeds.size()],
                                         config.seeds[c % config.seeds.size()], inner);
    });

    std::vector<double> mse_means, mae_means, mse_stds, mae_stds;
    for (std::size_t hi = 0; hi < config.horizons.size(); ++hi) {
        std::vector<double> mse, mae;
        for (std::size_t si = 0; si < config.seeds.size(); ++si) {
            const SweepCell& cell = result.cells[hi * config.seeds.size() + si];
            if (!cell.ok) continue;
            mse.push_back(cell.record.mse);
            mae.push_back(cell.record.mae);
        }
        if (mse.empty()) continue;
        HorizonRow row{config.horizons[hi]};
        std::tie(row.mse_mean, row.mse_std) = mean_std(mse);
        std::tie(row.mae_mean, row.mae_std) = mean_std(mae);
        row.runs = mse.size();
        result.rows.push_back(row);
        mse_means.push_back(row.mse_mean);
        mae_means.push_back(row.mae_mean);
        mse_stds.push_back(row.mse_std);
        mae_stds.push_back(row.mae_std);
    }
    if (!result.rows.empty()) {
        HorizonRow avg;
        avg.mse_mean = mean_std(mse_means).first;
        avg.mae_mean = mean_std(mae_means).first;
        avg.mse_std = mean_std(mse_stds).first;
        avg.mae_std = mean_std(mae_stds).first;
        avg.runs = result.rows.size();
        result.average = avg;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Comparison tables

struct ComparisonRow {
    std::string key;
    double ours = 0;
    double baseline = 0;
    std::optional<double> improvement;  // percent; empty when the baseline is zero
};

struct ComparisonTable {
    std::string metric = "MSE";
    std::vector<ComparisonRow> rows;
};

inline std::optional<double> improvement_percent(double ours, double baseline) {
    if (baseline == 0 || !std::isfinite(baseline)) return std::nullopt;
    return (baseline - ours) / baseline * 100.0;
}

/// Joins two keyed result sets; any key present on one side only is an error.
inline ComparisonTable compare_table(const std::map<std::string, double>& ours,
                                     const std::map<std::string, double>& baseline, std::string metric = "MSE") {
    std::vector<std::string> missing;
    for (const auto& [k, v] : ours)
        if (!baseline.count(k)) missing.push_back(k + " (baseline)");
    for (const auto& [k, v] : baseline)
        if (!ours.count(k)) missing.push_back(k + " (ours)");
    if (!missing.empty()) {
        std::string msg = "comparison tables have mismatched cells:";
        for (const auto& m : missing) msg += " " + m;
        throw Error(msg);
    }
    ComparisonTable table{std::move(metric), {}};
    for (const auto& [k, v] : ours) table.rows.push_back({k, v, baseline.at(k), improvement_percent(v, baseline.at(k))});
    return table;
}

inline std::string record_key(const MetricRecord& r) { return r.dataset + "/" + std::to_string(r.horizon); }

inline ComparisonTable compare_table(const std::vector<MetricRecord>& records, const std::vector<MetricRecord>& baseline,
                                     bool use_mae = false) {
    std::map<std::string, double> a, b;
    for (const auto& r : records) a[record_key(r)] = use_mae ? r.mae : r.mse;
    for (const auto& r : baseline) b[record_key(r)] = use_mae ? r.mae : r.mse;
    return compare_table(a, b, use_mae ? "MAE" : "MSE");
}

inline std::string format_fixed(double v, int precision) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision) << v;
    return os.str();
}

inline std::string format_improvement(const std::optional<double>& imp) {
    return imp ? format_fixed(*imp, 1) + "%" : "N/A";
}

/// Renders rows of cells as an aligned plain-text table or a Markdown table.
inline std::string render_grid(const std::vector<std::vector<std::string>>& cells, bool markdown) {
    if (cells.empty()) return {};
    std::vector<std::size_t> width(cells.front().size(), 0);
    for (const auto& row : cells)
        for (std::size_t c = 0; c < row.size() && c < width.size(); ++c) width[c] = std::max(width[c], row[c].size());
    std::ostringstream os;
    for (std::size_t r = 0; r < cells.size(); ++r) {
        if (markdown) os << "|";
        for (std::size_t c = 0; c < width.size(); ++c) {
            const std::string& v = c < cells[r].size() ? cells[r][c] : std::string();
            if (markdown) os << " " << v << std::string(width[c] - v.size(), ' ') << " |";
            else os << (c ? "  " : "") << v << std::string(width[c] - v.size(), ' ');
        }
        os << "\n";
        if (r == 0) {
            if (markdown) {
                os << "|";
                for (auto w : width) os << std::string(w + 2, '-') << "|";
            } else {
                for (std::size_t c = 0; c < width.size(); ++c) os << (c ? "  " : "") << std::string(width[c], '-');
            }
            os << "\n";
        }
    }
    return os.str();
}

inline std::string render(const ComparisonTable& table, bool markdown) {
    std::vector<std::vector<std::string>> cells{{"Dataset", "Ours " + table.metric, "Baseline " + table.metric, "% Imp"}};
    for (const auto& r : table.rows)
        cells.push_back({r.key, format_fixed(r.ours, 3), format_fixed(r.baseline, 3), format_improvement(r.improvement)});
    return render_grid(cells, markdown);
}

inline std::string render(const SweepResult& sweep, bool markdown) {
    std::vector<std::vector<std::string>> cells{{"Horizon", "MSE", "MSE std", "MAE", "MAE std", "Runs"}};
    auto add = [&](const HorizonRow& r, std::string label) {
        cells.push_back({std::move(label), format_fixed(r.mse_mean, 3), format_fixed(r.mse_std, 3),
                         format_fixed(r.mae_mean, 3), format_fixed(r.mae_std, 3), std::to_string(r.runs)});
    };
    for (const auto& r : sweep.rows) add(r, std::to_string(r.horizon));
    if (sweep.average) add(*sweep.average, "Avg");
    return render_grid(cells, markdown);
}

} // namespace mtlinear
