#pragma once

#include "mtlinear/diagnostics.hpp"
#include "mtlinear/grouping.hpp"
#include "mtlinear/models.hpp"
#include "mtlinear/sweep.hpp"
#include "mtlinear/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace mtlinear {

using json = nlohmann::json;

inline constexpr int kCheckpointVersion = 1;

inline json to_json(const Matrix& m) {
    json rows = json::array();
    for (Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_json(const json& j) {
    if (!j.is_array() || j.empty()) throw Error("expected a non-empty matrix");
    Matrix m(static_cast<Index>(j.size()), static_cast<Index>(j.front().size()));
    for (Index r = 0; r < m.rows(); ++r) {
        const auto& row = j.at(static_cast<std::size_t>(r));
        if (row.size() != static_cast<std::size_t>(m.cols())) throw Error("ragged matrix in checkpoint");
        for (Index c = 0; c < m.cols(); ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
    return m;
}

/// Finite doubles as numbers, everything else as null.
inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json to_json(const VariateGrouping& g) {
    json merges = json::array();
    for (const auto& m : g.merges) merges.push_back({{"a", m.a}, {"b", m.b}, {"height", m.height}});
    return {{"alpha_bar", g.alpha_bar}, {"d_alpha", g.d_alpha}, {"clusters", g.clusters}, {"merges", merges}};
}

inline VariateGrouping grouping_from_json(const json& j) {
    VariateGrouping g;
    g.alpha_bar = j.at("alpha_bar").get<double>();
    g.d_alpha = j.at("d_alpha").get<double>();
    g.clusters = j.at("clusters").get<std::vector<std::vector<std::size_t>>>();
    for (const auto& m : j.value("merges", json::array()))
        g.merges.push_back({m.at("a").get<std::size_t>(), m.at("b").get<std::size_t>(), m.at("height").get<double>()});
    return g;
}

inline json to_json(const LinearHead& head) {
    json j{{"variant", to_string(head.variant)}, {"l", head.lookback}, {"h", head.horizon}, {"use_bias", head.use_bias}};
    if (head.variant == Variant::dlinear) {
        j["ma_kernel"] = head.ma_kernel;
        j["theta_trend"] = to_json(head.theta_trend());
        j["theta_remainder"] = to_json(head.theta_remainder());
    } else {
        j["theta"] = to_json(head.theta());
    }
    return j;
}

inline LinearHead head_from_json(const json& j) {
    LinearHead head;
    head.variant = parse_variant(j.at("variant").get<std::string>());
    head.lookback = j.at("l").get<std::size_t>();
    head.horizon = j.at("h").get<std::size_t>();
    head.use_bias = j.value("use_bias", true);
    head.ma_kernel = j.value("ma_kernel", kDefaultMovingAverage);
    if (head.variant == Variant::dlinear) {
        head.weights = {matrix_from_json(j.at("theta_trend")), matrix_from_json(j.at("theta_remainder"))};
    } else {
        head.weights = {matrix_from_json(j.at("theta"))};
    }
    head.validate();
    return head;
}

inline json to_json(const HeadEnsemble& e) {
    json heads = json::array();
    for (const auto& h : e.heads) heads.push_back(to_json(h));
    return {{"format", "mtlinear-checkpoint"},
            {"version", kCheckpointVersion},
            {"variant", e.heads.empty() ? "linear" : std::string(to_string(e.heads.front().variant))},
            {"l", e.lookback},
            {"h", e.horizon},
            {"grouping", to_json(e.grouping)},
            {"heads", heads}};
}

inline HeadEnsemble ensemble_from_json(const json& j) {
    if (j.value("format", "") != "mtlinear-checkpoint") throw Error("not an mtlinear checkpoint");
    if (j.value("version", 0) != kCheckpointVersion)
        throw Error("unsupported checkpoint version " + std::to_string(j.value("version", 0)));
    HeadEnsemble e;
    e.lookback = j.at("l").get<std::size_t>();
    e.horizon = j.at("h").get<std::size_t>();
    e.grouping = grouping_from_json(j.at("grouping"));
    for (const auto& h : j.at("heads")) e.heads.push_back(head_from_json(h));
    e.validate();
    return e;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw Error("failed writing '" + path.string() + "'");
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void save_checkpoint(const std::filesystem::path& path, const HeadEnsemble& e) {
    write_text(path, to_json(e).dump(1) + "\n");
}

inline HeadEnsemble load_checkpoint(const std::filesystem::path& path) {
    try {
        return ensemble_from_json(json::parse(read_text(path)));
    } catch (const json::exception& ex) {
        throw Error("malformed checkpoint '" + path.string() + "': " + ex.what());
    }
}

inline json to_json(const GroupReport& r) {
    json merges = json::array();
    for (const auto& m : r.merges) merges.push_back({{"a", m.a}, {"b", m.b}, {"height", m.height}});
    return {{"alpha_bar", r.alpha_bar},
            {"d_alpha", r.d_alpha},
            {"clusters", r.clusters},
            {"max_internal_distance", r.max_internal_distance},
            {"merges", merges}};
}

inline json to_json(const LogRecord& r) {
    return {{"epoch", r.epoch},           {"head", r.head},         {"train_loss", number_or_null(r.train_loss)},
            {"val_mse", number_or_null(r.val_mse)}, {"grad_norm", number_or_null(r.grad_norm)},
            {"stopped", r.stopped},       {"diverged", r.diverged}};
}

inline std::string log_lines(const std::vector<LogRecord>& log) {
    std::string out;
    for (const auto& r : log) out += to_json(r).dump() + "\n";
    return out;
}

inline json to_json(const MetricRecord& r) {
    return {{"dataset", r.dataset}, {"variant", to_string(r.variant)}, {"alpha_bar", r.alpha_bar}, {"a", r.a},
            {"lookback", r.lookback}, {"horizon", r.horizon}, {"mse", number_or_null(r.mse)},
            {"mae", number_or_null(r.mae)}, {"seed", r.seed}};
}

inline std::string csv_number(double v) {
    if (!std::isfinite(v)) return "nan";
    return json(v).dump();  // shortest round-trip representation
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
}

inline std::string metrics_csv(const std::vector<MetricRecord>& records) {
    std::string out = "dataset,variant,alpha_bar,a,lookback,horizon,mse,mae,seed\n";
    for (const auto& r : records) {
        out += csv_field(r.dataset) + "," + std::string(to_string(r.variant)) + "," + csv_number(r.alpha_bar) + "," +
               csv_number(r.a) + "," + std::to_string(r.lookback) + "," + std::to_string(r.horizon) + "," +
               csv_number(r.mse) + "," + csv_number(r.mae) + "," + std::to_string(r.seed) + "\n";
    }
    return out;
}

inline std::string grid_csv(const GridResult& grid) {
    std::string out = "alpha_bar,a,groups,val_mse,test_mse,test_mae,ok,selected,error\n";
    for (std::size_t c = 0; c < grid.cells.size(); ++c) {
        const auto& cell = grid.cells[c];
        out += csv_number(cell.alpha_bar) + "," + csv_number(cell.a) + "," + std::to_string(cell.groups) + "," +
               csv_number(cell.val_mse) + "," + csv_number(cell.test_mse) + "," + csv_number(cell.test_mae) + "," +
               (cell.ok ? "1" : "0") + "," + (grid.best == c ? "1" : "0") + "," + csv_field(cell.error) + "\n";
    }
    return out;
}

inline json to_json(const HorizonRow& r) {
    return {{"horizon", r.horizon},       {"mse", number_or_null(r.mse_mean)}, {"mse_std", number_or_null(r.mse_std)},
            {"mae", number_or_null(r.mae_mean)}, {"mae_std", number_or_null(r.mae_std)}, {"runs", r.runs}};
}

inline json to_json(const SweepResult& s) {
    json cells = json::array();
    for (const auto& c : s.cells) {
        json cell{{"horizon", c.horizon}, {"seed", c.seed}, {"ok", c.ok}};
        if (c.ok) cell["record"] = to_json(c.record);
        else cell["error"] = c.error;
        if (c.grid && c.grid->best) {
            const auto& best = c.grid->cells[*c.grid->best];
            cell["selected"] = {{"alpha_bar", best.alpha_bar}, {"a", best.a}, {"val_mse", best.val_mse}};
        }
        cells.push_back(std::move(cell));
    }
    json rows = json::array();
    for (const auto& r : s.rows) rows.push_back(to_json(r));
    json out{{"cells", cells}, {"rows", rows}};
    if (s.average) out["average"] = to_json(*s.average);
    return out;
}

inline std::string conflict_csv(const ConflictReport& report, const std::vector<std::string>& names) {
    std::string out = "variate_a,variate_b,abs_corr,conflicts_total\n";
    for (const auto& p : report.pairs)
        out += csv_field(names.at(p.a)) + "," + csv_field(names.at(p.b)) + "," + csv_number(p.abs_corr) + "," +
               std::to_string(p.conflicts) + "\n";
    return out;
}

/// Per-epoch conflict totals plus per-pair increments, for external plotting.
inline json conflict_series_json(const ConflictLedger& ledger, const std::vector<std::string>& names) {
    json epochs = json::array();
    for (std::size_t e = 0; e < ledger.per_epoch.size(); ++e) {
        const auto& m = ledger.per_epoch[e];
        json pairs = json::array();
        for (Index a = 0; a < m.rows(); ++a)
            for (Index b = a + 1; b < m.cols(); ++b)
                if (m(a, b)) pairs.push_back({{"a", names.at(static_cast<std::size_t>(a))},
                                              {"b", names.at(static_cast<std::size_t>(b))},
                                              {"conflicts", m(a, b)}});
        epochs.push_back({{"epoch", e + 1}, {"conflicts", m.sum() / 2}, {"pairs", pairs}});
    }
    return {{"total", ledger.total()}, {"epochs", epochs}};
}

inline std::string grad_error_csv(const std::vector<GradErrorRecord>& trace, const std::vector<std::string>& names) {
    std::string out = "variate,epoch,step,error,grad_norm\n";
    for (const auto& r : trace)
        out += csv_field(names.at(r.variate)) + "," + std::to_string(r.epoch) + "," + std::to_string(r.step) + "," +
               csv_number(r.error) + "," + csv_number(r.grad_norm) + "\n";
    return out;
}

} // namespace mtlinear
