#pragma once

#include "mtlinear/data.hpp"
#include "mtlinear/models.hpp"

#include <cmath>

namespace mtlinear {

struct MetricRecord {
    std::string dataset;
    Variant variant = Variant::linear;
    double alpha_bar = 0;
    double a = 0;
    std::size_t lookback = 0;
    std::size_t horizon = 0;
    double mse = 0;
    double mae = 0;
    std::uint64_t seed = 0;
};

struct ErrorSums {
    double squared = 0;
    double absolute = 0;
    double count = 0;

    ErrorSums& operator+=(const ErrorSums& o) {
        squared += o.squared;
        absolute += o.absolute;
        count += o.count;
        return *this;
    }
};

/// Squared/absolute residual sums of one head over every window of a split.
inline ErrorSums head_errors(const LinearHead& head, const SeriesFrame& frame, Split split,
                             const std::vector<std::size_t>& cluster, std::size_t chunk = 256) {
    std::vector<Index> cols(cluster.begin(), cluster.end());
    WindowStream stream(frame, split, head.lookback, head.horizon, chunk, std::nullopt, std::move(cols));
    ErrorSums sums;
    WindowBatch batch;
    while (stream.next(batch)) {
        Design d = build_design(head, batch);
        Matrix r = design_forecast(head, d) - d.targets;
        sums.squared += r.array().square().sum();
        sums.absolute += r.array().abs().sum();
        sums.count += static_cast<double>(r.size());
    }
    return sums;
}

/// MSE and MAE over all windows, variates and horizon steps of a split (normalized scale).
inline MetricRecord evaluate(const HeadEnsemble& ensemble, const SeriesFrame& frame, Split split) {
    if (ensemble.variates() != static_cast<std::size_t>(frame.variates()))
        throw Error("ensemble covers " + std::to_string(ensemble.variates()) + " variates, frame has " +
                    std::to_string(frame.variates()));
    ErrorSums total;
    for (std::size_t g = 0; g < ensemble.heads.size(); ++g)
        total += head_errors(ensemble.heads[g], frame, split, ensemble.grouping.clusters[g]);
    MetricRecord rec;
    if (!ensemble.heads.empty()) rec.variant = ensemble.heads.front().variant;
    rec.alpha_bar = ensemble.grouping.alpha_bar;
    rec.lookback = ensemble.lookback;
    rec.horizon = ensemble.horizon;
    rec.mse = total.squared / total.count;
    rec.mae = total.absolute / total.count;
    return rec;
}

} // namespace mtlinear
