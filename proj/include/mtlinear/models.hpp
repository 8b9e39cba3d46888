#pragma once

#include "mtlinear/common.hpp"
#include "mtlinear/data.hpp"
#include "mtlinear/grouping.hpp"

#include <cmath>
#include <random>

namespace mtlinear {

inline constexpr std::size_t kDefaultMovingAverage = 25;
inline constexpr double kInstanceNormEps = 1e-5;

/// Linear map along the time axis shared by every variate of one cluster.
/// Each weight matrix is (l+1) x h; its last row is the bias. DLinear holds {trend, remainder}.
struct LinearHead {
    Variant variant = Variant::linear;
    std::size_t lookback = 0;
    std::size_t horizon = 0;
    std::size_t ma_kernel = kDefaultMovingAverage;
    bool use_bias = true;
    std::vector<Matrix> weights;

    std::size_t blocks() const { return variant == Variant::dlinear ? 2 : 1; }
    Index width() const { return static_cast<Index>(lookback + 1); }

    const Matrix& theta() const { return weights.at(0); }
    const Matrix& theta_trend() const { return weights.at(0); }
    const Matrix& theta_remainder() const { return weights.at(1); }

    /// Weight matrices stacked vertically: blocks*(l+1) x h.
    Matrix stacked() const {
        if (weights.size() == 1) return weights[0];
        Matrix s(width() * 2, static_cast<Index>(horizon));
        s << weights[0], weights[1];
        return s;
    }

    void set_stacked(const Matrix& s) {
        for (std::size_t b = 0; b < weights.size(); ++b)
            weights[b] = s.middleRows(static_cast<Index>(b) * width(), width());
    }

    void validate() const {
        if (weights.size() != blocks()) throw Error("head has wrong number of weight matrices");
        for (const auto& w : weights) {
            if (w.rows() != width() || w.cols() != static_cast<Index>(horizon))
                throw Error("head weight shape does not match lookback/horizon");
            if (!w.allFinite()) throw Error("head weights contain non-finite entries");
        }
        if (variant == Variant::dlinear && ma_kernel % 2 == 0) throw Error("moving-average kernel must be odd");
    }
};

inline LinearHead init_head(Variant variant, std::size_t lookback, std::size_t horizon, std::uint64_t seed,
                            std::size_t ma_kernel = kDefaultMovingAverage, bool use_bias = true) {
    if (lookback < 1 || horizon < 1) throw Error("lookback and horizon must be at least 1");
    if (ma_kernel % 2 == 0) throw Error("moving-average kernel must be odd");
    LinearHead head{variant, lookback, horizon, ma_kernel, use_bias, {}};
    std::mt19937_64 rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(lookback + 1));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    for (std::size_t b = 0; b < head.blocks(); ++b) {
        Matrix w(head.width(), static_cast<Index>(horizon));
        for (Index j = 0; j < w.cols(); ++j)
            for (Index r = 0; r < w.rows() - 1; ++r) w(r, j) = uniform(rng);
        w.row(w.rows() - 1).setZero();
        head.weights.push_back(std::move(w));
    }
    return head;
}

/// Centered moving average with edge replication; output has the input's length.
inline Vector moving_average(const Eigen::Ref<const Vector>& x, std::size_t kernel) {
    const auto n = x.size();
    const auto half = static_cast<Index>(kernel / 2);
    Vector padded(n + 2 * half);
    padded.head(half).setConstant(x(0));
    padded.segment(half, n) = x;
    padded.tail(half).setConstant(x(n - 1));
    Vector out(n);
    double sum = padded.head(static_cast<Index>(kernel)).sum();
    out(0) = sum / static_cast<double>(kernel);
    for (Index t = 1; t < n; ++t) {
        sum += padded(t + static_cast<Index>(kernel) - 1) - padded(t - 1);
        out(t) = sum / static_cast<double>(kernel);
    }
    return out;
}

/// Linearized view of a head on a batch. Row r = b*k_g + i holds the transformed lookback of
/// window b, variate i; the final forecast is scale(r) * (inputs.row(r) * stacked) + offset(r).
struct Design {
    Matrix inputs;   // rows x blocks*(l+1)
    Matrix targets;  // rows x h, raw targets
    Vector scale;
    Vector offset;
    std::size_t batch = 0;
    std::size_t variates = 0;

    Index rows() const { return inputs.rows(); }
};

inline void check_window(const LinearHead& head, const Matrix& lookback) {
    if (lookback.rows() != static_cast<Index>(head.lookback))
        throw Error("lookback has " + std::to_string(lookback.rows()) + " steps, head expects " +
                    std::to_string(head.lookback));
}

/// Writes the variant's transformed, bias-augmented input for one series into `row`.
inline void transform_series(const LinearHead& head, const Eigen::Ref<const Vector>& x, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row,
                             double& scale, double& offset) {
    const Index l = static_cast<Index>(head.lookback);
    const Index w = head.width();
    const double bias_input = head.use_bias ? 1.0 : 0.0;
    scale = 1.0;
    offset = 0.0;
    switch (head.variant) {
        case Variant::linear:
            row.head(l) = x.transpose();
            row(l) = bias_input;
            break;
        case Variant::nlinear:
            offset = x(l - 1);
            row.head(l) = (x.array() - offset).matrix().transpose();
            row(l) = bias_input;
            break;
        case Variant::rlinear: {
            const double mean = x.mean();
            const double sd = std::sqrt((x.array() - mean).square().mean()) + kInstanceNormEps;
            offset = mean;
            scale = sd;
            row.head(l) = ((x.array() - mean) / sd).matrix().transpose();
            row(l) = bias_input;
            break;
        }
        case Variant::dlinear: {
            Vector trend = moving_average(x, head.ma_kernel);
            row.head(l) = trend.transpose();
            row(l) = bias_input;
            row.segment(w, l) = (x - trend).transpose();
            row(w + l) = bias_input;
            break;
        }
    }
}

inline Design build_design(const LinearHead& head, const std::vector<Matrix>& lookbacks,
                           const std::vector<Matrix>* targets = nullptr) {
    Design d;
    d.batch = lookbacks.size();
    d.variates = lookbacks.empty() ? 0 : static_cast<std::size_t>(lookbacks.front().cols());
    const auto rows = static_cast<Index>(d.batch * d.variates);
    d.inputs.resize(rows, head.width() * static_cast<Index>(head.blocks()));
    d.scale.resize(rows);
    d.offset.resize(rows);
    if (targets) d.targets.resize(rows, static_cast<Index>(head.horizon));
    for (std::size_t b = 0; b < d.batch; ++b) {
        const Matrix& x = lookbacks[b];
        check_window(head, x);
        if (static_cast<std::size_t>(x.cols()) != d.variates) throw Error("inconsistent variate count in batch");
        for (Index i = 0; i < x.cols(); ++i) {
            const Index r = static_cast<Index>(b * d.variates) + i;
            transform_series(head, x.col(i), d.inputs.row(r), d.scale(r), d.offset(r));
            if (targets) {
                const Matrix& y = (*targets)[b];
                if (y.rows() != static_cast<Index>(head.horizon) || y.cols() != x.cols())
                    throw Error("target window shape does not match head horizon");
                d.targets.row(r) = y.col(i).transpose();
            }
        }
    }
    return d;
}

inline Design build_design(const LinearHead& head, const WindowBatch& batch) {
    return build_design(head, batch.lookbacks, &batch.targets);
}

/// rows x h forecasts on the original (untransformed) scale.
inline Matrix design_forecast(const LinearHead& head, const Design& d) {
    Matrix out = d.inputs * head.stacked();
    out.array().colwise() *= d.scale.array();
    out.colwise() += d.offset;
    return out;
}

/// Forecast for a single lookback window l x k_g -> h x k_g.
inline Matrix forward(const LinearHead& head, const Matrix& lookback) {
    check_window(head, lookback);
    Design d = build_design(head, std::vector<Matrix>{lookback});
    return design_forecast(head, d).transpose();
}

// ---------------------------------------------------------------------------

/// One head per cluster of the grouping.
struct HeadEnsemble {
    std::vector<LinearHead> heads;
    VariateGrouping grouping;
    std::size_t lookback = 0;
    std::size_t horizon = 0;

    std::size_t variates() const { return grouping.variates(); }

    void validate() const {
        if (heads.size() != grouping.clusters.size()) throw Error("ensemble needs exactly one head per cluster");
        std::vector<int> seen(variates(), 0);
        for (const auto& c : grouping.clusters)
            for (auto i : c) {
                if (i >= seen.size() || seen[i]++) throw Error("grouping is not a partition of the variates");
            }
        for (const auto& h : heads) {
            if (h.lookback != lookback || h.horizon != horizon) throw Error("head shape differs from ensemble");
            h.validate();
        }
    }
};

inline Matrix select_columns(const Matrix& m, const std::vector<std::size_t>& cols) {
    Matrix out(m.rows(), static_cast<Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Index>(c)) = m.col(static_cast<Index>(cols[c]));
    return out;
}

/// Routes each cluster's columns through its head and reassembles them in variate order.
inline Matrix predict(const HeadEnsemble& ensemble, const Matrix& lookback) {
    if (static_cast<std::size_t>(lookback.cols()) != ensemble.variates())
        throw Error("input has " + std::to_string(lookback.cols()) + " variates, grouping covers " +
                    std::to_string(ensemble.variates()));
    Matrix out(static_cast<Index>(ensemble.horizon), lookback.cols());
    for (std::size_t g = 0; g < ensemble.heads.size(); ++g) {
        const auto& cols = ensemble.grouping.clusters[g];
        Matrix part = forward(ensemble.heads[g], select_columns(lookback, cols));
        for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Index>(cols[c])) = part.col(static_cast<Index>(c));
    }
    return out;
}

} // namespace mtlinear
