#pragma once

#include "mtlinear/grouping.hpp"
#include "mtlinear/loss.hpp"
#include "mtlinear/trainer.hpp"

#include <cmath>
#include <numeric>

namespace mtlinear {

/// Batch-averaged gradient of each variate's own (weighted) loss, flattened over the stacked
/// weights column by column. sum_i g_i / k_g equals the head's analytic gradient.
inline std::vector<Vector> per_variate_gradients(const LinearHead& head, const Design& d, const Matrix& w,
                                                 const Matrix& residual) {
    const auto k = static_cast<Index>(d.variates);
    const auto h = residual.cols();
    Matrix scaled = row_weights(d, w).cwiseProduct(residual);
    scaled.array().colwise() *= d.scale.array();
    const double factor = 2.0 / (static_cast<double>(d.batch) * static_cast<double>(h));
    std::vector<Vector> grads;
    grads.reserve(static_cast<std::size_t>(k));
    for (Index i = 0; i < k; ++i) {
        Matrix g = Matrix::Zero(d.inputs.cols(), h);
        for (std::size_t b = 0; b < d.batch; ++b) {
            const Index r = static_cast<Index>(b) * k + i;
            g.noalias() += d.inputs.row(r).transpose() * scaled.row(r);
        }
        g *= factor;
        if (!head.use_bias)
            for (std::size_t blk = 0; blk < head.blocks(); ++blk) g.row((static_cast<Index>(blk) + 1) * head.width() - 1).setZero();
        grads.push_back(Eigen::Map<const Vector>(g.data(), g.size()));
    }
    return grads;
}

inline std::vector<Vector> per_variate_gradients(const LinearHead& head, const Design& d, const Matrix& w) {
    return per_variate_gradients(head, d, w, residuals(head, d));
}

using ConflictMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;
using CountMatrix = Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>;

/// conflict(a, b) = g_a . g_b < 0; the diagonal is never a conflict.
inline ConflictMatrix count_conflicts(const std::vector<Vector>& grads) {
    const auto k = static_cast<Index>(grads.size());
    ConflictMatrix c = ConflictMatrix::Constant(k, k, false);
    for (Index a = 0; a < k; ++a)
        for (Index b = a + 1; b < k; ++b)
            c(a, b) = c(b, a) = grads[static_cast<std::size_t>(a)].dot(grads[static_cast<std::size_t>(b)]) < 0;
    return c;
}

/// Cumulative conflict counts per variate pair, in global variate indices.
struct ConflictLedger {
    CountMatrix counts;
    CountMatrix comparisons;  // how many times each pair was checked (pairs sharing a head)
    std::vector<CountMatrix> per_epoch;

    explicit ConflictLedger(Index k = 0) : counts(CountMatrix::Zero(k, k)), comparisons(CountMatrix::Zero(k, k)) {}

    Index variates() const { return counts.rows(); }

    CountMatrix& epoch(std::size_t e) {
        while (per_epoch.size() <= e) per_epoch.push_back(CountMatrix::Zero(variates(), variates()));
        return per_epoch[e];
    }

    void record(std::size_t epoch_index, const std::vector<std::size_t>& members, const ConflictMatrix& conflicts) {
        CountMatrix& inc = epoch(epoch_index);
        for (std::size_t a = 0; a < members.size(); ++a) {
            for (std::size_t b = 0; b < members.size(); ++b) {
                if (a == b) continue;
                const auto ga = static_cast<Index>(members[a]), gb = static_cast<Index>(members[b]);
                comparisons(ga, gb) += 1;
                if (conflicts(static_cast<Index>(a), static_cast<Index>(b))) {
                    counts(ga, gb) += 1;
                    inc(ga, gb) += 1;
                }
            }
        }
    }

    /// Elementwise sum; associative and order independent.
    void merge(const ConflictLedger& other) {
        if (other.variates() != variates()) throw Error("cannot merge ledgers of different sizes");
        counts += other.counts;
        comparisons += other.comparisons;
        for (std::size_t e = 0; e < other.per_epoch.size(); ++e) epoch(e) += other.per_epoch[e];
    }

    long long total() const { return counts.sum() / 2; }
};

struct GradErrorRecord {
    std::size_t variate = 0;
    std::size_t epoch = 0;
    std::size_t step = 0;
    double error = 0;
    double grad_norm = 0;
};

enum class ConflictMode { per_step, probe_epoch };

inline ConflictMode parse_conflict_mode(std::string_view s) {
    if (s == "per_step") return ConflictMode::per_step;
    if (s == "probe_epoch") return ConflictMode::probe_epoch;
    throw Error("unknown diagnostics mode '" + std::string(s) + "'");
}

/// Observer that materializes per-variate gradients and counts conflicts within each head.
/// Each head writes only its own slot, so concurrent heads need no locking.
class DiagnosticsRecorder : public TrainObserver {
public:
    explicit DiagnosticsRecorder(ConflictMode mode = ConflictMode::per_step) : mode_(mode) {}

    void on_begin(const VariateGrouping& grouping, const SeriesFrame& frame, const TrainConfig& config) override {
        grouping_ = grouping;
        frame_ = &frame;
        config_ = config;
        variates_ = static_cast<Index>(grouping.variates());
        slots_.assign(grouping.clusters.size(), Slot{});
        for (auto& s : slots_) s.ledger = ConflictLedger(variates_);
    }

    void on_step(std::size_t head, std::size_t epoch, const LinearHead& model, const Design& d, const Matrix& w,
                 const Matrix& residual) override {
        Slot& slot = slots_.at(head);
        const std::size_t step = slot.steps++;
        if (mode_ != ConflictMode::per_step) return;
        observe(slot, head, epoch, step, model, d, w, residual);
    }

    void on_epoch_end(std::size_t head, std::size_t epoch, const LinearHead& model) override {
        if (mode_ != ConflictMode::probe_epoch) return;
        Slot& slot = slots_.at(head);
        const auto& members = grouping_.clusters[head];
        std::vector<Index> cols(members.begin(), members.end());
        WindowStream probe(*frame_, Split::train, config_.lookback, config_.horizon, config_.batch, std::nullopt, cols);
        WindowBatch batch;
        probe.next(batch);
        Design d = build_design(model, batch);
        Matrix residual = design_forecast(model, d) - d.targets;
        PenaltyWeights p = penalty_weights(error_matrix(d, residual), config_.a);
        observe(slot, head, epoch, slot.steps, model, d, p.w, residual);
    }

    ConflictLedger ledger() const {
        ConflictLedger merged(variates_);
        for (const auto& s : slots_) merged.merge(s.ledger);
        return merged;
    }

    std::vector<GradErrorRecord> trace() const {
        std::vector<GradErrorRecord> all;
        for (const auto& s : slots_) all.insert(all.end(), s.trace.begin(), s.trace.end());
        return all;
    }

    /// Largest |sum_i g_i / k_g - analytic gradient| seen on any instrumented step.
    double max_decomposition_error() const {
        double m = 0;
        for (const auto& s : slots_) m = std::max(m, s.decomposition_error);
        return m;
    }

    const VariateGrouping& grouping() const { return grouping_; }

private:
    struct Slot {
        ConflictLedger ledger{0};
        std::vector<GradErrorRecord> trace;
        std::size_t steps = 0;
        double decomposition_error = 0;
    };

    void observe(Slot& slot, std::size_t head, std::size_t epoch, std::size_t step, const LinearHead& model,
                 const Design& d, const Matrix& w, const Matrix& residual) {
        const auto& members = grouping_.clusters[head];
        auto grads = per_variate_gradients(model, d, w, residual);
        slot.ledger.record(epoch - 1, members, count_conflicts(grads));

        Matrix total = stacked_gradient(model, d, w, residual);
        Vector mean = Vector::Zero(total.size());
        for (const auto& g : grads) mean += g;
        mean /= static_cast<double>(grads.size());
        const double err = (mean - Eigen::Map<const Vector>(total.data(), total.size())).cwiseAbs().maxCoeff();
        slot.decomposition_error = std::max(slot.decomposition_error, err);

        ErrorMatrix e = error_matrix(d, residual);
        for (std::size_t i = 0; i < grads.size(); ++i) {
            slot.trace.push_back({members[i], epoch, step, e.e.row(static_cast<Index>(i)).mean(), grads[i].norm()});
        }
    }

    ConflictMode mode_;
    VariateGrouping grouping_;
    const SeriesFrame* frame_ = nullptr;
    TrainConfig config_;
    Index variates_ = 0;
    std::vector<Slot> slots_;
};

// ---------------------------------------------------------------------------

/// Average ranks (ties share the mean rank), 1-based.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
        i = j + 1;
    }
    return ranks;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const auto n = static_cast<double>(x.size());
    if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0 || syy == 0) return std::numeric_limits<double>::quiet_NaN();
    return sxy / std::sqrt(sxx * syy);
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    return pearson(average_ranks(x), average_ranks(y));
}

struct PairRecord {
    std::size_t a = 0;
    std::size_t b = 0;
    double abs_corr = 0;
    long long conflicts = 0;
};

struct ConflictReport {
    std::vector<PairRecord> pairs;
    double rank_correlation = std::numeric_limits<double>::quiet_NaN();
};

/// Pairs that shared a head (so were compared at least once) with their |corr| and conflict total.
inline ConflictReport correlation_vs_conflict_report(const ConflictLedger& ledger, const SimilarityMatrix& sim) {
    if (sim.size() != ledger.variates()) throw Error("similarity matrix and ledger disagree on variate count");
    ConflictReport report;
    std::vector<double> corr, conflicts;
    for (Index a = 0; a < ledger.variates(); ++a) {
        for (Index b = a + 1; b < ledger.variates(); ++b) {
            if (ledger.comparisons(a, b) == 0) continue;
            report.pairs.push_back({static_cast<std::size_t>(a), static_cast<std::size_t>(b), sim.r_abs(a, b), ledger.counts(a, b)});
            corr.push_back(sim.r_abs(a, b));
            conflicts.push_back(static_cast<double>(ledger.counts(a, b)));
        }
    }
    report.rank_correlation = spearman(corr, conflicts);
    return report;
}

} // namespace mtlinear
