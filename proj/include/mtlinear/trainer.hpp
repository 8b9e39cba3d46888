#pragma once

#include "mtlinear/data.hpp"
#include "mtlinear/eval.hpp"
#include "mtlinear/grouping.hpp"
#include "mtlinear/loss.hpp"
#include "mtlinear/models.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

namespace mtlinear {

enum class Optimizer { sgd, adam };

inline std::string_view to_string(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adam"; }

inline Optimizer parse_optimizer(std::string_view name) {
    if (name == "sgd") return Optimizer::sgd;
    if (name == "adam") return Optimizer::adam;
    throw Error("unknown optimizer '" + std::string(name) + "'");
}

struct TrainConfig {
    Variant variant = Variant::nlinear;
    std::size_t lookback = 96;
    std::size_t horizon = 96;
    double lr = 0.01;
    std::size_t batch = 32;
    std::size_t max_epochs = 20;
    std::size_t patience = 3;
    double a = 1;                                 // penalty exponent
    double alpha_bar = std::numbers::pi / 4;      // grouping angle
    std::uint64_t seed = 2021;
    Optimizer optimizer = Optimizer::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t ma_kernel = kDefaultMovingAverage;
    bool use_bias = true;
    double penalty_ema = 0;  // 0: weights from the current batch only
    bool lr_halving = false;
    std::size_t jobs = 1;

    void validate() const {
        if (!(lr >= 0) || !std::isfinite(lr)) throw Error("learning rate must be finite and non-negative");
        if (batch < 1) throw Error("batch size must be at least 1");
        if (patience < 1) throw Error("patience must be at least 1");
        if (lookback < 1 || horizon < 1) throw Error("lookback and horizon must be at least 1");
        if (a < 0) throw Error("penalty exponent must be non-negative");
        if (penalty_ema < 0 || penalty_ema >= 1) throw Error("penalty_ema must lie in [0, 1)");
        if (ma_kernel % 2 == 0) throw Error("moving-average kernel must be odd");
    }
};

struct HeadState {
    LinearHead head;
    LinearHead best;
    Matrix first_moment;   // stacked shape
    Matrix second_moment;
    std::size_t steps = 0;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t epochs_since_improvement = 0;
    bool stopped = false;
    bool diverged = false;
    std::optional<Matrix> error_average;

    explicit HeadState(LinearHead h) : head(std::move(h)), best(head) {
        Matrix s = head.stacked();
        first_moment = Matrix::Zero(s.rows(), s.cols());
        second_moment = Matrix::Zero(s.rows(), s.cols());
    }
};

struct StepRecord {
    double loss = 0;
    double grad_norm = 0;
    double mean_error = 0;
    double max_error = 0;
};

struct LogRecord {
    std::size_t epoch = 0;
    std::size_t head = 0;
    double train_loss = 0;
    double val_mse = 0;
    double grad_norm = 0;
    bool stopped = false;
    bool diverged = false;
};

/// Hooks for instrumentation. Calls for different heads may arrive concurrently.
class TrainObserver {
public:
    virtual ~TrainObserver() = default;
    virtual void on_begin(const VariateGrouping&, const SeriesFrame&, const TrainConfig&) {}
    virtual void on_step(std::size_t /*head*/, std::size_t /*epoch*/, const LinearHead&, const Design&,
                         const Matrix& /*weights*/, const Matrix& /*residual*/) {}
    virtual void on_epoch_end(std::size_t /*head*/, std::size_t /*epoch*/, const LinearHead&) {}
};

/// One optimizer update with the penalized analytic gradient.
inline StepRecord train_step(HeadState& state, const Design& d, const TrainConfig& config, double lr,
                             std::size_t head_index = 0, std::size_t epoch = 0, TrainObserver* observer = nullptr) {
    LinearHead& head = state.head;
    Matrix residual = design_forecast(head, d) - d.targets;
    ErrorMatrix error = error_matrix(d, residual);
    if (config.penalty_ema > 0) {
        if (state.error_average) error.e = config.penalty_ema * *state.error_average + (1 - config.penalty_ema) * error.e;
        state.error_average = error.e;
    }
    StepRecord rec;
    if (!residual.allFinite()) {
        rec.loss = std::numeric_limits<double>::infinity();
        return rec;
    }
    PenaltyWeights penalty = penalty_weights(error, config.a);
    rec.loss = (row_weights(d, penalty.w).array() * residual.array().square()).sum() / normalizer(d, residual.cols());
    rec.mean_error = error.e.mean();
    rec.max_error = error.e.maxCoeff();
    if (observer) observer->on_step(head_index, epoch, head, d, penalty.w, residual);

    Matrix grad = stacked_gradient(head, d, penalty.w, residual);
    if (!grad.allFinite()) throw Error("non-finite gradient");
    rec.grad_norm = grad.norm();

    Matrix theta = head.stacked();
    ++state.steps;
    if (config.optimizer == Optimizer::sgd) {
        theta -= lr * grad;
    } else {
        state.first_moment = config.beta1 * state.first_moment + (1 - config.beta1) * grad;
        state.second_moment = config.beta2 * state.second_moment + (1 - config.beta2) * grad.cwiseAbs2();
        const double c1 = 1 - std::pow(config.beta1, static_cast<double>(state.steps));
        const double c2 = 1 - std::pow(config.beta2, static_cast<double>(state.steps));
        theta.array() -= lr * (state.first_moment.array() / c1) /
                         ((state.second_moment.array() / c2).sqrt() + config.adam_eps);
    }
    head.set_stacked(theta);
    return rec;
}

inline double validation_mse(const LinearHead& head, const SeriesFrame& frame, const std::vector<std::size_t>& cluster) {
    ErrorSums s = head_errors(head, frame, Split::val, cluster);
    return s.squared / s.count;
}

inline std::uint64_t head_seed(std::uint64_t seed, std::size_t head) { return mix_seed(seed, head); }

/// Trains one cluster's head with its own RNG stream and early-stopping clock.
inline LinearHead train_head(const SeriesFrame& frame, const std::vector<std::size_t>& cluster, std::size_t head_index,
                             const TrainConfig& config, std::vector<LogRecord>& log, TrainObserver* observer = nullptr) {
    const std::uint64_t seed = head_seed(config.seed, head_index);
    HeadState state(init_head(config.variant, config.lookback, config.horizon, mix_seed(seed, 0), config.ma_kernel,
                              config.use_bias));
    std::vector<Index> cols(cluster.begin(), cluster.end());
    for (std::size_t epoch = 1; epoch <= config.max_epochs && !state.stopped; ++epoch) {
        WindowStream stream(frame, Split::train, config.lookback, config.horizon, config.batch, mix_seed(seed, epoch), cols);
        const double lr = config.lr_halving ? config.lr * std::pow(0.5, static_cast<double>(epoch - 1)) : config.lr;
        double loss_sum = 0, grad_sum = 0;
        std::size_t steps = 0;
        WindowBatch batch;
        while (stream.next(batch)) {
            Design d = build_design(state.head, batch);
            StepRecord rec;
            try {
                rec = train_step(state, d, config, lr, head_index, epoch, observer);
            } catch (const Error&) {
                rec.loss = std::numeric_limits<double>::infinity();
            }
            if (!std::isfinite(rec.loss) || !state.head.stacked().allFinite()) {
                state.diverged = true;
                break;
            }
            loss_sum += rec.loss;
            grad_sum += rec.grad_norm;
            ++steps;
        }
        LogRecord entry{epoch, head_index, steps ? loss_sum / static_cast<double>(steps) : 0.0,
                        std::numeric_limits<double>::quiet_NaN(), steps ? grad_sum / static_cast<double>(steps) : 0.0};
        if (state.diverged) {
            state.stopped = true;
            entry.train_loss = std::numeric_limits<double>::infinity();
            entry.stopped = entry.diverged = true;
            log.push_back(entry);
            break;
        }
        if (observer) observer->on_epoch_end(head_index, epoch, state.head);
        const double val = validation_mse(state.head, frame, cluster);
        entry.val_mse = val;
        if (val < state.best_val) {
            state.best_val = val;
            state.best = state.head;
            state.epochs_since_improvement = 0;
        } else if (++state.epochs_since_improvement >= config.patience) {
            state.stopped = true;
        }
        entry.stopped = state.stopped;
        log.push_back(entry);
    }
    return state.best;
}

struct TrainResult {
    HeadEnsemble ensemble;
    std::vector<LogRecord> log;  // ordered by head, then epoch
};

/// Groups the variates on the train split, then trains one head per cluster.
inline TrainResult train(const SeriesFrame& frame, const TrainConfig& config, TrainObserver* observer = nullptr,
                         std::ostream* warnings = &std::cerr) {
    config.validate();
    if (window_count(frame.split.train_end, config.lookback, config.horizon) == 0)
        throw Error("train split too short for lookback " + std::to_string(config.lookback) + " + horizon " +
                    std::to_string(config.horizon));
    if (window_count(frame.split.val_end - frame.split.train_end, config.lookback, config.horizon) == 0)
        throw Error("validation split too short for lookback " + std::to_string(config.lookback) + " + horizon " +
                    std::to_string(config.horizon));
    SimilarityMatrix sim = correlation_matrix(frame, warnings);
    TrainResult result;
    result.ensemble.grouping = cluster(sim, config.alpha_bar);
    result.ensemble.lookback = config.lookback;
    result.ensemble.horizon = config.horizon;
    if (observer) observer->on_begin(result.ensemble.grouping, frame, config);

    const auto& clusters = result.ensemble.grouping.clusters;
    std::vector<LinearHead> heads(clusters.size());
    std::vector<std::vector<LogRecord>> logs(clusters.size());
    parallel_for(clusters.size(), config.jobs, [&](std::size_t g) {
        heads[g] = train_head(frame, clusters[g], g, config, logs[g], observer);
    });
    result.ensemble.heads = std::move(heads);
    for (auto& l : logs) result.log.insert(result.log.end(), l.begin(), l.end());
    return result;
}

// ---------------------------------------------------------------------------
// Grid search

struct GridCell {
    double alpha_bar = 0;
    double a = 0;
    std::size_t groups = 0;
    double val_mse = std::numeric_limits<double>::quiet_NaN();
    double test_mse = std::numeric_limits<double>::quiet_NaN();
    double test_mae = std::numeric_limits<double>::quiet_NaN();
    bool ok = false;
    std::string error;
};

struct GridResult {
    std::vector<GridCell> cells;
    std::optional<std::size_t> best;
    std::optional<HeadEnsemble> best_ensemble;
};

inline std::vector<double> default_alpha_grid() {
    using std::numbers::pi;
    return {pi / 2, pi / 3, pi / 4, pi / 6};
}

inline std::vector<double> default_a_grid() { return {1, 2}; }

/// Lower validation MSE wins; ties prefer smaller a, then larger alpha_bar (fewer heads).
inline bool better_cell(const GridCell& x, const GridCell& y) {
    if (x.val_mse != y.val_mse) return x.val_mse < y.val_mse;
    if (x.a != y.a) return x.a < y.a;
    return x.alpha_bar > y.alpha_bar;
}

/// Trains every (alpha_bar, a) cell and selects by validation MSE. Failing cells are recorded
/// and skipped.
inline GridResult grid_search(const SeriesFrame& frame, const TrainConfig& base, const std::vector<double>& alpha_grid,
                              const std::vector<double>& a_grid, std::size_t jobs = 1) {
    if (alpha_grid.empty() || a_grid.empty()) throw Error("grid search needs non-empty grids");
    GridResult result;
    for (double alpha : alpha_grid)
        for (double a : a_grid) {
            GridCell cell;
            cell.alpha_bar = alpha;
            cell.a = a;
            result.cells.push_back(cell);
        }
    std::vector<std::optional<HeadEnsemble>> ensembles(result.cells.size());
    const std::size_t cell_jobs = std::min(jobs, result.cells.size());
    parallel_for(result.cells.size(), cell_jobs, [&](std::size_t c) {
        GridCell& cell = result.cells[c];
        TrainConfig config = base;
        config.alpha_bar = cell.alpha_bar;
        config.a = cell.a;
        config.jobs = cell_jobs > 1 ? 1 : jobs;
        try {
            TrainResult trained = train(frame, config, nullptr, nullptr);
            cell.groups = trained.ensemble.heads.size();
            cell.val_mse = evaluate(trained.ensemble, frame, Split::val).mse;
            MetricRecord test = evaluate(trained.ensemble, frame, Split::test);
            cell.test_mse = test.mse;
            cell.test_mae = test.mae;
            cell.ok = std::isfinite(cell.val_mse);
            if (!cell.ok) cell.error = "non-finite validation loss";
            ensembles[c] = std::move(trained.ensemble);
        } catch (const std::exception& e) {
            cell.error = e.what();
        }
    });
    for (std::size_t c = 0; c < result.cells.size(); ++c) {
        if (!result.cells[c].ok) continue;
        if (!result.best || better_cell(result.cells[c], result.cells[*result.best])) result.best = c;
    }
    if (result.best) result.best_ensemble = std::move(ensembles[*result.best]);
    return result;
}

} // namespace mtlinear
