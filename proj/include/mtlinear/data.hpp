#pragma once

#include "mtlinear/common.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>

namespace mtlinear {

enum class Split { train, val, test };

inline std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "unknown";
}

/// Row boundaries of the chronological split: train [0, train_end), val [train_end, val_end),
/// test [val_end, test_end). Rows past test_end are unused (ETT convention).
struct SplitBounds {
    std::size_t train_end = 0;
    std::size_t val_end = 0;
    std::size_t test_end = 0;
};

struct SplitOptions {
    std::optional<double> train_frac;
    std::optional<double> val_frac;
    std::optional<SplitBounds> rows;
    bool detect_ett = true;
};

struct SeriesFrame {
    Matrix values;  // T x k, row = timestep
    std::vector<std::string> variate_names;
    std::vector<std::string> timestamps;
    SplitBounds split;

    Index rows() const { return values.rows(); }
    Index variates() const { return values.cols(); }

    std::pair<std::size_t, std::size_t> range(Split s) const {
        switch (s) {
            case Split::train: return {0, split.train_end};
            case Split::val: return {split.train_end, split.val_end};
            case Split::test: return {split.val_end, split.test_end};
        }
        return {0, 0};
    }
};

inline void validate_split(const SplitBounds& s, std::size_t rows) {
    if (!(0 < s.train_end && s.train_end < s.val_end && s.val_end < s.test_end && s.test_end <= rows)) {
        throw Error("invalid split boundaries (" + std::to_string(s.train_end) + ", " +
                    std::to_string(s.val_end) + ", " + std::to_string(s.test_end) + ") for " +
                    std::to_string(rows) + " rows");
    }
}

/// ETTh*: 12/4/4 months of hourly rows; ETTm*: the same months at 15-minute resolution.
inline std::optional<SplitBounds> ett_split(const std::filesystem::path& path, std::size_t rows) {
    const std::string stem = path.stem().string();
    std::size_t month = 0;
    if (stem.rfind("ETTh", 0) == 0) month = 30 * 24;
    else if (stem.rfind("ETTm", 0) == 0) month = 30 * 24 * 4;
    else return std::nullopt;
    SplitBounds s{12 * month, 16 * month, 20 * month};
    if (s.test_end > rows) return std::nullopt;
    return s;
}

inline SplitBounds fractional_split(std::size_t rows, double train_frac, double val_frac) {
    if (train_frac <= 0 || val_frac <= 0 || train_frac + val_frac >= 1) {
        throw Error("split fractions must be positive and sum to less than 1");
    }
    auto n_train = static_cast<std::size_t>(static_cast<double>(rows) * train_frac);
    auto n_val = static_cast<std::size_t>(static_cast<double>(rows) * val_frac);
    n_train = std::max<std::size_t>(n_train, 1);
    n_val = std::max<std::size_t>(n_val, 1);
    if (n_train + n_val >= rows) n_train = rows - n_val - 1;
    return {n_train, n_train + n_val, rows};
}

/// Default 0.7/0.1/0.2 split: train and test sizes are floored, validation takes the rest.
inline SplitBounds default_split(std::size_t rows) {
    auto n_test = std::max<std::size_t>(static_cast<std::size_t>(static_cast<double>(rows) * 0.2), 1);
    auto n_train = std::max<std::size_t>(static_cast<std::size_t>(static_cast<double>(rows) * 0.7), 1);
    n_train = std::min(n_train, rows - n_test - 1);
    return {n_train, rows - n_test, rows};
}

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '"' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '"' || s.back() == '\r' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

inline std::optional<double> parse_real(std::string_view cell) {
    cell = trim(cell);
    if (cell.empty()) return std::nullopt;
    if (cell.front() == '+') cell.remove_prefix(1);
    double value = 0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(value)) return std::nullopt;
    return value;
}

} // namespace detail

/// Reads a benchmark CSV: one date column (any position, matched by header name) and numeric variates.
inline SeriesFrame load_csv(const std::filesystem::path& path, const std::string& date_column = "date",
                            const SplitOptions& options = {}) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open dataset file '" + path.string() + "'");

    std::string line;
    if (!std::getline(in, line)) throw Error("dataset file '" + path.string() + "' is empty");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM

    std::vector<std::string> header;
    for (auto cell : detail::split_csv_line(line)) header.emplace_back(detail::trim(cell));
    std::optional<std::size_t> date_index;
    SeriesFrame frame;
    for (std::size_t c = 0; c < header.size(); ++c) {
        auto name = header[c];
        if (!date_index && name == date_column) date_index = c;
        else frame.variate_names.push_back(std::move(name));
    }
    if (!date_index) throw Error("date column '" + date_column + "' not found in '" + path.string() + "'");
    const std::size_t k = frame.variate_names.size();
    if (k == 0) throw Error("dataset '" + path.string() + "' has no variate columns");

    std::vector<double> values;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size()) {
            throw Error(path.string() + ": row " + std::to_string(row + 1) + " has " + std::to_string(cells.size()) +
                        " cells, expected " + std::to_string(header.size()));
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c == *date_index) {
                frame.timestamps.emplace_back(detail::trim(cells[c]));
                continue;
            }
            auto v = detail::parse_real(cells[c]);
            if (!v) {
                throw Error(path.string() + ": unparseable value '" + std::string(cells[c]) + "' at row " +
                            std::to_string(row + 1) + ", column '" + header[c] + "'");
            }
            values.push_back(*v);
        }
        ++row;
    }
    if (row < 3) throw Error("dataset '" + path.string() + "' needs at least 3 data rows, found " + std::to_string(row));

    frame.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        values.data(), static_cast<Index>(row), static_cast<Index>(k));

    if (options.rows) frame.split = *options.rows;
    else if (options.train_frac || options.val_frac)
        frame.split = fractional_split(row, options.train_frac.value_or(0.7), options.val_frac.value_or(0.1));
    else if (auto ett = options.detect_ett ? ett_split(path, row) : std::nullopt) frame.split = *ett;
    else frame.split = default_split(row);
    validate_split(frame.split, row);
    return frame;
}

// ---------------------------------------------------------------------------
// Normalization

struct NormStats {
    Vector mean;
    Vector std;
};

inline constexpr double kStdFloor = 1e-8;

/// Per-variate population mean/std over the train rows.
inline NormStats fit_normalizer(const SeriesFrame& frame, std::ostream* warnings = &std::cerr) {
    const auto n = static_cast<Index>(frame.split.train_end);
    if (n == 0) throw Error("train split is empty");
    auto train = frame.values.topRows(n);
    NormStats stats;
    stats.mean = train.colwise().mean().transpose();
    stats.std.resize(frame.variates());
    for (Index c = 0; c < frame.variates(); ++c) {
        double var = (train.col(c).array() - stats.mean(c)).square().sum() / static_cast<double>(n);
        double sd = std::sqrt(var);
        if (sd < kStdFloor) {
            if (warnings) {
                *warnings << "warning: variate '" << frame.variate_names[static_cast<std::size_t>(c)]
                          << "' has zero variance on the train split; std floored at " << kStdFloor << "\n";
            }
            sd = kStdFloor;
        }
        stats.std(c) = sd;
    }
    return stats;
}

inline Matrix normalize(const Matrix& values, const NormStats& stats) {
    return (values.rowwise() - stats.mean.transpose()).array().rowwise() / stats.std.transpose().array();
}

inline Matrix denormalize(const Matrix& values, const NormStats& stats) {
    return (values.array().rowwise() * stats.std.transpose().array()).matrix().rowwise() + stats.mean.transpose();
}

inline SeriesFrame normalized(SeriesFrame frame, const NormStats& stats) {
    frame.values = normalize(frame.values, stats);
    return frame;
}

// ---------------------------------------------------------------------------
// Windows

/// A batch of windows restricted to a subset of variate columns.
struct WindowBatch {
    std::vector<Matrix> lookbacks;  // each l x k_g
    std::vector<Matrix> targets;    // each h x k_g
    std::vector<std::size_t> starts;

    std::size_t size() const { return lookbacks.size(); }
};

inline std::size_t window_count(std::size_t split_length, std::size_t lookback, std::size_t horizon) {
    if (lookback + horizon > split_length) return 0;
    return split_length - lookback - horizon + 1;
}

/// Iterates stride-1 windows that lie entirely inside one split. Train order is shuffled by seed.
class WindowStream {
public:
    WindowStream(const SeriesFrame& frame, Split split, std::size_t lookback, std::size_t horizon,
                 std::size_t batch, std::optional<std::uint64_t> shuffle_seed = std::nullopt,
                 std::vector<Index> columns = {})
        : frame_(&frame), lookback_(lookback), horizon_(horizon), batch_(batch), columns_(std::move(columns)) {
        if (lookback < 1 || horizon < 1) throw Error("lookback and horizon must be at least 1");
        if (batch < 1) throw Error("batch size must be at least 1");
        auto [begin, end] = frame.range(split);
        const std::size_t count = window_count(end - begin, lookback, horizon);
        if (count == 0) {
            throw Error(std::string(to_string(split)) + " split has " + std::to_string(end - begin) +
                        " rows, fewer than lookback + horizon = " + std::to_string(lookback + horizon));
        }
        starts_.resize(count);
        std::iota(starts_.begin(), starts_.end(), begin);
        if (split == Split::train && shuffle_seed) {
            std::mt19937_64 rng(*shuffle_seed);
            std::shuffle(starts_.begin(), starts_.end(), rng);
        }
        if (columns_.empty()) {
            columns_.resize(static_cast<std::size_t>(frame.variates()));
            std::iota(columns_.begin(), columns_.end(), Index{0});
        }
    }

    std::size_t windows() const { return starts_.size(); }
    std::size_t batches() const { return (starts_.size() + batch_ - 1) / batch_; }
    const std::vector<std::size_t>& starts() const { return starts_; }

    bool next(WindowBatch& out) {
        if (pos_ >= starts_.size()) return false;
        const std::size_t n = std::min(batch_, starts_.size() - pos_);
        out.lookbacks.resize(n);
        out.targets.resize(n);
        out.starts.assign(starts_.begin() + static_cast<std::ptrdiff_t>(pos_),
                          starts_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        const auto cols = Eigen::Map<const Eigen::Array<Index, Eigen::Dynamic, 1>>(columns_.data(),
                                                                                     static_cast<Index>(columns_.size()));
        for (std::size_t b = 0; b < n; ++b) {
            const auto s = static_cast<Index>(out.starts[b]);
            out.lookbacks[b] = frame_->values(Eigen::seqN(s, static_cast<Index>(lookback_)), cols);
            out.targets[b] = frame_->values(Eigen::seqN(s + static_cast<Index>(lookback_), static_cast<Index>(horizon_)), cols);
        }
        pos_ += n;
        return true;
    }

    void rewind() { pos_ = 0; }

private:
    const SeriesFrame* frame_;
    std::size_t lookback_, horizon_, batch_;
    std::vector<Index> columns_;
    std::vector<std::size_t> starts_;
    std::size_t pos_ = 0;
};

inline WindowStream windows(const SeriesFrame& frame, Split split, std::size_t lookback, std::size_t horizon,
                            std::size_t batch, std::optional<std::uint64_t> shuffle_seed = std::nullopt) {
    return WindowStream(frame, split, lookback, horizon, batch, shuffle_seed);
}

} // namespace mtlinear
