#pragma once

#include "mtlinear/common.hpp"
#include "mtlinear/data.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <numbers>

namespace mtlinear {

/// Absolute Pearson correlation between variates, |cos| of the train-centered columns.
struct SimilarityMatrix {
    Matrix r_abs;

    Index size() const { return r_abs.rows(); }
};

struct Merge {
    std::size_t a = 0;  // smallest variate index of each merged cluster
    std::size_t b = 0;
    double height = 0;
};

struct VariateGrouping {
    std::vector<std::vector<std::size_t>> clusters;
    double alpha_bar = 0;
    double d_alpha = 0;
    std::vector<Merge> merges;

    std::size_t variates() const {
        std::size_t n = 0;
        for (const auto& c : clusters) n += c.size();
        return n;
    }
};

inline double correlation_cutoff(double alpha_bar) { return 1.0 - std::cos(alpha_bar); }

inline SimilarityMatrix correlation_matrix(const Matrix& rows, std::ostream* warnings = &std::cerr,
                                           const std::vector<std::string>* names = nullptr) {
    const Index k = rows.cols();
    Matrix centered = rows.rowwise() - rows.colwise().mean();
    Vector norms = centered.colwise().norm().transpose();
    std::vector<bool> flat(static_cast<std::size_t>(k));
    for (Index a = 0; a < k; ++a) {
        const double scale = std::max(1.0, rows.col(a).cwiseAbs().maxCoeff());
        flat[static_cast<std::size_t>(a)] = norms(a) <= 1e-12 * scale;
        if (flat[static_cast<std::size_t>(a)] && warnings) {
            *warnings << "warning: variate " << (names ? (*names)[static_cast<std::size_t>(a)] : std::to_string(a))
                      << " has zero variance; its similarities are set to 0\n";
        }
    }
    Matrix gram = centered.transpose() * centered;
    SimilarityMatrix sim{Matrix::Identity(k, k)};
    for (Index a = 0; a < k; ++a) {
        for (Index b = a + 1; b < k; ++b) {
            double r = 0;
            if (!flat[static_cast<std::size_t>(a)] && !flat[static_cast<std::size_t>(b)])
                r = std::min(1.0, std::abs(gram(a, b)) / (norms(a) * norms(b)));
            sim.r_abs(a, b) = sim.r_abs(b, a) = r;
        }
    }
    return sim;
}

inline SimilarityMatrix correlation_matrix(const SeriesFrame& frame, std::ostream* warnings = &std::cerr) {
    return correlation_matrix(frame.values.topRows(static_cast<Index>(frame.split.train_end)), warnings,
                              &frame.variate_names);
}

/// Complete-linkage agglomeration on D = 1 - r_abs. Merges while the closest pair is strictly
/// below d = 1 - cos(alpha_bar); ties go to the lexicographically smallest (min-index) pair.
inline VariateGrouping cluster(const SimilarityMatrix& sim, double alpha_bar) {
    if (!(alpha_bar >= 0 && alpha_bar <= std::numbers::pi / 2 + 1e-12)) {
        throw Error("alpha_bar must lie in [0, pi/2], got " + std::to_string(alpha_bar));
    }
    const auto k = static_cast<std::size_t>(sim.size());
    VariateGrouping g;
    g.alpha_bar = alpha_bar;
    g.d_alpha = correlation_cutoff(alpha_bar);

    // Clusters are kept sorted by minimum member index, so list order is the tie-break order.
    std::vector<std::vector<std::size_t>> members(k);
    for (std::size_t i = 0; i < k; ++i) members[i] = {i};
    Matrix dist = (1.0 - sim.r_abs.array()).matrix();

    while (members.size() > 1) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < members.size(); ++i) {
            for (std::size_t j = i + 1; j < members.size(); ++j) {
                const double d = dist(static_cast<Index>(i), static_cast<Index>(j));
                if (d < best) {
                    best = d;
                    bi = i;
                    bj = j;
                }
            }
        }
        if (!(best < g.d_alpha)) break;
        g.merges.push_back({members[bi].front(), members[bj].front(), best});

        auto& into = members[bi];
        into.insert(into.end(), members[bj].begin(), members[bj].end());
        std::sort(into.begin(), into.end());
        const auto n = static_cast<Index>(members.size());
        for (Index c = 0; c < n; ++c) {
            const double merged = std::max(dist(static_cast<Index>(bi), c), dist(static_cast<Index>(bj), c));
            dist(static_cast<Index>(bi), c) = dist(c, static_cast<Index>(bi)) = merged;
        }
        dist(static_cast<Index>(bi), static_cast<Index>(bi)) = 0;
        // drop row/column bj
        const Index drop = static_cast<Index>(bj);
        Matrix reduced(n - 1, n - 1);
        for (Index r = 0, rr = 0; r < n; ++r) {
            if (r == drop) continue;
            for (Index c = 0, cc = 0; c < n; ++c) {
                if (c == drop) continue;
                reduced(rr, cc++) = dist(r, c);
            }
            ++rr;
        }
        dist = std::move(reduced);
        members.erase(members.begin() + static_cast<std::ptrdiff_t>(bj));
    }
    g.clusters = std::move(members);
    return g;
}

/// Largest pairwise correlation distance inside a cluster.
inline double max_internal_distance(const SimilarityMatrix& sim, const std::vector<std::size_t>& members) {
    double worst = 0;
    for (std::size_t i = 0; i < members.size(); ++i)
        for (std::size_t j = i + 1; j < members.size(); ++j)
            worst = std::max(worst, 1.0 - sim.r_abs(static_cast<Index>(members[i]), static_cast<Index>(members[j])));
    return worst;
}

struct GroupReport {
    double alpha_bar = 0;
    double d_alpha = 0;
    std::vector<std::vector<std::string>> clusters;
    std::vector<double> max_internal_distance;
    std::vector<Merge> merges;
};

inline GroupReport grouping_report(const VariateGrouping& grouping, const std::vector<std::string>& names,
                                   const SimilarityMatrix* sim = nullptr) {
    GroupReport report;
    report.alpha_bar = grouping.alpha_bar;
    report.d_alpha = grouping.d_alpha;
    report.merges = grouping.merges;
    for (const auto& c : grouping.clusters) {
        std::vector<std::string> group;
        for (auto i : c) group.push_back(names.at(i));
        report.clusters.push_back(std::move(group));
        report.max_internal_distance.push_back(sim ? max_internal_distance(*sim, c) : 0.0);
    }
    if (!sim) {
        // without the matrix, the tallest merge that built each cluster bounds its diameter
        for (std::size_t c = 0; c < grouping.clusters.size(); ++c) {
            const auto& members = grouping.clusters[c];
            double h = 0;
            for (const auto& m : grouping.merges)
                if (std::binary_search(members.begin(), members.end(), m.a)) h = std::max(h, m.height);
            report.max_internal_distance[c] = h;
        }
    }
    return report;
}

} // namespace mtlinear
