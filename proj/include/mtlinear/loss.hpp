#pragma once

#include "mtlinear/common.hpp"
#include "mtlinear/models.hpp"

#include <cmath>

namespace mtlinear {

inline constexpr double kPenaltyFloor = 1e-8;

/// e(i, j): batch-mean absolute residual of variate i at horizon step j.
struct ErrorMatrix {
    Matrix e;  // k_g x h
};

/// w(i, j) = (K_j * H_i)^(-a), K_j the mean error over variates at step j, H_i the mean over steps
/// for variate i. The product is floored at kPenaltyFloor so a perfectly fitted variate stays finite.
struct PenaltyWeights {
    Matrix w;  // k_g x h
    double a = 0;
};

inline Matrix residuals(const LinearHead& head, const Design& d) { return design_forecast(head, d) - d.targets; }

inline ErrorMatrix error_matrix(const Design& d, const Matrix& residual) {
    const auto k = static_cast<Index>(d.variates);
    ErrorMatrix out{Matrix::Zero(k, residual.cols())};
    for (std::size_t b = 0; b < d.batch; ++b)
        out.e += residual.middleRows(static_cast<Index>(b) * k, k).cwiseAbs();
    if (d.batch > 0) out.e /= static_cast<double>(d.batch);
    return out;
}

inline ErrorMatrix error_matrix(const LinearHead& head, const Design& d) { return error_matrix(d, residuals(head, d)); }

inline PenaltyWeights penalty_weights(const ErrorMatrix& error, double a) {
    const Matrix& e = error.e;
    if (!e.allFinite()) throw Error("error matrix contains non-finite entries");
    PenaltyWeights p{Matrix::Ones(e.rows(), e.cols()), a};
    if (a == 0) return p;
    const Eigen::RowVectorXd horizon_mean = e.colwise().mean();  // K_j
    const Vector variate_mean = e.rowwise().mean();              // H_i
    for (Index i = 0; i < e.rows(); ++i)
        for (Index j = 0; j < e.cols(); ++j)
            p.w(i, j) = std::pow(std::max(horizon_mean(j) * variate_mean(i), kPenaltyFloor), -a);
    return p;
}

/// Expands per-variate weights to one row per design row.
inline Matrix row_weights(const Design& d, const Matrix& w) {
    const auto k = static_cast<Index>(d.variates);
    if (w.rows() != k) throw Error("penalty weights have " + std::to_string(w.rows()) + " rows, batch has " +
                                   std::to_string(k) + " variates");
    return w.replicate(static_cast<Index>(d.batch), 1);
}

inline double normalizer(const Design& d, Index horizon) {
    return static_cast<double>(d.batch * d.variates) * static_cast<double>(horizon);
}

/// (1 / (B k_g h)) sum_b sum_{i,j} w(i,j) (forecast - y)^2
inline double weighted_loss(const LinearHead& head, const Design& d, const Matrix& w, const std::string& name = "head") {
    Matrix r = residuals(head, d);
    if (!r.allFinite()) throw Error("non-finite forecast from " + name);
    return (row_weights(d, w).array() * r.array().square()).sum() / normalizer(d, r.cols());
}

inline double weighted_loss(const LinearHead& head, const Design& d, const PenaltyWeights& p) {
    return weighted_loss(head, d, p.w);
}

/// Plain MSE over every row and horizon step.
inline double mse(const LinearHead& head, const Design& d) {
    return residuals(head, d).array().square().mean();
}

/// Gradient of the stacked weights given residuals: (2/N) Z^T (scale .* W .* R), bias rows
/// zeroed when the head runs without a bias.
inline Matrix stacked_gradient(const LinearHead& head, const Design& d, const Matrix& w, const Matrix& residual) {
    Matrix weighted = row_weights(d, w).cwiseProduct(residual);
    weighted.array().colwise() *= d.scale.array();
    Matrix g = d.inputs.transpose() * weighted;
    g *= 2.0 / normalizer(d, residual.cols());
    if (!head.use_bias) {
        for (std::size_t b = 0; b < head.blocks(); ++b) g.row((static_cast<Index>(b) + 1) * head.width() - 1).setZero();
    }
    return g;
}

/// Exact gradient of weighted_loss, one matrix per head weight matrix.
inline std::vector<Matrix> analytic_gradient(const LinearHead& head, const Design& d, const Matrix& w) {
    Matrix g = stacked_gradient(head, d, w, residuals(head, d));
    std::vector<Matrix> out;
    for (std::size_t b = 0; b < head.blocks(); ++b) out.push_back(g.middleRows(static_cast<Index>(b) * head.width(), head.width()));
    return out;
}

inline std::vector<Matrix> analytic_gradient(const LinearHead& head, const Design& d, const PenaltyWeights& p) {
    return analytic_gradient(head, d, p.w);
}

/// 2 ||X_W X_W^T||_F for the sqrt(w)-scaled design. Horizon columns carry separate weights, so
/// the Hessian is block diagonal over j and its Frobenius norm is sqrt(sum_j ||Z^T D_j Z||_F^2).
/// `row_weight` is rows x h (or rows x 1 when every horizon shares the weights).
inline double lipschitz_bound(const Matrix& design, const Matrix& row_weight) {
    if (row_weight.rows() != design.rows()) throw Error("weights do not match design rows");
    if (design.size() == 0) return 0.0;
    double sum_sq = 0;
    const auto uniform = [&] {
        for (Index j = 1; j < row_weight.cols(); ++j)
            if (row_weight.col(j) != row_weight.col(0)) return false;
        return true;
    }();
    const Index distinct = uniform ? 1 : row_weight.cols();
    for (Index j = 0; j < distinct; ++j) {
        Matrix scaled = design.array().colwise() * row_weight.col(j).array().sqrt();
        const double f = (scaled.transpose() * scaled).norm();
        sum_sq += f * f;
    }
    if (uniform) sum_sq *= static_cast<double>(row_weight.cols());
    return 2.0 * std::sqrt(sum_sq);
}

/// Lipschitz constant of the gradient of weighted_loss (normalized form) for this batch.
inline double lipschitz_bound(const LinearHead& head, const Design& d, const Matrix& w) {
    Matrix rw = row_weights(d, w);
    rw.array().colwise() *= d.scale.array().square();
    return lipschitz_bound(d.inputs, rw) / normalizer(d, static_cast<Index>(head.horizon));
}

} // namespace mtlinear
