#pragma once

// KL-divergence NMF with multiplicative updates, plus the row-scaling and
// prior-rate helpers built on top of it.

#include "vaems/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace vaems::nmf {

inline constexpr double kUpdateEps = 1e-12;
inline constexpr double kRateFloor = 1e-6;

struct NmfOptions {
    int iters = 2000;
    double tol = 1e-6;  // relative objective improvement over `window` iterations
    int window = 10;
    std::uint64_t seed = 0;
};

struct NmfFactorization {
    Matrix W;  // N x K
    Matrix H;  // K x M
    std::vector<double> loss_trace;  // [0] is the objective at initialization
};

struct PriorRates {
    Matrix lambda0;  // N x K, strictly positive
};

/// Generalized KL divergence sum(v log(v / vhat) - v + vhat), with 0 log 0 = 0.
/// Returns +inf if vhat == 0 where v > 0.
inline double generalized_kl(const Matrix& V, const Matrix& Vhat) {
    if (V.rows() != Vhat.rows() || V.cols() != Vhat.cols())
        throw ShapeError("generalized_kl: " + shape_str(V) + " vs " + shape_str(Vhat));
    long double total = 0.0L;
    for (Eigen::Index i = 0; i < V.size(); ++i) {
        const double v = V.data()[i];
        const double vh = Vhat.data()[i];
        double term = vh - v;
        if (v > 0) {
            if (vh <= 0) return std::numeric_limits<double>::infinity();
            term += v * std::log(v / vh);
        }
        total += term;
    }
    return static_cast<double>(total);
}

namespace detail {

inline void validate_counts(const Matrix& V, const char* who) {
    if (V.size() == 0) throw ShapeError(std::string(who) + ": empty matrix");
    if (!V.allFinite() || (V.array() < 0.0).any())
        throw DomainError(std::string(who) + ": entries must be finite and >= 0");
}

inline void update_h(const Matrix& V, const Matrix& W, Matrix& H) {
    const Matrix ratio = V.array() / (W * H).array().max(kUpdateEps);
    const RowVector wsum = W.colwise().sum();  // 1 x K
    const Matrix num = W.transpose() * ratio;   // K x M
    for (Eigen::Index k = 0; k < H.rows(); ++k) H.row(k) = H.row(k).cwiseProduct(num.row(k)) / (wsum(k) + kUpdateEps);
}

inline void update_w(const Matrix& V, Matrix& W, const Matrix& H) {
    const Matrix ratio = V.array() / (W * H).array().max(kUpdateEps);
    const Vector hsum = H.rowwise().sum();     // K
    const Matrix num = ratio * H.transpose();  // N x K
    for (Eigen::Index k = 0; k < W.cols(); ++k)
        W.col(k) = W.col(k).cwiseProduct(num.col(k)) / (hsum(k) + kUpdateEps);
}

inline bool converged(const std::vector<double>& trace, const NmfOptions& opt) {
    const auto t = trace.size();
    if (opt.window <= 0 || t <= static_cast<std::size_t>(opt.window)) return false;
    const double before = trace[t - 1 - opt.window];
    const double now = trace.back();
    if (before <= 1e-300) return true;
    return (before - now) / before < opt.tol;
}

}  // namespace detail

/// Fits V ~ W H under the generalized KL objective. W and H start from a
/// seeded uniform(0.1, 1.1) draw.
inline NmfFactorization nmf_fit(const Matrix& V, int k, const NmfOptions& opt = {}) {
    detail::validate_counts(V, "nmf_fit");
    if (k < 1 || k > std::min(V.rows(), V.cols()))
        throw DomainError("nmf_fit: k=" + std::to_string(k) + " outside [1, " +
                          std::to_string(std::min(V.rows(), V.cols())) + "]");
    if (opt.iters < 0) throw DomainError("nmf_fit: iters must be >= 0");
    if (V.sum() <= 0) throw DomainError("nmf_fit: all-zero catalog");

    Rng rng(opt.seed);
    NmfFactorization fac;
    fac.W = uniform_matrix(V.rows(), k, 0.1, 1.1, rng);
    fac.H = uniform_matrix(k, V.cols(), 0.1, 1.1, rng);
    fac.loss_trace.reserve(static_cast<std::size_t>(opt.iters) + 1);
    fac.loss_trace.push_back(generalized_kl(V, fac.W * fac.H));
    for (int it = 0; it < opt.iters; ++it) {
        detail::update_h(V, fac.W, fac.H);
        detail::update_w(V, fac.W, fac.H);
        fac.loss_trace.push_back(generalized_kl(V, fac.W * fac.H));
        if (detail::converged(fac.loss_trace, opt)) break;
    }
    return fac;
}

/// Solves for non-negative weights of V against a fixed basis H by running
/// the W half of the multiplicative updates from a flat start.
inline Matrix project_onto_basis(const Matrix& V, const Matrix& H, int iters = 500, double tol = 1e-8) {
    detail::validate_counts(V, "project_onto_basis");
    if (V.cols() != H.cols()) throw ShapeError("project_onto_basis: V " + shape_str(V) + ", H " + shape_str(H));
    const Vector hsum = H.rowwise().sum();
    Matrix W(V.rows(), H.rows());
    for (Eigen::Index n = 0; n < V.rows(); ++n) {
        const double total = std::max(V.row(n).sum(), 1.0);
        for (Eigen::Index k = 0; k < H.rows(); ++k) W(n, k) = total / (H.rows() * std::max(hsum(k), kUpdateEps));
    }
    double prev = generalized_kl(V, W * H);
    for (int it = 0; it < iters; ++it) {
        detail::update_w(V, W, H);
        const double cur = generalized_kl(V, W * H);
        if (prev > 0 && (prev - cur) / prev < tol) break;
        prev = cur;
    }
    return W;
}

/// Rescales so every row of H sums to one while W H is unchanged.
inline std::pair<Matrix, Matrix> scale_factorization(const Matrix& W, const Matrix& H) {
    if (W.cols() != H.rows()) throw ShapeError("scale_factorization: W " + shape_str(W) + ", H " + shape_str(H));
    const Vector sums = H.rowwise().sum();
    for (Eigen::Index k = 0; k < sums.size(); ++k)
        if (!(sums(k) > 0)) throw DomainError("scale_factorization: signature " + std::to_string(k) + " is all zero");
    Matrix Hs = H.array().colwise() / sums.array();
    Matrix Ws = W.array().rowwise() * sums.transpose().array();
    return {std::move(Ws), std::move(Hs)};
}

/// lambda0[n,k] = W[n,k] * sum_m H[k,m], floored at 1e-6.
inline PriorRates prior_rates_from_nmf(const NmfFactorization& fac) {
    const Vector sums = fac.H.rowwise().sum();
    Matrix rates = fac.W.array().rowwise() * sums.transpose().array();
    return {rates.cwiseMax(kRateFloor)};
}

/// Prior rows for samples outside the fit: projection onto the frozen basis, then the same scaling.
inline PriorRates prior_rates_for(const Matrix& V, const Matrix& H_nmf) {
    NmfFactorization fac{project_onto_basis(V, H_nmf), H_nmf, {}};
    return prior_rates_from_nmf(fac);
}

}  // namespace vaems::nmf
