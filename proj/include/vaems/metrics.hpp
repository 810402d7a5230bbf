#pragma once

// Reconstruction errors, Hungarian-aligned cosine similarity (ACS), pairwise
// ACS across signature sets, and credibility-interval coverage.

#include "vaems/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace vaems::metrics {

/// Generalized KL divergence summed over entries and averaged over samples (rows).
inline double gkl(const Matrix& V, const Matrix& Vhat) {
    if (V.rows() != Vhat.rows() || V.cols() != Vhat.cols())
        throw ShapeError("gkl: " + shape_str(V) + " vs " + shape_str(Vhat));
    if (V.rows() == 0) throw ShapeError("gkl: no samples");
    long double total = 0.0L;
    for (Eigen::Index n = 0; n < V.rows(); ++n) {
        for (Eigen::Index m = 0; m < V.cols(); ++m) {
            const double v = V(n, m);
            const double vh = Vhat(n, m);
            double term = vh - v;
            if (v > 0) {
                if (!(vh > 0))
                    throw DomainError("gkl: reconstruction is 0 where count is " + std::to_string(v) + " at (" +
                                      std::to_string(n) + ", " + std::to_string(m) + ")");
                term += v * std::log(v / vh);
            }
            total += term;
        }
    }
    return static_cast<double>(total / static_cast<long double>(V.rows()));
}

inline constexpr double kReconstructionFloor = 1e-10;

/// gkl with the reconstruction floored at kReconstructionFloor, for held-out
/// data that may carry counts where a learned basis is exactly zero.
inline double heldout_gkl(const Matrix& V, const Matrix& Vhat) {
    return gkl(V, Vhat.array().max(kReconstructionFloor).matrix());
}

inline double mse(const Matrix& V, const Matrix& Vhat) {
    if (V.rows() != Vhat.rows() || V.cols() != Vhat.cols())
        throw ShapeError("mse: " + shape_str(V) + " vs " + shape_str(Vhat));
    if (V.size() == 0) throw ShapeError("mse: empty matrices");
    return (V - Vhat).array().square().sum() / static_cast<double>(V.size());
}

template <class A, class B>
double cosine(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
    if (a.size() != b.size()) throw ShapeError("cosine: length mismatch");
    const double na = a.norm();
    const double nb = b.norm();
    if (!(na > 0) || !(nb > 0)) throw DomainError("cosine: zero vector");
    double dot = 0;
    for (Eigen::Index i = 0; i < a.size(); ++i) dot += a(i) * b(i);
    return std::clamp(dot / (na * nb), -1.0, 1.0);
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    return cosine(Eigen::Map<const RowVector>(a.data(), static_cast<Eigen::Index>(a.size())),
                  Eigen::Map<const RowVector>(b.data(), static_cast<Eigen::Index>(b.size())));
}

/// Pairwise cosine similarity of the rows of A against the rows of B.
inline Matrix cosine_matrix(const Matrix& A, const Matrix& B) {
    Matrix s(A.rows(), B.rows());
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < B.rows(); ++j) s(i, j) = cosine(A.row(i), B.row(j));
    return s;
}

/// Minimum-cost perfect assignment on a square cost matrix (shortest
/// augmenting paths with potentials, O(n^3)). Returns row -> column.
inline std::vector<int> hungarian_min(const Matrix& cost) {
    if (cost.rows() != cost.cols()) throw ShapeError("hungarian: cost matrix must be square, got " + shape_str(cost));
    const int n = static_cast<int>(cost.rows());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> assignment(n, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j] != 0) assignment[p[j] - 1] = j - 1;
    return assignment;
}

struct AlignmentResult {
    std::vector<int> permutation;        // row i of A pairs with row permutation[i] of B
    std::vector<double> per_pair_cosine;
    double acs = 0.0;
    double total = 0.0;                   // sum of per_pair_cosine in row order
};

/// Aligns the rows of two equal-size signature sets maximizing total cosine similarity.
inline AlignmentResult align_hungarian(const Matrix& Ha, const Matrix& Hb) {
    if (Ha.rows() != Hb.rows() || Ha.cols() != Hb.cols())
        throw ShapeError("align_hungarian: signature sets differ in shape: " + shape_str(Ha) + " vs " +
                         shape_str(Hb));
    if (Ha.rows() == 0) throw ShapeError("align_hungarian: empty signature sets");
    const Matrix sim = cosine_matrix(Ha, Hb);
    AlignmentResult r;
    r.permutation = hungarian_min(-sim);
    for (Eigen::Index i = 0; i < sim.rows(); ++i) {
        const double c = sim(i, r.permutation[static_cast<std::size_t>(i)]);
        r.per_pair_cosine.push_back(c);
        r.total += c;
    }
    r.acs = r.total / static_cast<double>(sim.rows());
    return r;
}

inline double acs_to_truth(const Matrix& H_est, const Matrix& H_true) { return align_hungarian(H_est, H_true).acs; }

struct PacsResult {
    double value = 0.0;
    std::size_t pairs = 0;
    std::size_t excluded_pairs = 0;  // pairs whose set sizes differ
};

/// Mean ACS over all unordered pairs of equal-size signature sets.
inline PacsResult pacs(const std::vector<Matrix>& sets) {
    if (sets.size() < 2) throw DomainError("pacs: need at least 2 signature sets");
    PacsResult r;
    double total = 0;
    for (std::size_t i = 0; i < sets.size(); ++i) {
        for (std::size_t j = i + 1; j < sets.size(); ++j) {
            if (sets[i].rows() != sets[j].rows() || sets[i].cols() != sets[j].cols()) {
                ++r.excluded_pairs;
                continue;
            }
            total += align_hungarian(sets[i], sets[j]).acs;
            ++r.pairs;
        }
    }
    if (r.pairs == 0) throw DomainError("pacs: no pair of equal-size signature sets");
    r.value = total / static_cast<double>(r.pairs);
    return r;
}

/// Smallest x with empirical CDF(x) >= p over `sorted` (ascending).
inline double inverse_cdf_quantile(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw DomainError("quantile: no samples");
    const double pos = std::ceil(p * static_cast<double>(sorted.size()) - 1e-12);
    const auto idx = static_cast<std::size_t>(std::clamp(pos, 1.0, static_cast<double>(sorted.size()))) - 1;
    return sorted[idx];
}

/// Fraction of entries with lo <= truth <= hi.
inline double ci_coverage(const Matrix& lo, const Matrix& hi, const Matrix& truth) {
    if (lo.rows() != hi.rows() || lo.cols() != hi.cols() || lo.rows() != truth.rows() || lo.cols() != truth.cols())
        throw ShapeError("ci_coverage: lo " + shape_str(lo) + ", hi " + shape_str(hi) + ", truth " +
                         shape_str(truth));
    if (truth.size() == 0) throw ShapeError("ci_coverage: empty");
    if ((lo.array() > hi.array()).any()) throw DomainError("ci_coverage: lo > hi");
    const auto covered = ((lo.array() <= truth.array()) && (truth.array() <= hi.array())).count();
    return static_cast<double>(covered) / static_cast<double>(truth.size());
}

/// Reorders the columns of an N x K exposure matrix by an alignment permutation
/// (column i goes to position permutation[i]).
inline Matrix permute_columns(const Matrix& W, const std::vector<int>& permutation) {
    Matrix out(W.rows(), W.cols());
    for (std::size_t i = 0; i < permutation.size(); ++i)
        out.col(permutation[i]) = W.col(static_cast<Eigen::Index>(i));
    return out;
}

}  // namespace vaems::metrics
