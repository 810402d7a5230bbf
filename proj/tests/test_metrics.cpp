#include "vaems/metrics.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

using namespace vaems;
using namespace vaems::metrics;

namespace {

Matrix shuffled_rows(const Matrix& m, Rng& rng) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(m.rows()));
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
    return out;
}

double brute_force_max(const Matrix& sim) {
    std::vector<int> p(static_cast<std::size_t>(sim.rows()));
    std::iota(p.begin(), p.end(), 0);
    double best = -1e300;
    do {
        double t = 0;
        for (std::size_t i = 0; i < p.size(); ++i) t += sim(static_cast<Eigen::Index>(i), p[i]);
        best = std::max(best, t);
    } while (std::next_permutation(p.begin(), p.end()));
    return best;
}

}  // namespace

TEST(Metrics, GklExamples) {
    Matrix v(1, 1), vh(1, 1);
    v << 2;
    vh << 1;
    EXPECT_NEAR(gkl(v, vh), 2 * std::log(2.0) - 1, 1e-12);
    EXPECT_NEAR(gkl(v, vh), 0.3863, 1e-4);
    v << 0;
    vh << 3;
    EXPECT_DOUBLE_EQ(gkl(v, vh), 3.0);
    v << 4;
    vh << 0;
    EXPECT_THROW(gkl(v, vh), DomainError);
}

TEST(Metrics, GklAveragesPerSample) {
    Matrix v(2, 1), vh(2, 1);
    v << 2, 2;
    vh << 1, 1;
    EXPECT_NEAR(gkl(v, vh), 2 * std::log(2.0) - 1, 1e-12);
}

TEST(Metrics, SelfDistancesAreZero) {
    Rng rng(1);
    const Matrix V = uniform_matrix(10, 12, 0, 30, rng).array().round();
    EXPECT_EQ(gkl(V, V), 0.0);
    EXPECT_EQ(mse(V, V), 0.0);
}

TEST(Metrics, GklMinimizedAtData) {
    Rng rng(2);
    for (int t = 0; t < 20; ++t) {
        const Matrix V = uniform_matrix(3, 5, 1, 20, rng).array().round();
        Matrix P = V;
        P(t % 3, t % 5) *= 1.01;
        EXPECT_GT(gkl(V, P), 0.0);
        P(t % 3, t % 5) = V(t % 3, t % 5) * 0.99;
        EXPECT_GT(gkl(V, P), 0.0);
    }
}

TEST(Metrics, MseExample) {
    Matrix a(2, 2), b(2, 2);
    a << 1, 2, 3, 4;
    b << 1, 2, 3, 6;
    EXPECT_DOUBLE_EQ(mse(a, b), 1.0);
    const Matrix c = a + 3.0 * (b - a);
    EXPECT_DOUBLE_EQ(mse(a, c), 9.0);
    EXPECT_THROW(mse(a, Matrix::Zero(2, 3)), ShapeError);
}

TEST(Metrics, CosineExamples) {
    EXPECT_NEAR(cosine(std::vector<double>{1, 1, 0}, std::vector<double>{1, 0, 0}), 1 / std::sqrt(2.0), 1e-12);
    EXPECT_DOUBLE_EQ(cosine(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}), 1.0);
    EXPECT_DOUBLE_EQ(cosine(std::vector<double>{1, 0}, std::vector<double>{0, 2}), 0.0);
    EXPECT_THROW(cosine(std::vector<double>{0, 0}, std::vector<double>{1, 0}), DomainError);
    Rng rng(3);
    for (int t = 0; t < 100; ++t) {
        const Matrix a = uniform_matrix(1, 8, 0, 1, rng), b = uniform_matrix(1, 8, 0, 1, rng);
        const double c = cosine(a.row(0), b.row(0));
        EXPECT_GE(c, 0.0);
        EXPECT_LE(c, 1.0);
    }
}

TEST(Metrics, AlignIdentityAndSwap) {
    Rng rng(4);
    const Matrix H = uniform_matrix(3, 96, 0, 1, rng);
    auto r = align_hungarian(H, H);
    EXPECT_EQ(r.permutation, (std::vector<int>{0, 1, 2}));
    EXPECT_NEAR(r.acs, 1.0, 1e-12);
    Matrix S = H;
    S.row(0).swap(S.row(1));
    r = align_hungarian(H, S);
    EXPECT_EQ(r.permutation, (std::vector<int>{1, 0, 2}));
    EXPECT_NEAR(r.acs, 1.0, 1e-12);
    EXPECT_THROW(align_hungarian(H, H.topRows(2)), ShapeError);
}

TEST(Metrics, HungarianMatchesBruteForce) {
    Rng rng(5);
    for (int t = 0; t < 200; ++t) {
        const int K = 1 + t % 6;
        const Matrix A = uniform_matrix(K, 12, 0, 1, rng);
        const Matrix B = uniform_matrix(K, 12, 0, 1, rng);
        const auto r = align_hungarian(A, B);
        const Matrix sim = cosine_matrix(A, B);
        EXPECT_EQ(r.total, brute_force_max(sim)) << "instance " << t;
        std::vector<int> sorted = r.permutation;
        std::sort(sorted.begin(), sorted.end());
        for (int i = 0; i < K; ++i) EXPECT_EQ(sorted[static_cast<std::size_t>(i)], i);
        EXPECT_DOUBLE_EQ(r.acs, std::accumulate(r.per_pair_cosine.begin(), r.per_pair_cosine.end(), 0.0) / K);
    }
}

TEST(Metrics, RandomFourByNinetySix) {
    Rng rng(6);
    const Matrix A = uniform_matrix(4, 96, 0, 1, rng), B = uniform_matrix(4, 96, 0, 1, rng);
    EXPECT_EQ(align_hungarian(A, B).total, brute_force_max(cosine_matrix(A, B)));
}

TEST(Metrics, AcsTwoThirds) {
    Matrix H = Matrix::Zero(3, 6);
    H(0, 0) = H(1, 1) = H(2, 2) = 1;
    Matrix E = H;
    E.row(2).setZero();
    E(2, 5) = 1;  // orthogonal to everything in H
    EXPECT_NEAR(acs_to_truth(E, H), 2.0 / 3.0, 1e-12);
}

TEST(Metrics, PermutationInvariance) {
    Rng rng(7);
    for (int t = 0; t < 30; ++t) {
        const Matrix A = uniform_matrix(4, 20, 0, 1, rng), B = uniform_matrix(4, 20, 0, 1, rng);
        const double base = acs_to_truth(A, B);
        EXPECT_NEAR(acs_to_truth(shuffled_rows(A, rng), shuffled_rows(B, rng)), base, 1e-12);
        const std::vector<Matrix> sets{A, B, uniform_matrix(4, 20, 0, 1, rng)};
        const double p = pacs(sets).value;
        std::vector<Matrix> perm;
        for (const auto& s : sets) perm.push_back(shuffled_rows(s, rng));
        EXPECT_NEAR(pacs(perm).value, p, 1e-12);
    }
}

TEST(Metrics, PacsExamples) {
    Rng rng(8);
    const Matrix A = uniform_matrix(3, 10, 0, 1, rng), B = uniform_matrix(3, 10, 0, 1, rng);
    EXPECT_NEAR(pacs({A, A, A}).value, 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(pacs({A, B}).value, acs_to_truth(A, B));
    const Matrix C = uniform_matrix(3, 10, 0, 1, rng);
    const double mean = (acs_to_truth(A, B) + acs_to_truth(A, C) + acs_to_truth(B, C)) / 3;
    EXPECT_NEAR(pacs({A, B, C}).value, mean, 1e-12);
    const auto r = pacs({A, B, uniform_matrix(2, 10, 0, 1, rng)});
    EXPECT_EQ(r.pairs, 1u);
    EXPECT_EQ(r.excluded_pairs, 2u);
    EXPECT_THROW(pacs({A}), DomainError);
    EXPECT_THROW(pacs({A, A.topRows(2)}), DomainError);
}

TEST(Metrics, CiCoverageExamples) {
    const Matrix lo = Matrix::Constant(3, 3, -1e9), hi = Matrix::Constant(3, 3, 1e9);
    Rng rng(9);
    const Matrix truth = uniform_matrix(3, 3, 0, 100, rng);
    EXPECT_DOUBLE_EQ(ci_coverage(lo, hi, truth), 1.0);
    EXPECT_DOUBLE_EQ(ci_coverage(lo, Matrix::Constant(3, 3, -1), truth), 0.0);
    const Matrix edge = truth;
    EXPECT_DOUBLE_EQ(ci_coverage(edge, edge, truth), 1.0);  // inclusive bounds
    EXPECT_THROW(ci_coverage(lo, hi, Matrix::Zero(2, 3)), ShapeError);
    EXPECT_THROW(ci_coverage(hi, lo, truth), DomainError);
}

TEST(Metrics, InverseCdfQuantile) {
    std::vector<double> s{1, 2, 3, 4};
    EXPECT_EQ(inverse_cdf_quantile(s, 0.25), 1);
    EXPECT_EQ(inverse_cdf_quantile(s, 0.26), 2);
    EXPECT_EQ(inverse_cdf_quantile(s, 0.0), 1);
    EXPECT_EQ(inverse_cdf_quantile(s, 1.0), 4);
}

TEST(Metrics, PermuteColumns) {
    Matrix W(1, 3);
    W << 10, 20, 30;
    const Matrix P = permute_columns(W, {2, 0, 1});
    EXPECT_EQ(P(0, 2), 10);
    EXPECT_EQ(P(0, 0), 20);
    EXPECT_EQ(P(0, 1), 30);
}

TEST(Metrics, HeldoutGklFloorsZeroReconstruction) {
    Matrix v(1, 2), vh(1, 2);
    v << 4, 1;
    vh << 0, 1;
    EXPECT_NEAR(heldout_gkl(v, vh), 4 * std::log(4 / kReconstructionFloor) - 4 + kReconstructionFloor, 1e-9);
    vh << 2, 1;
    EXPECT_EQ(heldout_gkl(v, vh), gkl(v, vh));
}
