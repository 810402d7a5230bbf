#include "vaems/data.hpp"
#include "vaems/metrics.hpp"
#include "vaems/vae.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace vaems;
using namespace vaems::vae;

namespace {

// sum_{k=0}^{200} q(k) log(q(k) / p(k)) in log space.
double kl_by_pmf(double lq, double l0) {
    double s = 0;
    for (int k = 0; k <= 200; ++k) {
        const double logq = k * std::log(lq) - lq - std::lgamma(k + 1.0);
        const double logp = k * std::log(l0) - l0 - std::lgamma(k + 1.0);
        s += std::exp(logq) * (logq - logp);
    }
    return s;
}

// Smallest x with P[Poisson(l) <= x] >= p.
int poisson_quantile(double l, double p) {
    double cdf = 0;
    for (int k = 0;; ++k) {
        cdf += std::exp(k * std::log(l) - l - std::lgamma(k + 1.0));
        if (cdf >= p) return k;
    }
}

VaeConfig small_config(int k = 2) {
    VaeConfig c;
    c.k = k;
    c.hidden = {8, 6, 4};
    c.activation = Activation::Softplus;
    c.seed = 3;
    return c;
}

}  // namespace

TEST(Vae, BuildShapes) {
    VaeConfig c;
    c.k = 5;
    const auto m = build_model(96, c);
    EXPECT_EQ(m.blocks[0].weight.value.rows(), 96);
    EXPECT_EQ(m.blocks[0].weight.value.cols(), 128);
    EXPECT_EQ(m.blocks[1].weight.value.cols(), 64);
    EXPECT_EQ(m.blocks[2].weight.value.cols(), 32);
    EXPECT_EQ(m.head_weight.value.rows(), 32);
    EXPECT_EQ(m.head_weight.value.cols(), 5);
    EXPECT_EQ(m.decoder.value.rows(), 5);
    EXPECT_EQ(m.decoder.value.cols(), 96);
    for (const auto* p : m.parameters()) EXPECT_EQ(p->grad.size(), p->value.size());
}

TEST(Vae, BuildDeterministicAndValidated) {
    VaeConfig c;
    c.seed = 11;
    const auto a = build_model(96, c), b = build_model(96, c);
    const auto pa = a.parameters(), pb = b.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE((pa[i]->value.array() == pb[i]->value.array()).all());
    c.k = 40;
    EXPECT_THROW(build_model(96, c), DomainError);
    c.k = 3;
    c.hidden = {64, 64, 32};
    EXPECT_THROW(build_model(96, c), DomainError);
    c.hidden = {128, 64, 32};
    c.beta = 0;
    EXPECT_THROW(build_model(96, c), DomainError);
}

TEST(Vae, DecoderInitFromSignatures) {
    Rng rng(1);
    Matrix H = uniform_matrix(3, 96, 0, 1, rng);
    for (Eigen::Index k = 0; k < 3; ++k) H.row(k) /= H.row(k).sum();
    VaeConfig c;
    const auto m = build_model(96, c, H);
    EXPECT_LE((signatures(m) - H).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Vae, EncodeRatesPositiveAndDeterministic) {
    Rng rng(2);
    auto m = build_model(10, small_config());
    Matrix V = uniform_matrix(6, 10, 0, 50, rng).array().round();
    V.row(3) = V.row(1);
    const Matrix r = encode(m, V);
    EXPECT_TRUE((r.array() > 0).all());
    EXPECT_TRUE((r.row(3).array() == r.row(1).array()).all());
    EXPECT_TRUE((encode(m, V).array() == r.array()).all());
    const Matrix big = Matrix::Constant(3, 10, 1e6);
    EXPECT_TRUE(encode(m, big).allFinite());
    Matrix bad = V;
    bad(0, 0) = std::nan("");
    EXPECT_THROW(encode(m, bad), DomainError);
    EXPECT_THROW(encode(m, Matrix::Ones(2, 9)), ShapeError);
}

TEST(Vae, SamplerMeanAndVariance) {
    for (double lambda : {0.5, 2.0, 5.0, 20.0}) {
        const int n = 100000;
        const auto r = sample_poisson_reparam(Matrix::Constant(n, 1, lambda), 17, 0.1, 50);
        const double mean = r.exposures.mean();
        const double var = (r.exposures.array() - mean).square().sum() / (n - 1);
        EXPECT_LE(std::abs(mean - lambda), 3 * std::sqrt(lambda / n)) << lambda;
        // Var of the sample variance for Poisson: (mu4 - sigma^4 (n-3)/(n-1)) / n, mu4 = l + 3 l^2.
        const double se_var = std::sqrt((lambda + 3 * lambda * lambda - lambda * lambda * (n - 3.0) / (n - 1)) / n);
        EXPECT_LE(std::abs(var - lambda), 4 * se_var) << lambda;
        EXPECT_EQ(r.truncations, 0);
    }
}

TEST(Vae, SamplerTinyRateGivesZeros) {
    const auto r = sample_poisson_reparam(Matrix::Constant(100000, 1, 1e-6), 5, 0.1, 50);
    EXPECT_GE((r.exposures.array() == 0).count(), 99990);
}

TEST(Vae, SamplerTruncation) {
    auto r = sample_poisson_reparam(Matrix::Constant(100000, 1, 3.0), 6, 0.1, 50);
    EXPECT_EQ(r.truncations, 0);
    EXPECT_EQ(r.cap, 50);
    // cap grows with the largest rate
    EXPECT_EQ(ad::effective_series_cap(100, 50), 200);
    r = sample_poisson_reparam(Matrix::Constant(1000, 1, 10.0), 6, 0.1, 1);
    EXPECT_LE(r.exposures.maxCoeff(), static_cast<double>(r.cap));
    EXPECT_THROW(sample_poisson_reparam(Matrix::Zero(1, 1), 1, 0.1, 50), DomainError);
}

TEST(Vae, SamplerGradientPathPositive) {
    const auto r = sample_poisson_reparam(Matrix::Constant(1000, 1, 4.0), 8, 0.1, 50);
    EXPECT_TRUE((r.d_rates.array() >= 0).all());
    // d E[N]/d lambda = 1 for a Poisson count: the relaxed path is close in mean.
    EXPECT_NEAR(r.d_rates.mean(), 1.0, 0.1);
}

TEST(Vae, DecodeExamples) {
    auto m = build_model(10, small_config());
    Matrix W(1, 2);
    W << 10, 0;
    EXPECT_NEAR(decode(m, W).sum(), 10.0, 1e-9);
    EXPECT_EQ(decode(m, Matrix::Zero(3, 2)).cwiseAbs().maxCoeff(), 0.0);
    Rng rng(3);
    const Matrix Wr = uniform_matrix(5, 2, 0, 100, rng);
    const Matrix H = signatures(m);
    EXPECT_LE((decode(m, Wr) - Wr * H).cwiseAbs().maxCoeff(), 1e-12);
    for (Eigen::Index n = 0; n < 5; ++n) EXPECT_NEAR(decode(m, Wr).row(n).sum(), Wr.row(n).sum(), 1e-9 * Wr.row(n).sum());
    for (Eigen::Index k = 0; k < H.rows(); ++k) EXPECT_NEAR(H.row(k).sum(), 1.0, 1e-9);
    W << -1, 0;
    EXPECT_THROW(decode(m, W), DomainError);
}

TEST(Vae, KlPoissonExamples) {
    EXPECT_EQ(kl_poisson(3.0, 3.0), 0.0);
    EXPECT_NEAR(kl_poisson(2.0, 1.0), 1 - 2 + 2 * std::log(2.0), 1e-12);
    EXPECT_NEAR(kl_poisson(2.0, 1.0), 0.3863, 1e-4);
    EXPECT_NEAR(kl_poisson(1.0, 2.0), 0.3069, 1e-4);
    EXPECT_NEAR(kl_poisson(2.0, 1.0), kl_by_pmf(2.0, 1.0), 1e-10);
    EXPECT_NEAR(kl_poisson(1.0, 2.0), kl_by_pmf(1.0, 2.0), 1e-10);
    EXPECT_THROW(kl_poisson(0.0, 1.0), DomainError);
    Matrix a(1, 2), b(1, 2);
    a << 2, 1;
    b << 1, 2;
    EXPECT_NEAR(kl_poisson(a, b), kl_poisson(2.0, 1.0) + kl_poisson(1.0, 2.0), 1e-12);
}

TEST(Vae, KlMatchesPmfOracle) {
    Rng rng(4);
    std::uniform_real_distribution<double> u(0.1, 50);
    for (int t = 0; t < 100; ++t) {
        const double lq = u(rng), l0 = u(rng);
        EXPECT_NEAR(kl_poisson(lq, l0), kl_by_pmf(lq, l0), 1e-8);
        EXPECT_GE(kl_poisson(lq, l0), 0.0);
    }
}

TEST(Vae, KlMatchesMonteCarlo) {
    const double lq = 3.5, l0 = 6.0;
    Rng rng(5);
    std::poisson_distribution<int> q(lq);
    const int n = 100000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        const int w = q(rng);
        const double term = w * std::log(lq / l0) - lq + l0;
        s += term;
        s2 += term * term;
    }
    const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
    EXPECT_LE(std::abs(mean - kl_poisson(lq, l0)), 3 * se);
}

TEST(Vae, KlZeroWhenRatesMatchPrior) {
    Rng rng(6);
    auto m = build_model(8, small_config());
    const Matrix V = uniform_matrix(8, 8, 0, 20, rng).array().round();
    const Matrix prior = encode(m, V);
    const auto t = elbo_loss(m, V, prior, 1.0, 3);
    EXPECT_NEAR(t.kl, 0.0, 1e-12);
    EXPECT_NEAR(t.loss, t.reconstruction, 1e-9);
}

TEST(Vae, BetaLinearity) {
    Rng rng(7);
    auto m = build_model(8, small_config());
    const Matrix V = uniform_matrix(8, 8, 0, 20, rng).array().round();
    const Matrix prior = uniform_matrix(8, 2, 1, 30, rng);
    const auto a = elbo_loss(m, V, prior, 1.0, 4);
    const auto b = elbo_loss(m, V, prior, 2.0, 4);
    EXPECT_NEAR(b.loss - a.loss, a.kl, 1e-9 * std::abs(a.loss));
    EXPECT_GT(a.kl, 0);
    EXPECT_THROW(elbo_loss(m, V, prior, 0.0, 4), DomainError);
}

TEST(Vae, ReconstructionMatchesScalarLikelihood) {
    Rng rng(8);
    for (int t = 0; t < 20; ++t) {
        auto cfg = small_config();
        cfg.seed = static_cast<std::uint64_t>(t);
        auto m = build_model(8, cfg);
        const Matrix V = uniform_matrix(5, 8, 0, 20, rng).array().round();
        const Matrix prior = uniform_matrix(5, 2, 1, 30, rng);
        ad::Tape tape;
        ForwardOptions fo;
        fo.sample_seed = static_cast<std::uint64_t>(t);
        const auto f = build_forward(tape, m, V, prior, 1.0, fo);
        const Matrix vhat = tape.value(f.exposures) * signatures(m);
        double ll = 0;
        for (Eigen::Index n = 0; n < V.rows(); ++n)
            for (Eigen::Index j = 0; j < V.cols(); ++j) {
                const double v = V(n, j), r = vhat(n, j);
                ll += (v > 0 ? v * std::log(r) : 0.0) - r - std::lgamma(v + 1);
            }
        EXPECT_NEAR(-tape.scalar(f.nll), ll, 1e-9 * std::max(1.0, std::abs(ll)));
    }
}

TEST(Vae, ElboGradientRelaxedPath) {
    Rng rng(9);
    for (int t = 0; t < 100; ++t) {
        auto cfg = small_config();
        cfg.seed = static_cast<std::uint64_t>(t);
        auto m = build_model(8, cfg);
        const Matrix V = uniform_matrix(8, 8, 0, 20, rng).array().round();
        const Matrix prior = uniform_matrix(8, 2, 1, 30, rng);
        auto build = [&](ad::Tape& tape) {
            ForwardOptions fo;
            fo.training = true;
            fo.update_running = false;
            fo.sample_seed = static_cast<std::uint64_t>(t);
            fo.sample_mode = ad::SampleMode::Relaxed;
            return build_forward(tape, m, V, prior, 0.7, fo).loss;
        };
        for (auto* p : m.parameters())
            EXPECT_LE(ad::finite_difference_check(build, *p, 1e-5), 1e-3) << p->name << " seed " << t;
    }
}

TEST(Vae, EarlyStoppingConstantLoss) {
    EarlyStopping s(50, 2000);
    int epochs = 0;
    while (!s.update(1.0)) ++epochs;
    EXPECT_EQ(s.epoch(), 51);
    EXPECT_EQ(s.best_epoch(), 1);
    EXPECT_EQ(s.reason(), StopReason::Patience);
}

TEST(Vae, EarlyStoppingDecreasingLoss) {
    EarlyStopping s(50, 2000);
    double loss = 1e6;
    while (!s.update(loss)) loss -= 1;
    EXPECT_EQ(s.epoch(), 2000);
    EXPECT_EQ(s.best_epoch(), 2000);
    EXPECT_EQ(s.reason(), StopReason::MaxEpochs);
}

TEST(Vae, EarlyStoppingLateImprovementResetsPatience) {
    EarlyStopping s(3, 100);
    const std::vector<double> seq{5, 4, 4, 4, 3, 6, 6, 6};
    std::size_t i = 0;
    while (!s.update(seq[i])) ++i;
    EXPECT_EQ(s.epoch(), 8);
    EXPECT_EQ(s.best_epoch(), 5);
    EarlyStopping d(3, 100);
    EXPECT_TRUE(d.update(std::nan("")));
    EXPECT_EQ(d.reason(), StopReason::Diverged);
}

TEST(Vae, TrainingReportContract) {
    data::SimulationOptions so;
    so.n = 80;
    so.m = 12;
    so.k = 2;
    so.seed = 4;
    so.exposure_mean = 300;
    const auto [cat, truth] = data::simulate(so);
    const auto split = data::make_splits(80, 1);
    const Matrix tr = data::select_rows(cat.counts, split.train_idx);
    const Matrix va = data::select_rows(cat.counts, split.val_idx);
    auto cfg = small_config();
    cfg.max_epochs = 40;
    cfg.patience = 10;
    cfg.batch_size = 16;
    const auto a = fit(tr, va, cfg);
    const auto& r = a.report;
    ASSERT_FALSE(r.epoch_losses.empty());
    double best = 1e300;
    int best_epoch = 0;
    for (std::size_t e = 0; e < r.epoch_losses.size(); ++e)
        if (r.epoch_losses[e].val < best) {
            best = r.epoch_losses[e].val;
            best_epoch = static_cast<int>(e) + 1;
        }
    EXPECT_EQ(r.best_epoch, best_epoch);
    EXPECT_EQ(r.best_val_loss, best);
    EXPECT_TRUE(r.stopped_reason == StopReason::MaxEpochs || r.stopped_reason == StopReason::Patience);
    if (r.stopped_reason == StopReason::Patience) {
        EXPECT_EQ(static_cast<int>(r.epoch_losses.size()) - r.best_epoch, cfg.patience);
    }
    EXPECT_TRUE(std::isfinite(r.final_train_loss));
    EXPECT_GT(r.draws, 0);
    const auto b = fit(tr, va, cfg);
    ASSERT_EQ(a.report.epoch_losses.size(), b.report.epoch_losses.size());
    for (std::size_t e = 0; e < r.epoch_losses.size(); ++e) {
        EXPECT_EQ(a.report.epoch_losses[e].train, b.report.epoch_losses[e].train);
        EXPECT_EQ(a.report.epoch_losses[e].val, b.report.epoch_losses[e].val);
    }
    EXPECT_EQ(a.report.final_train_loss, b.report.final_train_loss);
    EXPECT_THROW(fit(tr, Matrix(0, 12), cfg), DomainError);
}

TEST(Vae, ForwardEvalQuantilesAtRateFour) {
    VaeConfig c;
    c.k = 1;
    c.hidden = {4, 3, 2};
    auto m = build_model(2, c);
    m.head_weight.value.setZero();
    m.head_bias.value(0, 0) = softplus_inverse(4.0 - kRateFloor);
    TrainedModel tm{m, Matrix::Ones(1, 2), Matrix::Ones(1, 1), {}};
    Matrix V(3, 2);
    V << 1, 0, 0, 1, 1, 0;  // row total 1 keeps the library-size scale at 1
    const auto r = forward_eval(tm, V, 10000, 21);
    EXPECT_NEAR(r.W_hat(0, 0), 4.0, 1e-12);
    EXPECT_EQ(poisson_quantile(4.0, 0.025), 1);
    EXPECT_EQ(poisson_quantile(4.0, 0.975), 8);
    for (Eigen::Index n = 0; n < 3; ++n) {
        EXPECT_EQ(r.lo(n, 0), 1);
        EXPECT_EQ(r.hi(n, 0), 8);
        EXPECT_NEAR(r.V_hat.row(n).sum(), r.W_hat.row(n).sum(), 1e-9);
    }
    const auto again = forward_eval(tm, V, 10, 99);
    EXPECT_TRUE((again.W_hat.array() == r.W_hat.array()).all());
    EXPECT_THROW(forward_eval(tm, Matrix::Ones(1, 3), 10), ShapeError);
}
