#pragma once

// Asymmetric VAE with a Poisson latent layer: a three-block encoder maps
// counts to Poisson rates, exposures are drawn by counting exponential
// arrivals, and a single non-negative row-stochastic matrix decodes them.

#include "vaems/core.hpp"
#include "vaems/data.hpp"
#include "vaems/diffengine.hpp"
#include "vaems/metrics.hpp"
#include "vaems/nmf.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace vaems::vae {

enum class Activation { Relu, Softplus };

inline const char* activation_name(Activation a) { return a == Activation::Relu ? "relu" : "softplus"; }
inline Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "softplus") return Activation::Softplus;
    throw DomainError("unknown activation " + s);
}

inline constexpr double kRateFloor = 1e-6;
inline constexpr double kLogEps = 1e-10;

struct VaeConfig {
    int k = 3;
    std::array<int, 3> hidden{128, 64, 32};
    Activation activation = Activation::Relu;
    double beta = 1.0;
    double learning_rate = 1e-3;
    int batch_size = 32;
    int max_epochs = 2000;
    int patience = 50;
    double relax_temperature = 0.1;
    long series_cap = 50;
    std::uint64_t seed = 0;

    void validate() const {
        if (k < 1) throw DomainError("config: k must be >= 1");
        if (!(hidden[0] > hidden[1] && hidden[1] > hidden[2]))
            throw DomainError("config: hidden widths must be strictly decreasing");
        if (hidden[2] < k)
            throw DomainError("config: final hidden width " + std::to_string(hidden[2]) + " < k=" + std::to_string(k));
        if (!(beta > 0)) throw DomainError("config: beta must be > 0");
        if (!(learning_rate > 0)) throw DomainError("config: learning_rate must be > 0");
        if (batch_size < 2) throw DomainError("config: batch_size must be >= 2");
        if (max_epochs < 1 || patience < 1) throw DomainError("config: max_epochs and patience must be >= 1");
        if (!(relax_temperature > 0)) throw DomainError("config: relax_temperature must be > 0");
        if (series_cap < 1) throw DomainError("config: series_cap must be >= 1");
    }
};

struct EncoderBlock {
    ad::Parameter weight;
    ad::Parameter bias;
    ad::Parameter gamma;
    ad::Parameter beta;
    ad::BatchNormState bn;
};

struct VaeModel {
    VaeConfig config;
    Eigen::Index channels = 0;
    std::array<EncoderBlock, 3> blocks;
    ad::Parameter head_weight;
    ad::Parameter head_bias;
    ad::Parameter decoder;  // K x M, unconstrained; signatures are rownorm(softplus(decoder))

    std::vector<ad::Parameter*> parameters() {
        std::vector<ad::Parameter*> out;
        for (auto& b : blocks)
            for (auto* p : {&b.weight, &b.bias, &b.gamma, &b.beta}) out.push_back(p);
        out.push_back(&head_weight);
        out.push_back(&head_bias);
        out.push_back(&decoder);
        return out;
    }

    std::vector<const ad::Parameter*> parameters() const {
        auto mut = const_cast<VaeModel*>(this)->parameters();
        return {mut.begin(), mut.end()};
    }
};

inline double softplus_inverse(double y) { return y > 30 ? y : std::log(std::expm1(y)); }

/// Decoder parameters whose softplus is proportional to the given row-stochastic signatures.
inline Matrix decoder_from_signatures(const Matrix& H) {
    Matrix Hs = H;
    for (Eigen::Index k = 0; k < H.rows(); ++k) {
        const double s = H.row(k).sum();
        if (!(s > 0)) throw DomainError("decoder init: signature " + std::to_string(k) + " is all zero");
        Hs.row(k) /= s;
    }
    const double m = static_cast<double>(H.cols());
    return Hs.unaryExpr([m](double v) { return softplus_inverse(std::max(v * m, 1e-8)); });
}

/// Fan-in uniform initialization; the decoder starts from `init_signatures` if given.
inline VaeModel build_model(Eigen::Index channels, const VaeConfig& config,
                            const std::optional<Matrix>& init_signatures = std::nullopt) {
    if (channels < 1) throw DomainError("build_model: need at least one channel");
    config.validate();
    VaeModel model;
    model.config = config;
    model.channels = channels;
    Rng rng(mix_seed(config.seed, 0xE1));
    Eigen::Index in = channels;
    for (std::size_t i = 0; i < 3; ++i) {
        const Eigen::Index out = config.hidden[i];
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        auto& b = model.blocks[i];
        const std::string name = "encoder." + std::to_string(i);
        b.weight = ad::Parameter(name + ".weight", uniform_matrix(in, out, -bound, bound, rng));
        b.bias = ad::Parameter(name + ".bias", uniform_matrix(1, out, -bound, bound, rng));
        b.gamma = ad::Parameter(name + ".bn_gamma", Matrix::Ones(1, out));
        b.beta = ad::Parameter(name + ".bn_beta", Matrix::Zero(1, out));
        b.bn = ad::BatchNormState(out);
        in = out;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    model.head_weight = ad::Parameter("head.weight", uniform_matrix(in, config.k, -bound, bound, rng));
    model.head_bias = ad::Parameter("head.bias", uniform_matrix(1, config.k, -bound, bound, rng));
    if (init_signatures) {
        if (init_signatures->rows() != config.k || init_signatures->cols() != channels)
            throw ShapeError("build_model: initial signatures " + shape_str(*init_signatures) + ", expected " +
                             std::to_string(config.k) + "x" + std::to_string(channels));
        model.decoder = ad::Parameter("decoder", decoder_from_signatures(*init_signatures));
    } else {
        model.decoder = ad::Parameter("decoder", decoder_from_signatures(uniform_matrix(config.k, channels, 0.1, 1.1, rng)));
    }
    return model;
}

/// Per-entry library-size multiplier for the rate head: max(row total, 1) / K.
inline Matrix rate_scale(const Matrix& V, int k) {
    Matrix s(V.rows(), k);
    for (Eigen::Index n = 0; n < V.rows(); ++n) s.row(n).setConstant(std::max(V.row(n).sum(), 1.0) / k);
    return s;
}

struct ForwardOptions {
    bool training = false;
    bool update_running = true;
    std::uint64_t sample_seed = 0;
    ad::SampleMode sample_mode = ad::SampleMode::StraightThrough;
};

struct ForwardNodes {
    ad::NodeId rates = 0;
    ad::NodeId exposures = 0;
    ad::NodeId signatures = 0;
    ad::NodeId reconstruction = 0;
    ad::NodeId nll = 0;  // -sum log p(v | w), including the log v! constant
    ad::NodeId kl = 0;
    ad::NodeId loss = 0;
};

inline ad::NodeId encoder_nodes(ad::Tape& tape, VaeModel& model, const Matrix& V, bool training, bool update_running) {
    if (V.cols() != model.channels)
        throw ShapeError("encode: batch has " + std::to_string(V.cols()) + " channels, model expects " +
                         std::to_string(model.channels));
    if (!V.allFinite()) throw DomainError("encode: non-finite input");
    ad::NodeId h = tape.constant(V);
    for (auto& b : model.blocks) {
        h = tape.affine(h, tape.param(b.weight), tape.param(b.bias));
        h = tape.batch_norm(h, tape.param(b.gamma), tape.param(b.beta), b.bn, training, update_running);
        h = model.config.activation == Activation::Relu ? tape.relu(h) : tape.softplus(h);
    }
    const ad::NodeId head = tape.affine(h, tape.param(model.head_weight), tape.param(model.head_bias));
    const ad::NodeId scaled = tape.mul(tape.softplus(head), tape.constant(rate_scale(V, model.config.k)));
    return tape.add(scaled, tape.constant(Matrix::Constant(V.rows(), model.config.k, kRateFloor)));
}

inline ad::NodeId signature_nodes(ad::Tape& tape, VaeModel& model) {
    return tape.row_normalize(tape.softplus(tape.param(model.decoder)));
}

inline double log_factorial_sum(const Matrix& V) {
    double s = 0;
    for (Eigen::Index i = 0; i < V.size(); ++i) s += std::lgamma(V.data()[i] + 1.0);
    return s;
}

/// Builds the negated beta-ELBO for one batch:
/// sum[vhat - v log vhat + log v!] + beta * sum[l0 - l + l log(l / l0)].
inline ForwardNodes build_forward(ad::Tape& tape, VaeModel& model, const Matrix& V, const Matrix& prior, double beta,
                                  const ForwardOptions& opt, std::optional<double> log_fact = std::nullopt) {
    if (!(beta > 0)) throw DomainError("elbo: beta must be > 0");
    if (prior.rows() != V.rows() || prior.cols() != model.config.k)
        throw ShapeError("elbo: prior " + shape_str(prior) + " for batch " + shape_str(V));
    if (!(prior.array() > 0).all()) throw DomainError("elbo: prior rates must be > 0");
    ForwardNodes f;
    f.rates = encoder_nodes(tape, model, V, opt.training, opt.update_running);
    ad::PoissonSampleOptions so;
    so.seed = opt.sample_seed;
    so.tau = model.config.relax_temperature;
    so.series_cap = model.config.series_cap;
    so.mode = opt.sample_mode;
    f.exposures = tape.poisson_sample(f.rates, so);
    f.signatures = signature_nodes(tape, model);
    f.reconstruction = tape.matmul(f.exposures, f.signatures);

    const ad::NodeId v = tape.constant(V);
    const ad::NodeId log_vhat =
        tape.log(tape.add(f.reconstruction, tape.constant(Matrix::Constant(V.rows(), V.cols(), kLogEps))));
    const ad::NodeId neg_ll = tape.sub(f.reconstruction, tape.mul(v, log_vhat));
    const double lf = log_fact ? *log_fact : log_factorial_sum(V);
    f.nll = tape.add(tape.sum(neg_ll), tape.constant(Matrix::Constant(1, 1, lf)));

    const ad::NodeId l0 = tape.constant(prior);
    const ad::NodeId log_ratio = tape.sub(tape.log(f.rates), tape.constant(prior.array().log().matrix()));
    f.kl = tape.sum(tape.sub(tape.add(l0, tape.mul(f.rates, log_ratio)), f.rates));
    f.loss = tape.add(f.nll, tape.scale(f.kl, beta));
    return f;
}

/// Encoder rates in evaluation mode (running batch-norm statistics).
inline Matrix encode(VaeModel& model, const Matrix& V) {
    ad::Tape tape;
    return tape.value(encoder_nodes(tape, model, V, false, false));
}

/// Row-stochastic signature matrix of the decoder.
inline Matrix signatures(const VaeModel& model) {
    Matrix sp = model.decoder.value.unaryExpr([](double x) { return ad::softplus(x); });
    for (Eigen::Index k = 0; k < sp.rows(); ++k) sp.row(k) /= std::max(sp.row(k).sum(), 1e-12);
    return sp;
}

inline Matrix decode(const VaeModel& model, const Matrix& W) {
    if (W.cols() != model.config.k)
        throw ShapeError("decode: exposures " + shape_str(W) + ", model has k=" + std::to_string(model.config.k));
    if ((W.array() < 0).any()) throw DomainError("decode: negative exposure");
    return W * signatures(model);
}

struct PoissonSampleResult {
    Matrix exposures;
    Matrix d_rates;  // derivative of the relaxed count with respect to each rate
    long truncations = 0;
    long cap = 0;
};

inline PoissonSampleResult sample_poisson_reparam(const Matrix& rates, std::uint64_t seed, double tau, long cap,
                                                  ad::SampleMode mode = ad::SampleMode::StraightThrough) {
    ad::Tape tape;
    ad::Parameter p("rates", rates);
    ad::PoissonSampleOptions so;
    so.seed = seed;
    so.tau = tau;
    so.series_cap = cap;
    so.mode = mode;
    const ad::NodeId w = tape.poisson_sample(tape.param(p), so);
    tape.backward(tape.sum(w));
    return {tape.value(w), p.grad, tape.truncations(), ad::effective_series_cap(rates.maxCoeff(), cap)};
}

/// Closed-form KL(Poisson(lq) || Poisson(l0)) = l0 - lq + lq log(lq / l0).
inline double kl_poisson(double lq, double l0) {
    if (!(lq > 0) || !(l0 > 0)) throw DomainError("kl_poisson: rates must be > 0");
    return l0 - lq + lq * std::log(lq / l0);
}

inline double kl_poisson(const Matrix& lq, const Matrix& l0) {
    if (lq.rows() != l0.rows() || lq.cols() != l0.cols())
        throw ShapeError("kl_poisson: " + shape_str(lq) + " vs " + shape_str(l0));
    double s = 0;
    for (Eigen::Index i = 0; i < lq.size(); ++i) s += kl_poisson(lq.data()[i], l0.data()[i]);
    return s;
}

struct ElboTerms {
    double loss = 0;
    double reconstruction = 0;  // negative Poisson log-likelihood
    double kl = 0;
};

/// Evaluates the negated beta-ELBO on a batch (evaluation mode, one seeded sample).
inline ElboTerms elbo_loss(VaeModel& model, const Matrix& V, const Matrix& prior, double beta,
                           std::uint64_t sample_seed = 0) {
    ad::Tape tape;
    ForwardOptions opt;
    opt.sample_seed = sample_seed;
    const ForwardNodes f = build_forward(tape, model, V, prior, beta, opt);
    return {tape.scalar(f.loss), tape.scalar(f.nll), tape.scalar(f.kl)};
}

/// Adaptive-moment gradient descent over a fixed parameter list.
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(const std::vector<ad::Parameter*>& params) {
        if (m_.empty()) {
            for (auto* p : params) {
                m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
                v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
            }
        }
        ++t_;
        const double c1 = 1.0 - std::pow(b1_, t_);
        const double c2 = 1.0 - std::pow(b2_, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = *params[i];
            m_[i] = b1_ * m_[i] + (1.0 - b1_) * p.grad;
            v_[i] = b2_ * v_[i] + (1.0 - b2_) * p.grad.cwiseProduct(p.grad);
            p.value.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
        }
    }

private:
    double lr_, b1_, b2_, eps_;
    long t_ = 0;
    std::vector<Matrix> m_, v_;
};

enum class StopReason { MaxEpochs, Patience, Diverged };

inline const char* stop_reason_name(StopReason r) {
    switch (r) {
        case StopReason::MaxEpochs: return "max_epochs";
        case StopReason::Patience: return "patience";
        case StopReason::Diverged: return "diverged";
    }
    return "?";
}

inline StopReason parse_stop_reason(const std::string& s) {
    if (s == "max_epochs") return StopReason::MaxEpochs;
    if (s == "patience") return StopReason::Patience;
    if (s == "diverged") return StopReason::Diverged;
    throw ParseError("unknown stop reason " + s);
}

/// Patience-based early stopping on a validation-loss sequence (epochs are 1-based).
class EarlyStopping {
public:
    EarlyStopping(int patience, int max_epochs) : patience_(patience), max_epochs_(max_epochs) {}

    /// Records the loss of the next epoch; returns true when training should stop.
    bool update(double val_loss) {
        ++epoch_;
        if (!std::isfinite(val_loss)) {
            reason_ = StopReason::Diverged;
            return true;
        }
        if (val_loss < best_) {
            best_ = val_loss;
            best_epoch_ = epoch_;
            since_best_ = 0;
        } else {
            ++since_best_;
        }
        if (since_best_ >= patience_) {
            reason_ = StopReason::Patience;
            return true;
        }
        if (epoch_ >= max_epochs_) {
            reason_ = StopReason::MaxEpochs;
            return true;
        }
        return false;
    }

    bool improved_last() const { return since_best_ == 0 && best_epoch_ == epoch_; }
    int epoch() const { return epoch_; }
    int best_epoch() const { return best_epoch_; }
    double best() const { return best_; }
    StopReason reason() const { return reason_; }

private:
    int patience_;
    int max_epochs_;
    int epoch_ = 0;
    int best_epoch_ = 0;
    int since_best_ = 0;
    double best_ = std::numeric_limits<double>::infinity();
    StopReason reason_ = StopReason::MaxEpochs;
};

struct EpochLoss {
    double train = 0;  // per-sample negated beta-ELBO
    double val = 0;
};

struct TrainReport {
    std::vector<EpochLoss> epoch_losses;
    int best_epoch = 0;
    StopReason stopped_reason = StopReason::MaxEpochs;
    double best_val_loss = std::numeric_limits<double>::infinity();
    double final_train_loss = 0;  // per-sample, pooled unnormalized train + validation
    long truncations = 0;
    long draws = 0;
};

struct TrainedModel {
    VaeModel model;
    Matrix prior_basis;  // H of the NMF fit that produced the prior rates
    Matrix train_prior;  // prior rates of the training rows
    TrainReport report;
};

/// Per-sample negated beta-ELBO of `V` with prior rows projected onto `prior_basis`.
inline double per_sample_loss(VaeModel& model, const Matrix& V, const Matrix& prior_basis, double beta,
                              std::uint64_t seed) {
    const auto prior = nmf::prior_rates_for(V, prior_basis);
    return elbo_loss(model, V, prior.lambda0, beta, seed).loss / static_cast<double>(V.rows());
}

/// Minimizes the negated beta-ELBO on 100X-normalized training counts with
/// early stopping on the validation loss; restores the best epoch.
/// `train_counts` and `val_counts` are unnormalized.
inline TrainedModel train(VaeModel model, const Matrix& train_counts, const Matrix& val_counts,
                          const nmf::NmfFactorization& prior_fit) {
    const VaeConfig& cfg = model.config;
    cfg.validate();
    if (train_counts.rows() < 2 || val_counts.rows() < 1) throw DomainError("train: empty split");
    if (train_counts.cols() != model.channels || val_counts.cols() != model.channels)
        throw ShapeError("train: channel mismatch");
    if (prior_fit.W.rows() != train_counts.rows() || prior_fit.H.rows() != cfg.k)
        throw ShapeError("train: prior fit " + shape_str(prior_fit.W) + " does not match training data " +
                         shape_str(train_counts));

    const Matrix train_x = data::normalize_100x(train_counts).values;
    const Matrix val_x = data::normalize_100x(val_counts).values;
    const Matrix train_prior = nmf::prior_rates_from_nmf(prior_fit).lambda0;
    const Matrix val_prior = nmf::prior_rates_for(val_x, prior_fit.H).lambda0;
    std::vector<double> row_log_fact(static_cast<std::size_t>(train_x.rows()));
    for (Eigen::Index n = 0; n < train_x.rows(); ++n)
        row_log_fact[static_cast<std::size_t>(n)] = log_factorial_sum(train_x.row(n));
    const double val_log_fact = log_factorial_sum(val_x);
    const std::uint64_t val_seed = mix_seed(cfg.seed, 0x7A1);

    const auto n_train = static_cast<std::size_t>(train_x.rows());
    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(mix_seed(cfg.seed, 0x5F));

    Adam adam(cfg.learning_rate);
    auto params = model.parameters();
    EarlyStopping stopper(cfg.patience, cfg.max_epochs);
    TrainReport report;
    VaeModel best = model;
    std::uint64_t step = 0;

    while (true) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0;
        for (std::size_t start = 0; start < n_train;) {
            std::size_t end = std::min(n_train, start + batch);
            if (n_train - end < 2) end = n_train;  // fold a short tail into this batch
            std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(end));
            const Matrix xb = data::select_rows(train_x, rows);
            const Matrix pb = data::select_rows(train_prior, rows);
            double lf = 0;
            for (auto r : rows) lf += row_log_fact[r];

            for (auto* p : params) p->zero_grad();
            ad::Tape tape;
            ForwardOptions fo;
            fo.training = true;
            fo.sample_seed = mix_seed(cfg.seed, 0x100000 + step++);
            const ForwardNodes f = build_forward(tape, model, xb, pb, cfg.beta, fo, lf);
            tape.backward(f.loss);
            adam.step(params);
            epoch_loss += tape.scalar(f.loss);
            report.truncations += tape.truncations();
            report.draws += tape.draws();
            start = end;
        }
        ad::Tape vtape;
        ForwardOptions vo;
        vo.sample_seed = val_seed;
        const ForwardNodes vf = build_forward(vtape, model, val_x, val_prior, cfg.beta, vo, val_log_fact);
        const double val_loss = vtape.scalar(vf.loss) / static_cast<double>(val_x.rows());
        report.epoch_losses.push_back({epoch_loss / static_cast<double>(n_train), val_loss});
        const bool stop = stopper.update(val_loss);
        if (stopper.improved_last()) best = model;
        if (stop) break;
    }

    report.best_epoch = stopper.best_epoch();
    report.best_val_loss = stopper.best();
    report.stopped_reason = stopper.reason();
    TrainedModel out{std::move(best), prior_fit.H, train_prior, std::move(report)};
    if (out.report.best_epoch > 0) {
        Matrix pooled(train_counts.rows() + val_counts.rows(), train_counts.cols());
        pooled << train_counts, val_counts;
        out.report.final_train_loss =
            per_sample_loss(out.model, pooled, out.prior_basis, cfg.beta, mix_seed(cfg.seed, 0xF1));
    } else {
        out.report.final_train_loss = std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

/// NMF prior on normalized training counts, decoder initialized from its basis, then train().
inline TrainedModel fit(const Matrix& train_counts, const Matrix& val_counts, const VaeConfig& cfg,
                        const nmf::NmfOptions& nmf_opt = {}) {
    cfg.validate();
    nmf::NmfOptions o = nmf_opt;
    o.seed = cfg.seed;
    const auto prior_fit = nmf::nmf_fit(data::normalize_100x(train_counts).values, cfg.k, o);
    VaeModel model = build_model(train_counts.cols(), cfg, prior_fit.H);
    return train(std::move(model), train_counts, val_counts, prior_fit);
}

struct EvalResult {
    Matrix W_hat;  // posterior mean exposures (the encoder rates)
    Matrix H;
    Matrix V_hat;  // W_hat * H
    Matrix lo;     // 2.5% quantile of Monte Carlo exposure draws
    Matrix hi;     // 97.5% quantile
};

struct Intervals {
    Matrix lo;  // 2.5% quantile
    Matrix hi;  // 97.5% quantile
};

/// Central 95% intervals of Poisson(rate) per entry from `n_samples`
/// Poisson-process draws each.
inline Intervals poisson_intervals(const Matrix& rates, int n_samples, std::uint64_t seed, double tau, long series_cap) {
    if (n_samples < 1) throw DomainError("poisson_intervals: n_samples must be >= 1");
    if (!(rates.array() > 0).all()) throw DomainError("poisson_intervals: rates must be > 0");
    Intervals r{Matrix(rates.rows(), rates.cols()), Matrix(rates.rows(), rates.cols())};
    const long cap = ad::effective_series_cap(rates.maxCoeff(), series_cap);
    std::vector<double> draws(static_cast<std::size_t>(n_samples));
    for (Eigen::Index i = 0; i < rates.size(); ++i) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
        for (auto& d : draws) d = ad::draw_poisson_process(rates.data()[i], rng, tau, cap, 0, false).count;
        std::sort(draws.begin(), draws.end());
        r.lo.data()[i] = metrics::inverse_cdf_quantile(draws, 0.025);
        r.hi.data()[i] = metrics::inverse_cdf_quantile(draws, 0.975);
    }
    return r;
}

/// Rate-based point reconstruction of unnormalized counts plus Monte Carlo
/// 95% intervals from `n_samples` Poisson-process draws per entry.
inline EvalResult forward_eval(TrainedModel& tm, const Matrix& V, int n_samples, std::uint64_t seed = 0) {
    if (n_samples < 1) throw DomainError("forward_eval: n_samples must be >= 1");
    if (V.cols() != tm.model.channels) throw ShapeError("forward_eval: channel mismatch");
    EvalResult r;
    r.W_hat = encode(tm.model, V);
    r.H = signatures(tm.model);
    r.V_hat = r.W_hat * r.H;
    auto ci = poisson_intervals(r.W_hat, n_samples, seed, tm.model.config.relax_temperature, tm.model.config.series_cap);
    r.lo = std::move(ci.lo);
    r.hi = std::move(ci.hi);
    return r;
}

}  // namespace vaems::vae
