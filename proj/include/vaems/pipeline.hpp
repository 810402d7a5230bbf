#pragma once

// End-to-end flows: per-split fitting (sweep then stability runs), the
// number-of-signatures scan, and Table-1-shaped evaluation rows.

#include "vaems/core.hpp"
#include "vaems/data.hpp"
#include "vaems/metrics.hpp"
#include "vaems/nmf.hpp"
#include "vaems/selection.hpp"
#include "vaems/vae.hpp"

#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace vaems::pipeline {

using selection::Method;

struct FitOptions {
    Method method = Method::Nmf;
    vae::VaeConfig base{};            // k and seed are overwritten per call
    selection::SweepSpace space{};    // n_trials = 0 skips the sweep
    selection::StabilityOptions stability{};
};

struct SplitFit {
    std::uint64_t split_seed = 0;
    selection::SplitData data;
    std::optional<selection::SweepResult> sweep;
    vae::VaeConfig config;  // configuration used for the stability runs
    selection::StabilityResult stability;

    const selection::RunOutcome& best() const { return stability.runs[stability.best_run()]; }
};

/// Seed of the model runs on one split; stability runs use seed+1 .. seed+R.
inline std::uint64_t run_seed(std::uint64_t split_seed, int k) {
    return mix_seed(split_seed, 0x1000 + static_cast<std::uint64_t>(k)) & 0xFFFFFFFFFFFFull;
}

inline SplitFit fit_split(const selection::SplitData& d, std::uint64_t split_seed, int k, const FitOptions& opt) {
    SplitFit out;
    out.split_seed = split_seed;
    out.data = d;
    out.config = opt.base;
    out.config.k = k;
    out.config.seed = run_seed(split_seed, k);
    if (opt.method == Method::Vae && opt.space.n_trials >= 1) {
        out.sweep = selection::sweep(d, out.config, opt.space, mix_seed(out.config.seed, 0x5EE9), opt.stability.jobs);
        const auto seed = out.config.seed;
        out.config = out.sweep->best;
        out.config.seed = seed;
    }
    out.stability = selection::stability_runs(d, opt.method, out.config, opt.stability);
    return out;
}

inline SplitFit fit_split(const Matrix& counts, std::uint64_t split_seed, int k, const FitOptions& opt) {
    return fit_split(selection::split_catalog(counts, split_seed), split_seed, k, opt);
}

struct KScan {
    selection::KSelection selection;
    std::vector<SplitFit> fits;  // one per candidate k, ascending

    const SplitFit& chosen() const {
        for (const auto& f : fits)
            if (f.config.k == selection.chosen_k) return f;
        throw Error("k scan: chosen k missing");
    }
};

/// Fits every k in [k_min, k_max] on one split and applies the selection rule.
/// A single candidate is returned as chosen without scoring.
inline KScan scan_k(const Matrix& counts, std::uint64_t split_seed, int k_min, int k_max, const FitOptions& opt) {
    if (k_min < 1 || k_min > k_max) throw DomainError("scan_k: invalid k range");
    const auto d = selection::split_catalog(counts, split_seed);
    KScan scan;
    std::vector<selection::KCandidate> cands;
    for (int k = k_min; k <= k_max; ++k) {
        scan.fits.push_back(fit_split(d, split_seed, k, opt));
        const auto& s = scan.fits.back().stability;
        cands.push_back({k, s.silhouette, s.mean_val_loss});
    }
    if (cands.size() == 1) {
        scan.selection.chosen_k = k_min;
        scan.selection.candidates = cands;
        scan.selection.normalized_loss = {0.0};
        scan.selection.score = {cands[0].silhouette};
    } else {
        scan.selection = selection::select_k(cands);
    }
    return scan;
}

// ---------------------------------------------------------------------------
// Evaluation

/// Point estimates of one trained model on a count matrix.
struct Estimate {
    Matrix W;
    Matrix V_hat;
    std::optional<Matrix> lo, hi;  // 95% intervals, VAE only
};

inline constexpr int kCiSamples = 1000;

inline Estimate estimate(const selection::RunOutcome& run, const Matrix& V, std::uint64_t seed) {
    Estimate e;
    if (run.vae_model) {
        auto tm = *run.vae_model;
        auto r = vae::forward_eval(tm, V, kCiSamples, seed);
        e.W = std::move(r.W_hat);
        e.V_hat = std::move(r.V_hat);
        e.lo = std::move(r.lo);
        e.hi = std::move(r.hi);
    } else {
        e.W = nmf::project_onto_basis(V, run.signatures);
        e.V_hat = e.W * run.signatures;
    }
    return e;
}

struct MetricsRow {
    std::string dataset;
    std::uint64_t split = 0;
    std::string model;
    int k = 0;
    double kl_train = 0, kl_test = 0, mse_train = 0, mse_test = 0;
    std::optional<double> acs, pacs, ss, ci_train, ci_test;
};

inline Matrix pooled_train(const selection::SplitData& d) {
    Matrix pooled(d.train.rows() + d.val.rows(), d.train.cols());
    pooled << d.train, d.val;
    return pooled;
}

inline std::vector<std::size_t> pooled_train_idx(const data::SplitSpec& s) {
    auto idx = s.train_idx;
    idx.insert(idx.end(), s.val_idx.begin(), s.val_idx.end());
    return idx;
}

/// Metrics of the best stability run of one split. Train metrics use the
/// pooled unnormalized training and validation rows.
inline MetricsRow evaluate_fit(const SplitFit& f, const std::string& dataset, const data::GroundTruth* truth) {
    const auto& run = f.best();
    MetricsRow row;
    row.dataset = dataset;
    row.split = f.split_seed;
    row.model = selection::method_name(f.stability.method);
    row.k = f.config.k;
    const Matrix train = pooled_train(f.data);
    const std::uint64_t seed = mix_seed(f.split_seed, 0xC1);
    const auto tr = estimate(run, train, seed);
    const auto te = estimate(run, f.data.test, mix_seed(seed, 1));
    row.kl_train = metrics::heldout_gkl(train, tr.V_hat);
    row.kl_test = metrics::heldout_gkl(f.data.test, te.V_hat);
    row.mse_train = metrics::mse(train, tr.V_hat);
    row.mse_test = metrics::mse(f.data.test, te.V_hat);
    if (f.stability.signature_sets.size() >= 2) row.ss = f.stability.silhouette;
    if (truth && truth->H_true.rows() == run.signatures.rows() && truth->H_true.cols() == run.signatures.cols()) {
        const auto al = metrics::align_hungarian(run.signatures, truth->H_true);
        row.acs = al.acs;
        if (tr.lo && truth->W_true.rows() > 0) {
            const Matrix w_train = data::select_rows(truth->W_true, pooled_train_idx(f.data.spec));
            const Matrix w_test = data::select_rows(truth->W_true, f.data.spec.test_idx);
            row.ci_train = metrics::ci_coverage(metrics::permute_columns(*tr.lo, al.permutation),
                                                metrics::permute_columns(*tr.hi, al.permutation), w_train);
            row.ci_test = metrics::ci_coverage(metrics::permute_columns(*te.lo, al.permutation),
                                               metrics::permute_columns(*te.hi, al.permutation), w_test);
        }
    }
    return row;
}

/// Fills the PACS column of rows sharing (model, k) from their signature sets.
inline void assign_pacs(std::vector<MetricsRow>& rows, const std::vector<Matrix>& sets) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::vector<Matrix> group;
        for (std::size_t j = 0; j < rows.size(); ++j)
            if (rows[j].model == rows[i].model && rows[j].k == rows[i].k) group.push_back(sets[j]);
        if (group.size() >= 2) rows[i].pacs = metrics::pacs(group).value;
    }
}

inline void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
    auto opt = [](const std::optional<double>& v) { return v ? selection::fmt_double(*v) : std::string(); };
    out << "dataset,split,model,k,D_KL_train,D_KL_test,MSE_train,MSE_test,ACS,PACS,SS,CI_train,CI_test\n";
    for (const auto& r : rows)
        out << r.dataset << ',' << r.split << ',' << r.model << ',' << r.k << ',' << selection::fmt_double(r.kl_train)
            << ',' << selection::fmt_double(r.kl_test) << ',' << selection::fmt_double(r.mse_train) << ','
            << selection::fmt_double(r.mse_test) << ',' << opt(r.acs) << ',' << opt(r.pacs) << ',' << opt(r.ss) << ','
            << opt(r.ci_train) << ',' << opt(r.ci_test) << '\n';
}

}  // namespace vaems::pipeline
