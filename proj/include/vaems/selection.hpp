#pragma once

// Model selection: random-search sweeps, ten-run stability analysis,
// consensus silhouette of signature sets, and the silhouette-minus-loss rule
// for the number of signatures.

#include "vaems/core.hpp"
#include "vaems/data.hpp"
#include "vaems/metrics.hpp"
#include "vaems/nmf.hpp"
#include "vaems/vae.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace vaems::selection {

/// Runs fn(0..n-1) on up to `jobs` threads. The first exception is rethrown.
template <class F>
void parallel_for(std::size_t n, unsigned jobs, F&& fn) {
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n)));
    if (jobs <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < jobs; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mu);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

inline std::string fmt_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Silhouette of signature sets

/// Cluster labels for R sets of K signatures: every set is Hungarian-matched
/// to a consensus set that starts as the first set and is replaced by cluster
/// medoids `refinement_passes` times. labels[r][i] is the cluster of row i of set r.
inline std::vector<std::vector<int>> consensus_labels(const std::vector<Matrix>& sets, int refinement_passes = 2) {
    Matrix consensus = sets.front();
    const auto K = consensus.rows();
    std::vector<std::vector<int>> labels(sets.size());
    for (int pass = 0; pass <= refinement_passes; ++pass) {
        for (std::size_t r = 0; r < sets.size(); ++r) labels[r] = metrics::align_hungarian(sets[r], consensus).permutation;
        if (pass == refinement_passes) break;
        for (Eigen::Index c = 0; c < K; ++c) {
            std::vector<RowVector> members;
            for (std::size_t r = 0; r < sets.size(); ++r)
                for (std::size_t i = 0; i < labels[r].size(); ++i)
                    if (labels[r][i] == c) members.push_back(sets[r].row(static_cast<Eigen::Index>(i)));
            double best = std::numeric_limits<double>::infinity();
            for (const auto& a : members) {
                double d = 0;
                for (const auto& b : members) d += 1.0 - metrics::cosine(a, b);
                if (d < best) {
                    best = d;
                    consensus.row(c) = a;
                }
            }
        }
    }
    return labels;
}

/// Mean silhouette (cosine distance) of the consensus clustering of R signature
/// sets. K = 1 scores 0; singleton clusters contribute 0.
inline double signature_silhouette(const std::vector<Matrix>& sets) {
    if (sets.size() < 2) throw DomainError("signature_silhouette: need at least 2 signature sets");
    const auto K = sets.front().rows();
    const auto M = sets.front().cols();
    for (const auto& s : sets)
        if (s.rows() != K || s.cols() != M) throw ShapeError("signature_silhouette: sets differ in shape");
    if (K == 1) return 0.0;
    const auto labels = consensus_labels(sets);

    std::vector<RowVector> points;
    std::vector<int> label;
    for (std::size_t r = 0; r < sets.size(); ++r)
        for (Eigen::Index i = 0; i < K; ++i) {
            points.push_back(sets[r].row(i));
            label.push_back(labels[r][static_cast<std::size_t>(i)]);
        }
    const std::size_t P = points.size();
    Matrix dist(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(P));
    for (std::size_t i = 0; i < P; ++i)
        for (std::size_t j = i; j < P; ++j) {
            const double d = i == j ? 0.0 : std::max(0.0, 1.0 - metrics::cosine(points[i], points[j]));
            dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d;
            dist(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = d;
        }
    double total = 0;
    for (std::size_t i = 0; i < P; ++i) {
        std::vector<double> sum(static_cast<std::size_t>(K), 0.0);
        std::vector<int> count(static_cast<std::size_t>(K), 0);
        for (std::size_t j = 0; j < P; ++j) {
            if (j == i) continue;
            sum[static_cast<std::size_t>(label[j])] += dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            ++count[static_cast<std::size_t>(label[j])];
        }
        const auto own = static_cast<std::size_t>(label[i]);
        if (count[own] == 0) continue;  // singleton
        const double a = sum[own] / count[own];
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < sum.size(); ++c)
            if (c != own && count[c] > 0) b = std::min(b, sum[c] / count[c]);
        const double denom = std::max(a, b);
        if (denom > 0 && std::isfinite(b)) total += (b - a) / denom;
    }
    return total / static_cast<double>(P);
}

// ---------------------------------------------------------------------------
// Number of signatures

struct KCandidate {
    int k = 0;
    double silhouette = 0;
    double mean_val_loss = 0;
};

struct KSelection {
    int chosen_k = 0;
    std::vector<KCandidate> candidates;      // sorted by k
    std::vector<double> normalized_loss;     // min-max scaled to [0, 1]
    std::vector<double> score;               // silhouette - normalized loss
};

/// argmax_k(silhouette - minmax(loss)); ties go to the smaller k.
inline KSelection select_k(std::vector<KCandidate> candidates) {
    if (candidates.size() < 2) throw DomainError("select_k: need at least 2 candidate k values");
    std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) { return a.k < b.k; });
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& c : candidates) {
        if (!std::isfinite(c.mean_val_loss)) throw DomainError("select_k: non-finite loss for k=" + std::to_string(c.k));
        lo = std::min(lo, c.mean_val_loss);
        hi = std::max(hi, c.mean_val_loss);
    }
    KSelection out;
    out.candidates = candidates;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& c : candidates) {
        const double norm = hi > lo ? (c.mean_val_loss - lo) / (hi - lo) : 0.0;
        const double score = c.silhouette - norm;
        out.normalized_loss.push_back(norm);
        out.score.push_back(score);
        if (score > best) {
            best = score;
            out.chosen_k = c.k;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Data splits as matrices

struct SplitData {
    Matrix train;  // unnormalized counts
    Matrix val;
    Matrix test;
    data::SplitSpec spec;
};

inline SplitData split_catalog(const Matrix& counts, std::uint64_t split_seed) {
    SplitData d;
    d.spec = data::make_splits(static_cast<std::size_t>(counts.rows()), split_seed);
    d.train = data::select_rows(counts, d.spec.train_idx);
    d.val = data::select_rows(counts, d.spec.val_idx);
    d.test = data::select_rows(counts, d.spec.test_idx);
    return d;
}

// ---------------------------------------------------------------------------
// Random-search sweep

struct IntRange {
    int lo = 0;
    int hi = 0;
};

struct SweepSpace {
    double lr_min = 1e-4, lr_max = 1e-2;      // log-uniform
    double beta_min = 0.1, beta_max = 2.0;    // log-uniform
    std::vector<vae::Activation> activations{vae::Activation::Relu, vae::Activation::Softplus};
    std::array<IntRange, 3> hidden{IntRange{64, 160}, IntRange{32, 96}, IntRange{16, 48}};
    IntRange batch_size{16, 64};
    int n_trials = 10;

    void validate() const {
        if (n_trials < 1) throw DomainError("sweep: n_trials must be >= 1");
        if (!(lr_min > 0 && lr_min <= lr_max) || !(beta_min > 0 && beta_min <= beta_max))
            throw DomainError("sweep: invalid log-scale range");
        if (activations.empty()) throw DomainError("sweep: no activations");
        for (const auto& r : hidden)
            if (r.lo < 1 || r.lo > r.hi) throw DomainError("sweep: invalid hidden width range");
        if (batch_size.lo < 2 || batch_size.lo > batch_size.hi) throw DomainError("sweep: invalid batch size range");
    }

    /// Draws a configuration; ranges are shifted upward where needed so that
    /// widths are strictly decreasing and the last is at least k.
    vae::VaeConfig sample(const vae::VaeConfig& base, Rng& rng) const {
        vae::VaeConfig c = base;
        auto log_uniform = [&](double lo, double hi) {
            return std::exp(std::uniform_real_distribution<double>(std::log(lo), std::log(hi))(rng));
        };
        auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, std::max(lo, hi))(rng); };
        c.learning_rate = lr_min == lr_max ? lr_min : log_uniform(lr_min, lr_max);
        c.beta = beta_min == beta_max ? beta_min : log_uniform(beta_min, beta_max);
        c.activation = activations[static_cast<std::size_t>(uniform_int(0, static_cast<int>(activations.size()) - 1))];
        const int h3 = uniform_int(std::max(hidden[2].lo, base.k), std::max(hidden[2].hi, base.k));
        const int h2 = uniform_int(std::max(hidden[1].lo, h3 + 1), std::max(hidden[1].hi, h3 + 1));
        const int h1 = uniform_int(std::max(hidden[0].lo, h2 + 1), std::max(hidden[0].hi, h2 + 1));
        c.hidden = {h1, h2, h3};
        c.batch_size = uniform_int(batch_size.lo, batch_size.hi);
        return c;
    }
};

struct Trial {
    int id = 0;
    vae::VaeConfig config;
    int best_epoch = 0;
    double val_loss = std::numeric_limits<double>::infinity();
    vae::StopReason stopped_reason = vae::StopReason::MaxEpochs;
    bool diverged = false;
};

struct SweepResult {
    vae::VaeConfig best;
    std::vector<Trial> trials;
    int best_trial = 0;
};

/// Trains one model per sampled configuration and keeps the lowest best-epoch validation loss.
inline SweepResult sweep(const SplitData& d, const vae::VaeConfig& base, const SweepSpace& space, std::uint64_t seed,
                         unsigned jobs = 1) {
    space.validate();
    base.validate();
    SweepResult r;
    Rng rng(seed);
    for (int t = 0; t < space.n_trials; ++t) {
        Trial tr;
        tr.id = t;
        tr.config = space.sample(base, rng);
        tr.config.seed = mix_seed(seed, static_cast<std::uint64_t>(t));
        r.trials.push_back(tr);
    }
    parallel_for(r.trials.size(), jobs, [&](std::size_t i) {
        Trial& tr = r.trials[i];
        try {
            const auto tm = vae::fit(d.train, d.val, tr.config);
            tr.best_epoch = tm.report.best_epoch;
            tr.val_loss = tm.report.best_val_loss;
            tr.stopped_reason = tm.report.stopped_reason;
            tr.diverged = !std::isfinite(tr.val_loss);
        } catch (const Error&) {
            tr.diverged = true;
        }
    });
    const Trial* best = nullptr;
    for (const auto& tr : r.trials)
        if (!tr.diverged && (!best || tr.val_loss < best->val_loss)) best = &tr;
    if (!best) {
        std::string ids;
        for (const auto& tr : r.trials) ids += (ids.empty() ? "" : ",") + std::to_string(tr.id);
        throw Error("sweep: all trials diverged (" + ids + ")");
    }
    r.best = best->config;
    r.best_trial = best->id;
    return r;
}

inline void write_sweep_csv(std::ostream& out, const SweepResult& r, bool header = true) {
    if (header)
        out << "trial,k,learning_rate,beta,activation,hidden1,hidden2,hidden3,batch_size,seed,best_epoch,val_loss,"
               "stopped_reason,selected\n";
    for (const auto& t : r.trials) {
        const auto& c = t.config;
        out << t.id << ',' << c.k << ',' << fmt_double(c.learning_rate) << ',' << fmt_double(c.beta) << ','
            << vae::activation_name(c.activation) << ',' << c.hidden[0] << ',' << c.hidden[1] << ',' << c.hidden[2]
            << ',' << c.batch_size << ',' << c.seed << ',' << t.best_epoch << ',' << fmt_double(t.val_loss) << ','
            << (t.diverged ? "diverged" : vae::stop_reason_name(t.stopped_reason)) << ','
            << (t.id == r.best_trial ? 1 : 0) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Stability runs

enum class Method { Nmf, Vae };

inline const char* method_name(Method m) { return m == Method::Nmf ? "nmf" : "vae"; }
inline Method parse_method(const std::string& s) {
    if (s == "nmf") return Method::Nmf;
    if (s == "vae") return Method::Vae;
    throw DomainError("unknown method " + s);
}

struct RunOutcome {
    std::uint64_t seed = 0;
    Matrix signatures;  // K x M, rows sum to 1
    double val_loss = std::numeric_limits<double>::infinity();
    bool diverged = false;
    std::optional<vae::TrainedModel> vae_model;
    std::optional<nmf::NmfFactorization> nmf_model;  // W, H scaled so rows of H sum to 1
};

struct StabilityResult {
    int k = 0;
    Method method = Method::Nmf;
    std::vector<RunOutcome> runs;        // successful runs only
    std::vector<std::uint64_t> failed_seeds;
    std::vector<Matrix> signature_sets;
    double mean_val_loss = 0;
    double silhouette = 0;

    std::size_t best_run() const {
        std::size_t best = 0;
        for (std::size_t i = 1; i < runs.size(); ++i)
            if (runs[i].val_loss < runs[best].val_loss) best = i;
        return best;
    }
};

struct StabilityOptions {
    int runs = 10;
    unsigned jobs = 1;
    bool same_seed = false;  // every run uses base seed + 1 (identical runs)
    nmf::NmfOptions nmf{};
};

/// Per-sample generalized KL of normalized validation counts projected onto H.
inline double nmf_validation_loss(const Matrix& val_counts, const Matrix& H) {
    const Matrix x = data::normalize_100x(val_counts).values;
    const Matrix W = nmf::project_onto_basis(x, H);
    return metrics::heldout_gkl(x, W * H);
}

inline RunOutcome nmf_run(const SplitData& d, int k, std::uint64_t seed, const nmf::NmfOptions& base) {
    nmf::NmfOptions o = base;
    o.seed = seed;
    auto fac = nmf::nmf_fit(data::normalize_100x(d.train).values, k, o);
    auto [Ws, Hs] = nmf::scale_factorization(fac.W, fac.H);
    RunOutcome out;
    out.seed = seed;
    out.signatures = Hs;
    out.val_loss = nmf_validation_loss(d.val, Hs);
    out.diverged = !std::isfinite(out.val_loss);
    out.nmf_model = nmf::NmfFactorization{std::move(Ws), std::move(Hs), std::move(fac.loss_trace)};
    return out;
}

inline RunOutcome vae_run(const SplitData& d, const vae::VaeConfig& cfg, std::uint64_t seed,
                          const nmf::NmfOptions& nmf_opt) {
    vae::VaeConfig c = cfg;
    c.seed = seed;
    RunOutcome out;
    out.seed = seed;
    auto tm = vae::fit(d.train, d.val, c, nmf_opt);
    out.signatures = vae::signatures(tm.model);
    out.val_loss = tm.report.best_val_loss;
    out.diverged = tm.report.stopped_reason == vae::StopReason::Diverged || !std::isfinite(out.val_loss) ||
                   !out.signatures.allFinite();
    out.vae_model = std::move(tm);
    return out;
}

inline StabilityResult collect(Method method, int k, std::vector<RunOutcome> outcomes) {
    StabilityResult r;
    r.k = k;
    r.method = method;
    for (auto& o : outcomes) {
        if (o.diverged)
            r.failed_seeds.push_back(o.seed);
        else
            r.runs.push_back(std::move(o));
    }
    if (r.failed_seeds.size() > 5)
        throw Error("stability_runs: " + std::to_string(r.failed_seeds.size()) + " of " +
                    std::to_string(outcomes.size()) + " runs diverged at k=" + std::to_string(k));
    if (r.runs.empty()) throw Error("stability_runs: no successful runs");
    double total = 0;
    for (const auto& o : r.runs) {
        r.signature_sets.push_back(o.signatures);
        total += o.val_loss;
    }
    r.mean_val_loss = total / static_cast<double>(r.runs.size());
    r.silhouette = r.signature_sets.size() >= 2 ? signature_silhouette(r.signature_sets) : 0.0;
    return r;
}

/// Ten (by default) trainings at seeds seed+1 .. seed+R of one configuration.
inline StabilityResult stability_runs(const SplitData& d, Method method, const vae::VaeConfig& cfg,
                                      const StabilityOptions& opt = {}) {
    if (method == Method::Vae) cfg.validate();
    if (opt.runs < 1) throw DomainError("stability_runs: runs must be >= 1");
    std::vector<RunOutcome> outcomes(static_cast<std::size_t>(opt.runs));
    parallel_for(outcomes.size(), opt.jobs, [&](std::size_t i) {
        const std::uint64_t seed = cfg.seed + (opt.same_seed ? 1 : i + 1);
        try {
            outcomes[i] = method == Method::Nmf ? nmf_run(d, cfg.k, seed, opt.nmf) : vae_run(d, cfg, seed, opt.nmf);
        } catch (const Error&) {
            outcomes[i].seed = seed;
            outcomes[i].diverged = true;
        }
    });
    return collect(method, cfg.k, std::move(outcomes));
}

inline void write_stability_csv(std::ostream& out, const StabilityResult& r, bool header = true) {
    if (header) out << "method,k,run,seed,val_loss,status\n";
    int i = 0;
    for (const auto& o : r.runs)
        out << method_name(r.method) << ',' << r.k << ',' << i++ << ',' << o.seed << ',' << fmt_double(o.val_loss)
            << ",ok\n";
    for (auto s : r.failed_seeds) out << method_name(r.method) << ',' << r.k << ',' << i++ << ',' << s << ",nan,diverged\n";
}

inline void write_k_selection_csv(std::ostream& out, const KSelection& s) {
    out << "k,silhouette,mean_val_loss,normalized_loss,score,selected\n";
    for (std::size_t i = 0; i < s.candidates.size(); ++i) {
        const auto& c = s.candidates[i];
        out << c.k << ',' << fmt_double(c.silhouette) << ',' << fmt_double(c.mean_val_loss) << ','
            << fmt_double(s.normalized_loss[i]) << ',' << fmt_double(s.score[i]) << ','
            << (c.k == s.chosen_k ? 1 : 0) << '\n';
    }
}

}  // namespace vaems::selection
