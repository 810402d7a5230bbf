// vaems: simulate catalogs, fit NMF / VAE-MS models, choose the number of
// signatures, and evaluate fits into metrics.csv plus SVG charts.

#include "vaems/checkpoint.hpp"
#include "vaems/data.hpp"
#include "vaems/pipeline.hpp"
#include "vaems/report.hpp"
#include "vaems/selection.hpp"

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vaems;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

std::uint64_t default_seed() {
    if (const char* env = std::getenv("VAEMS_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw UsageError(std::string("VAEMS_SEED is not an unsigned integer: ") + env);
        }
    }
    return 1;
}

struct TrainFlags {
    std::string method;
    int runs = 10;
    int sweep_trials = 10;
    int max_epochs = 2000;
    int patience = 50;
    std::vector<int> hidden{128, 64, 32};
    int batch_size = 32;
    double learning_rate = 1e-3;
    double beta = 1.0;
    std::string activation = "relu";
    int nmf_iters = 2000;
    unsigned jobs = 1;

    pipeline::FitOptions options() const {
        pipeline::FitOptions o;
        o.method = selection::parse_method(method);
        o.base.hidden = {hidden[0], hidden[1], hidden[2]};
        o.base.batch_size = batch_size;
        o.base.learning_rate = learning_rate;
        o.base.beta = beta;
        o.base.activation = vae::parse_activation(activation);
        o.base.max_epochs = max_epochs;
        o.base.patience = patience;
        o.space.n_trials = sweep_trials;
        o.stability.runs = runs;
        o.stability.jobs = jobs;
        o.stability.nmf.iters = nmf_iters;
        return o;
    }
};

void add_train_flags(CLI::App* app, TrainFlags& f, bool evaluate = false) {
    if (evaluate)
        app->add_option("--method", f.method, "nmf, vae or both")
            ->check(CLI::IsMember({"nmf", "vae", "both"}))
            ->default_val("both");
    else
        app->add_option("--method", f.method, "nmf or vae")->check(CLI::IsMember({"nmf", "vae"}))->required();
    app->add_option("--runs", f.runs, "stability runs per fit")->check(CLI::Range(1, 1000))->capture_default_str();
    app->add_option("--sweep-trials", f.sweep_trials, "random-search trials (vae; 0 skips the sweep)")
        ->check(CLI::Range(0, 1000))
        ->capture_default_str();
    app->add_option("--max-epochs", f.max_epochs)->check(CLI::Range(1, 1000000))->capture_default_str();
    app->add_option("--patience", f.patience)->check(CLI::Range(1, 1000000))->capture_default_str();
    app->add_option("--hidden", f.hidden, "three encoder widths")->expected(3)->capture_default_str();
    app->add_option("--batch-size", f.batch_size)->check(CLI::Range(2, 1000000))->capture_default_str();
    app->add_option("--lr", f.learning_rate)->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--beta", f.beta)->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--activation", f.activation)->check(CLI::IsMember({"relu", "softplus"}))->capture_default_str();
    app->add_option("--nmf-iters", f.nmf_iters)->check(CLI::Range(1, 10000000))->capture_default_str();
    app->add_option("--jobs", f.jobs, "worker threads")->check(CLI::Range(1u, 256u))->capture_default_str();
}

/// Resolved value of every option, in declaration order.
json resolved_config(const CLI::App* app, std::vector<std::string>& args) {
    json cfg = json::object();
    args = {app->get_name()};
    for (const auto* opt : app->get_options()) {
        if (opt->get_name() == "--help" || opt->get_name().empty()) continue;
        std::vector<std::string> vals = opt->count() ? opt->results() : std::vector<std::string>{};
        if (vals.empty()) {
            const auto d = opt->get_default_str();
            if (d.empty()) continue;
            if (d.front() == '[') {
                for (auto v : json::parse(d)) vals.push_back(v.is_string() ? v.get<std::string>() : v.dump());
            } else {
                vals.push_back(d);
            }
        }
        const auto name = opt->get_name();
        const bool list = opt->get_items_expected_max() > 1;
        cfg[name.substr(2)] = list ? json(vals) : json(vals.front());
        if (opt->get_items_expected_min() > 1) {
            args.push_back(name);
            args.insert(args.end(), vals.begin(), vals.end());
        } else {
            for (const auto& v : vals) {
                args.push_back(name);
                args.push_back(v);
            }
        }
    }
    return cfg;
}

class Run {
public:
    Run(const CLI::App* app, std::string out) : app_(app), out_(std::move(out)), start_(std::chrono::steady_clock::now()) {
        fs::create_directories(out_);
    }

    std::string path(const std::string& name) const { return (fs::path(out_) / name).string(); }

    std::ofstream open(const std::string& name) {
        std::ofstream f(path(name));
        if (!f) throw Error("cannot write " + path(name));
        outputs_.push_back(name);
        return f;
    }

    void note_output(const std::string& name) { outputs_.push_back(name); }
    void seed(const std::string& name, std::uint64_t v) { seeds_[name] = v; }
    void input(const std::string& name, const std::string& v) { inputs_[name] = v; }

    void finish() {
        std::vector<std::string> args;
        json cfg = resolved_config(app_, args);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        std::sort(outputs_.begin(), outputs_.end());
        json m{{"command", app_->get_name()}, {"args", args},       {"config", cfg},
               {"seeds", seeds_},             {"inputs", inputs_},  {"outputs", outputs_},
               {"output_dir", out_},          {"tool_version", kVersion}, {"duration_seconds", secs}};
        std::ofstream f(path("manifest.json"));
        if (!f) throw Error("cannot write " + path("manifest.json"));
        f << m.dump(2) << '\n';
    }

private:
    const CLI::App* app_;
    std::string out_;
    std::chrono::steady_clock::time_point start_;
    std::vector<std::string> outputs_;
    json seeds_ = json::object();
    json inputs_ = json::object();
};

// ---------------------------------------------------------------------------

struct SimulateFlags {
    int k = 0;
    int n = 300;
    int m = 96;
    std::uint64_t seed = 1;
    std::string noise = "poisson";
    double exposure_mean = 1000;
    double exposure_shape = 2;
    double concentration = 0.1;
    std::string out;
};

void cmd_simulate(const CLI::App* app, const SimulateFlags& f) {
    Run run(app, f.out);
    data::SimulationOptions o;
    o.k = f.k;
    o.n = f.n;
    o.m = f.m;
    o.seed = f.seed;
    o.noise = data::parse_noise(f.noise);
    o.exposure_mean = f.exposure_mean;
    o.exposure_shape = f.exposure_shape;
    o.signature_concentration = f.concentration;
    const auto [cat, truth] = data::simulate(o);
    data::write_catalog(run.path("catalog.tsv"), cat);
    data::write_ground_truth(f.out, truth, cat);
    for (const char* name : {"catalog.tsv", "exposures.tsv", "signatures.tsv"}) run.note_output(name);
    run.seed("seed", f.seed);
    run.finish();
    std::cout << "simulated " << f.n << " samples x " << cat.channels.size() << " channels, k=" << f.k << " -> "
              << f.out << '\n';
}

// ---------------------------------------------------------------------------

void write_checkpoints(Run& run, const pipeline::SplitFit& fit) {
    fs::create_directories(run.path("checkpoints"));
    int i = 0;
    for (const auto& r : fit.stability.runs) {
        char name[64];
        std::snprintf(name, sizeof name, "checkpoints/k%d_run%02d.ckpt", fit.config.k, i++);
        const checkpoint::Provenance prov{fit.split_seed, r.seed};
        checkpoint::save(run.path(name), r.vae_model ? checkpoint::vae_to_json(*r.vae_model, prov)
                                                     : checkpoint::nmf_to_json(*r.nmf_model, prov));
        run.note_output(name);
    }
}

struct FitFlags {
    std::string catalog;
    int k = 0;
    std::uint64_t splits_seed = 1;
    TrainFlags train;
    std::string out;
};

void cmd_fit(const CLI::App* app, const FitFlags& f) {
    const auto cat = data::load_catalog(f.catalog);
    if (f.k > static_cast<int>(std::min(cat.counts.rows(), cat.counts.cols())))
        throw UsageError("--k exceeds catalog dimensions");
    Run run(app, f.out);
    run.input("catalog", f.catalog);
    run.seed("splits_seed", f.splits_seed);
    const auto opt = f.train.options();
    const auto fit = pipeline::fit_split(cat.counts, f.splits_seed, f.k, opt);
    run.seed("run_seed", fit.config.seed);
    if (fit.sweep) {
        auto s = run.open("sweep.csv");
        selection::write_sweep_csv(s, *fit.sweep);
    }
    {
        auto s = run.open("stability.csv");
        selection::write_stability_csv(s, fit.stability);
    }
    write_checkpoints(run, fit);
    run.finish();
    const auto& best = fit.best();
    std::cout << "fit " << selection::method_name(opt.method) << " k=" << f.k << ": "
              << fit.stability.runs.size() << " runs, " << fit.stability.failed_seeds.size()
              << " diverged, silhouette " << selection::fmt_double(fit.stability.silhouette) << ", best val loss "
              << selection::fmt_double(best.val_loss);
    if (best.vae_model) std::cout << ", stopped " << vae::stop_reason_name(best.vae_model->report.stopped_reason);
    std::cout << '\n';
}

// ---------------------------------------------------------------------------

struct SelectFlags {
    std::string catalog;
    int k_min = 2;
    int k_max = 6;
    std::uint64_t splits_seed = 1;
    TrainFlags train;
    std::string out;
};

void write_scan(Run& run, const std::vector<pipeline::KScan>& scans, const std::vector<std::uint64_t>& seeds,
                const std::string& method) {
    auto s = run.open("k_selection.csv");
    s << "method,split,k,silhouette,mean_val_loss,normalized_loss,score,selected\n";
    for (std::size_t i = 0; i < scans.size(); ++i) {
        const auto& sel = scans[i].selection;
        for (std::size_t j = 0; j < sel.candidates.size(); ++j) {
            const auto& c = sel.candidates[j];
            s << method << ',' << seeds[i] << ',' << c.k << ',' << selection::fmt_double(c.silhouette) << ','
              << selection::fmt_double(c.mean_val_loss) << ',' << selection::fmt_double(sel.normalized_loss[j]) << ','
              << selection::fmt_double(sel.score[j]) << ',' << (c.k == sel.chosen_k ? 1 : 0) << '\n';
        }
    }
}

void cmd_select_k(const CLI::App* app, const SelectFlags& f) {
    if (f.k_min > f.k_max) throw UsageError("--k-min must not exceed --k-max");
    if (f.k_min == f.k_max) warn("--k-min equals --k-max; returning k=" + std::to_string(f.k_min) + " unscored");
    const auto cat = data::load_catalog(f.catalog);
    Run run(app, f.out);
    run.input("catalog", f.catalog);
    run.seed("splits_seed", f.splits_seed);
    const auto opt = f.train.options();
    const auto scan = pipeline::scan_k(cat.counts, f.splits_seed, f.k_min, f.k_max, opt);
    write_scan(run, {scan}, {f.splits_seed}, f.train.method);
    {
        auto s = run.open("stability.csv");
        bool header = true;
        for (const auto& fit : scan.fits) {
            selection::write_stability_csv(s, fit.stability, header);
            header = false;
        }
    }
    if (opt.method == selection::Method::Vae && opt.space.n_trials >= 1) {
        auto s = run.open("sweep.csv");
        bool header = true;
        for (const auto& fit : scan.fits) {
            selection::write_sweep_csv(s, *fit.sweep, header);
            header = false;
        }
    }
    run.finish();
    std::cout << "selected k=" << scan.selection.chosen_k << '\n';
}

// ---------------------------------------------------------------------------

struct EvaluateFlags {
    std::string catalog;
    std::string truth;
    int k = 0;
    int k_min = 0;
    int k_max = 0;
    int n_splits = 10;
    std::uint64_t splits_seed = 1;
    std::vector<std::string> checkpoints;
    std::string dataset;
    TrainFlags train;
    std::string out;
};

selection::RunOutcome outcome_from_checkpoint(const json& j, int& k) {
    selection::RunOutcome r;
    r.seed = j.at("run_seed").get<std::uint64_t>();
    if (j.at("kind") == "vae") {
        r.vae_model = checkpoint::vae_from_json(j);
        r.signatures = vae::signatures(r.vae_model->model);
        r.val_loss = r.vae_model->report.best_val_loss;
    } else {
        r.nmf_model = checkpoint::nmf_from_json(j);
        r.signatures = r.nmf_model->H;
    }
    k = static_cast<int>(r.signatures.rows());
    return r;
}

void cmd_evaluate(const CLI::App* app, EvaluateFlags f) {
    const auto cat = data::load_catalog(f.catalog);
    std::optional<data::GroundTruth> truth;
    if (!f.truth.empty()) {
        truth = data::read_ground_truth(f.truth);
        if (truth->W_true.rows() != cat.counts.rows() || truth->H_true.cols() != cat.counts.cols())
            throw Error("ground truth in " + f.truth + " does not match the catalog shape");
    } else {
        warn("no ground truth supplied; ACS and CI columns are left empty");
    }
    if (f.dataset.empty()) f.dataset = fs::path(f.catalog).stem().string();
    const bool scan = f.k == 0;
    if (f.checkpoints.empty()) {
        if (scan && (f.k_min < 1 || f.k_max < f.k_min)) throw UsageError("give --k or a valid --k-min/--k-max range");
        if (f.n_splits < 1) throw UsageError("--n-splits must be >= 1");
    }
    Run run(app, f.out);
    run.input("catalog", f.catalog);
    if (truth) run.input("truth", f.truth);
    run.seed("splits_seed", f.splits_seed);
    const std::string stamp = report::timestamp_utc();

    std::vector<pipeline::MetricsRow> rows;
    std::vector<Matrix> sets;
    std::map<std::string, std::vector<int>> chosen;
    std::map<std::string, std::vector<double>> exposures;
    std::map<std::string, std::vector<std::pair<double, double>>> loss_curves, sil_curves;
    const auto* gt = truth ? &*truth : nullptr;

    auto record_exposures = [&](const std::string& name, const selection::RunOutcome& r, const selection::SplitData& d) {
        if (exposures.count(name)) return;
        const auto e = pipeline::estimate(r, d.test, 0);
        exposures[name].assign(e.W.data(), e.W.data() + e.W.size());
        if (gt && !exposures.count("true"))
            for (auto i : d.spec.test_idx)
                for (Eigen::Index c = 0; c < gt->W_true.cols(); ++c)
                    exposures["true"].push_back(gt->W_true(static_cast<Eigen::Index>(i), c));
    };

    if (!f.checkpoints.empty()) {
        for (const auto& path : f.checkpoints) {
            run.input("checkpoint:" + path, path);
            const auto j = checkpoint::load(path);
            pipeline::SplitFit fit;
            int k = 0;
            fit.split_seed = j.at("split_seed").get<std::uint64_t>();
            fit.stability.runs.push_back(outcome_from_checkpoint(j, k));
            fit.stability.method = j.at("kind") == "vae" ? selection::Method::Vae : selection::Method::Nmf;
            fit.stability.k = k;
            fit.stability.signature_sets = {fit.stability.runs[0].signatures};
            fit.config.k = k;
            fit.data = selection::split_catalog(cat.counts, fit.split_seed);
            rows.push_back(pipeline::evaluate_fit(fit, f.dataset, gt));
            sets.push_back(fit.best().signatures);
            chosen[rows.back().model].push_back(k);
            record_exposures(rows.back().model, fit.best(), fit.data);
        }
    } else {
        std::vector<std::string> methods = f.train.method == "both" ? std::vector<std::string>{"nmf", "vae"}
                                                              : std::vector<std::string>{f.train.method};
        std::vector<std::pair<std::string, pipeline::KScan>> scans;
        std::vector<std::uint64_t> seeds;
        for (int s = 0; s < f.n_splits; ++s) seeds.push_back(f.splits_seed + static_cast<std::uint64_t>(s));
        for (const auto& m : methods) {
            auto tf = f.train;
            tf.method = m;
            const auto opt = tf.options();
            std::vector<pipeline::KScan> per_split;
            for (auto seed : seeds) {
                auto sc = scan ? pipeline::scan_k(cat.counts, seed, f.k_min, f.k_max, opt)
                               : pipeline::scan_k(cat.counts, seed, f.k, f.k, opt);
                const auto& fit = sc.chosen();
                rows.push_back(pipeline::evaluate_fit(fit, f.dataset, gt));
                sets.push_back(fit.best().signatures);
                chosen[m].push_back(sc.selection.chosen_k);
                record_exposures(m, fit.best(), fit.data);
                if (scan) {
                    const std::string name = m + " split " + std::to_string(seed);
                    for (const auto& c : sc.selection.candidates) {
                        loss_curves[name].emplace_back(c.k, c.mean_val_loss);
                        sil_curves[name].emplace_back(c.k, c.silhouette);
                    }
                }
                per_split.push_back(std::move(sc));
            }
            if (scan) {
                // one k_selection.csv across methods
                for (std::size_t i = 0; i < per_split.size(); ++i) scans.emplace_back(m, std::move(per_split[i]));
            }
        }
        if (scan) {
            auto s = run.open("k_selection.csv");
            s << "method,split,k,silhouette,mean_val_loss,normalized_loss,score,selected\n";
            for (std::size_t i = 0; i < scans.size(); ++i) {
                const auto& sel = scans[i].second.selection;
                const auto seed = seeds[i % seeds.size()];
                for (std::size_t j = 0; j < sel.candidates.size(); ++j) {
                    const auto& c = sel.candidates[j];
                    s << scans[i].first << ',' << seed << ',' << c.k << ',' << selection::fmt_double(c.silhouette)
                      << ',' << selection::fmt_double(c.mean_val_loss) << ','
                      << selection::fmt_double(sel.normalized_loss[j]) << ',' << selection::fmt_double(sel.score[j])
                      << ',' << (c.k == sel.chosen_k ? 1 : 0) << '\n';
                }
            }
        }
    }
    pipeline::assign_pacs(rows, sets);
    {
        auto s = run.open("metrics.csv");
        pipeline::write_metrics_csv(s, rows);
    }
    {
        auto s = run.open("selected_k.svg");
        report::beeswarm(s, chosen, stamp);
    }
    if (!loss_curves.empty()) {
        auto s = run.open("loss_vs_k.svg");
        report::curves(s, loss_curves, "Mean validation loss per k", "validation loss per sample", stamp);
        auto t = run.open("silhouette_vs_k.svg");
        report::curves(t, sil_curves, "Silhouette per k", "silhouette", stamp);
    }
    {
        auto s = run.open("exposure_density.svg");
        report::exposure_density(s, exposures, stamp);
    }
    run.finish();
    std::cout << "evaluated " << rows.size() << " fits -> " << run.path("metrics.csv") << '\n';
}

// ---------------------------------------------------------------------------

int dispatch(std::vector<std::string> args);

int cmd_rerun(const std::string& manifest_path, const std::string& out) {
    std::ifstream in(manifest_path);
    if (!in) throw UsageError("cannot open manifest " + manifest_path);
    json m;
    try {
        m = json::parse(in);
    } catch (const json::exception& e) {
        throw UsageError(manifest_path + ": " + e.what());
    }
    auto args = m.at("args").get<std::vector<std::string>>();
    if (!out.empty()) {
        auto it = std::find(args.begin(), args.end(), "--out");
        if (it == args.end() || it + 1 == args.end()) throw UsageError("manifest has no --out argument");
        *(it + 1) = out;
    }
    return dispatch(args);
}

int dispatch(std::vector<std::string> args) {
    CLI::App app{"VAE-MS mutational signature extraction"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    const std::uint64_t seed0 = default_seed();

    SimulateFlags sim;
    auto* s = app.add_subcommand("simulate", "generate a synthetic SBS96 catalog with ground truth");
    s->add_option("--k", sim.k, "number of signatures")->required()->check(CLI::Range(1, 1000));
    s->add_option("--n", sim.n, "samples")->check(CLI::Range(1, 10000000))->capture_default_str();
    s->add_option("--m", sim.m, "channels (96 gives SBS96 labels)")->check(CLI::Range(1, 100000))->capture_default_str();
    s->add_option("--seed", sim.seed)->default_val(seed0);
    s->add_option("--noise", sim.noise)->check(CLI::IsMember({"exact", "poisson"}))->capture_default_str();
    s->add_option("--exposure-mean", sim.exposure_mean)->check(CLI::PositiveNumber)->capture_default_str();
    s->add_option("--exposure-shape", sim.exposure_shape)->check(CLI::PositiveNumber)->capture_default_str();
    s->add_option("--concentration", sim.concentration, "Dirichlet concentration of signatures")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    s->add_option("--out", sim.out)->required();

    FitFlags fit;
    auto* fc = app.add_subcommand("fit", "sweep and stability runs at one k on one split");
    fc->add_option("--catalog", fit.catalog)->required()->check(CLI::ExistingFile);
    fc->add_option("--k", fit.k)->required()->check(CLI::Range(1, 1000));
    fc->add_option("--splits-seed", fit.splits_seed)->default_val(seed0);
    add_train_flags(fc, fit.train);
    fc->add_option("--out", fit.out)->required();

    SelectFlags sel;
    auto* sk = app.add_subcommand("select-k", "choose the number of signatures on one split");
    sk->add_option("--catalog", sel.catalog)->required()->check(CLI::ExistingFile);
    sk->add_option("--k-min", sel.k_min)->check(CLI::Range(1, 1000))->capture_default_str();
    sk->add_option("--k-max", sel.k_max)->check(CLI::Range(1, 1000))->capture_default_str();
    sk->add_option("--splits-seed", sel.splits_seed)->default_val(seed0);
    add_train_flags(sk, sel.train);
    sk->add_option("--out", sel.out)->required();

    EvaluateFlags ev;
    auto* ec = app.add_subcommand("evaluate", "metrics.csv and charts over splits or checkpoints");
    ec->add_option("--catalog", ev.catalog)->required()->check(CLI::ExistingFile);
    ec->add_option("--truth", ev.truth, "ground-truth directory (signatures.tsv, exposures.tsv)")
        ->check(CLI::ExistingDirectory);
    ec->add_option("--checkpoint", ev.checkpoints, "evaluate these checkpoints instead of fitting")
        ->check(CLI::ExistingFile);
    ec->add_option("--k", ev.k, "fixed k (otherwise --k-min..--k-max is scanned)")->check(CLI::Range(1, 1000));
    ec->add_option("--k-min", ev.k_min)->check(CLI::Range(1, 1000));
    ec->add_option("--k-max", ev.k_max)->check(CLI::Range(1, 1000));
    ec->add_option("--n-splits", ev.n_splits)->check(CLI::Range(1, 10000))->capture_default_str();
    ec->add_option("--splits-seed", ev.splits_seed, "first split seed; split i uses seed+i")->default_val(seed0);
    ec->add_option("--dataset", ev.dataset, "dataset column (default: catalog file stem)");
    add_train_flags(ec, ev.train, true);
    ec->add_option("--out", ev.out)->required();

    std::string manifest, rerun_out;
    auto* rr = app.add_subcommand("rerun", "repeat a run from its manifest.json");
    rr->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
    rr->add_option("--out", rerun_out, "output directory (default: the recorded one)");

    try {
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    for (const auto* t : {&fit.train, &sel.train, &ev.train})
        if (t->hidden.size() != 3) throw UsageError("--hidden takes three widths");

    if (*s) cmd_simulate(s, sim);
    else if (*fc) cmd_fit(fc, fit);
    else if (*sk) cmd_select_k(sk, sel);
    else if (*ec) cmd_evaluate(ec, ev);
    else if (*rr) return cmd_rerun(manifest, rerun_out);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(std::vector<std::string>(argv + 1, argv + argc));
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}
