#pragma once

// SBS96 catalogs: TSV I/O, 100X normalization, train/validation/test splits
// and a ground-truth simulator.

#include "vaems/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace vaems::data {

/// The 96 SBS channel labels ("A[C>A]A", ...) in lexicographic order.
inline const std::vector<std::string>& sbs96_channels() {
    static const std::vector<std::string> labels = [] {
        std::vector<std::string> out;
        const std::array<const char*, 6> subs = {"C>A", "C>G", "C>T", "T>A", "T>C", "T>G"};
        const std::string bases = "ACGT";
        for (char up : bases)
            for (const char* s : subs)
                for (char down : bases) out.push_back(std::string(1, up) + "[" + s + "]" + std::string(1, down));
        std::sort(out.begin(), out.end());
        return out;
    }();
    return labels;
}

inline bool is_sbs96_label(const std::string& s) {
    const auto& all = sbs96_channels();
    return std::binary_search(all.begin(), all.end(), s);
}

/// N x M mutation counts (integer-valued doubles), with channel and sample labels.
struct MutationCatalog {
    Matrix counts;
    std::vector<std::string> channels;
    std::vector<std::string> samples;

    Eigen::Index n_samples() const { return counts.rows(); }
    Eigen::Index n_channels() const { return counts.cols(); }
};

inline std::vector<std::string> default_channels(Eigen::Index m) {
    if (m == 96) return sbs96_channels();
    std::vector<std::string> out;
    for (Eigen::Index i = 0; i < m; ++i) out.push_back("ch" + std::to_string(i + 1));
    return out;
}

inline std::vector<std::string> default_samples(Eigen::Index n) {
    std::vector<std::string> out;
    for (Eigen::Index i = 0; i < n; ++i) out.push_back("sample_" + std::to_string(i + 1));
    return out;
}

inline void validate(const MutationCatalog& c) {
    if (static_cast<Eigen::Index>(c.channels.size()) != c.counts.cols() ||
        static_cast<Eigen::Index>(c.samples.size()) != c.counts.rows())
        throw ShapeError("catalog: label counts do not match " + shape_str(c.counts));
    if (std::set<std::string>(c.channels.begin(), c.channels.end()).size() != c.channels.size())
        throw DomainError("catalog: duplicate channel labels");
    if (std::set<std::string>(c.samples.begin(), c.samples.end()).size() != c.samples.size())
        throw DomainError("catalog: duplicate sample ids");
    if (!c.counts.allFinite() || (c.counts.array() < 0.0).any()) throw DomainError("catalog: negative counts");
}

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, '\t')) out.push_back(field);
    if (!line.empty() && line.back() == '\t') out.emplace_back();
    return out;
}

inline std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

inline std::string format_count(double v) {
    std::ostringstream os;
    os << static_cast<long long>(std::llround(v));
    return os.str();
}

}  // namespace detail

/// Parses a channels-as-rows TSV (`MutationType<TAB>sample...`). SBS96 files
/// must list all 96 channels and are reordered to canonical order; files with
/// non-SBS96 labels keep file order.
inline MutationCatalog load_catalog(std::istream& in, const std::string& source = "<stream>") {
    auto fail = [&](std::size_t line, const std::string& msg) -> ParseError {
        return ParseError(source + ":" + std::to_string(line) + ": " + msg);
    };
    std::string line;
    if (!std::getline(in, line)) throw fail(1, "empty file");
    auto header = detail::split_tabs(detail::strip_cr(line));
    if (header.empty() || header[0] != "MutationType") throw fail(1, "first header column must be MutationType");
    if (header.size() < 2) throw fail(1, "no sample columns");
    std::vector<std::string> samples(header.begin() + 1, header.end());
    if (std::set<std::string>(samples.begin(), samples.end()).size() != samples.size())
        throw fail(1, "duplicate sample ids");

    std::vector<std::string> labels;
    std::vector<std::vector<double>> rows;
    std::map<std::string, std::size_t> seen;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        line = detail::strip_cr(line);
        if (line.empty()) continue;
        auto fields = detail::split_tabs(line);
        if (fields.size() != header.size())
            throw fail(lineno, "expected " + std::to_string(header.size()) + " fields, got " +
                                   std::to_string(fields.size()));
        if (auto it = seen.find(fields[0]); it != seen.end())
            throw fail(lineno, "duplicate channel " + fields[0] + " (first seen on line " +
                                   std::to_string(it->second) + ")");
        seen.emplace(fields[0], lineno);
        std::vector<double> vals;
        for (std::size_t j = 1; j < fields.size(); ++j) {
            const std::string& f = fields[j];
            std::size_t pos = 0;
            long long v = 0;
            try {
                v = std::stoll(f, &pos);
            } catch (const std::exception&) {
                throw fail(lineno, "non-integer count '" + f + "' for sample " + samples[j - 1]);
            }
            if (pos != f.size()) throw fail(lineno, "non-integer count '" + f + "' for sample " + samples[j - 1]);
            if (v < 0) throw fail(lineno, "negative count " + f + " for sample " + samples[j - 1]);
            vals.push_back(static_cast<double>(v));
        }
        labels.push_back(fields[0]);
        rows.push_back(std::move(vals));
    }
    if (labels.empty()) throw fail(lineno, "no channel rows");

    const bool any_sbs = std::any_of(labels.begin(), labels.end(), is_sbs96_label);
    std::vector<std::string> channels;
    std::vector<std::size_t> order;
    if (any_sbs) {
        for (const auto& l : labels)
            if (!is_sbs96_label(l)) throw fail(seen[l], "unknown SBS96 channel " + l);
        for (const auto& ch : sbs96_channels()) {
            auto it = std::find(labels.begin(), labels.end(), ch);
            if (it == labels.end()) throw fail(lineno, "missing channel " + ch);
            order.push_back(static_cast<std::size_t>(it - labels.begin()));
        }
        channels = sbs96_channels();
    } else {
        order.resize(labels.size());
        std::iota(order.begin(), order.end(), 0);
        channels = labels;
    }

    MutationCatalog cat;
    cat.channels = std::move(channels);
    cat.samples = std::move(samples);
    cat.counts.resize(static_cast<Eigen::Index>(cat.samples.size()), static_cast<Eigen::Index>(order.size()));
    for (std::size_t m = 0; m < order.size(); ++m)
        for (std::size_t n = 0; n < cat.samples.size(); ++n)
            cat.counts(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)) = rows[order[m]][n];
    return cat;
}

inline MutationCatalog load_catalog(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open catalog " + path);
    return load_catalog(in, path);
}

inline void write_catalog(std::ostream& out, const MutationCatalog& c) {
    validate(c);
    out << "MutationType";
    for (const auto& s : c.samples) out << '\t' << s;
    out << '\n';
    for (Eigen::Index m = 0; m < c.counts.cols(); ++m) {
        out << c.channels[static_cast<std::size_t>(m)];
        for (Eigen::Index n = 0; n < c.counts.rows(); ++n) out << '\t' << detail::format_count(c.counts(n, m));
        out << '\n';
    }
}

inline void write_catalog(const std::string& path, const MutationCatalog& c) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    write_catalog(out, c);
}

inline MutationCatalog subset(const MutationCatalog& c, const std::vector<std::size_t>& rows) {
    MutationCatalog out;
    out.channels = c.channels;
    out.counts.resize(static_cast<Eigen::Index>(rows.size()), c.counts.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.counts.row(static_cast<Eigen::Index>(i)) = c.counts.row(static_cast<Eigen::Index>(rows[i]));
        out.samples.push_back(c.samples.at(rows[i]));
    }
    return out;
}

inline Matrix select_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

struct Normalized {
    Matrix values;
    Vector factors;  // per-sample multiplier in (0, 1]
};

/// Rows whose total exceeds 100*M are scaled down to total exactly 100*M.
inline Normalized normalize_100x(const Matrix& counts) {
    const double limit = 100.0 * static_cast<double>(counts.cols());
    Normalized out{counts, Vector::Ones(counts.rows())};
    for (Eigen::Index n = 0; n < counts.rows(); ++n) {
        const double total = counts.row(n).sum();
        if (total > limit) {
            out.factors(n) = limit / total;
            out.values.row(n) *= out.factors(n);
        }
    }
    return out;
}

struct SplitSpec {
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> val_idx;
    std::vector<std::size_t> test_idx;
    std::uint64_t seed = 0;
};

/// Seeded shuffle, then test = round(0.2 N), validation = round(0.16 N), the rest train.
inline SplitSpec make_splits(std::size_t n, std::uint64_t seed) {
    if (n < 5) throw DomainError("make_splits: need at least 5 samples, got " + std::to_string(n));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(std::llround(0.16 * static_cast<double>(n)));
    SplitSpec s;
    s.seed = seed;
    s.test_idx.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    s.val_idx.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test),
                     idx.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
    s.train_idx.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), idx.end());
    for (auto* v : {&s.train_idx, &s.val_idx, &s.test_idx}) std::sort(v->begin(), v->end());
    return s;
}

enum class NoiseMode { Exact, Poisson };

inline const char* noise_name(NoiseMode m) { return m == NoiseMode::Exact ? "exact" : "poisson"; }
inline NoiseMode parse_noise(const std::string& s) {
    if (s == "exact") return NoiseMode::Exact;
    if (s == "poisson") return NoiseMode::Poisson;
    throw DomainError("unknown noise mode " + s);
}

struct GroundTruth {
    Matrix H_true;  // K x M, rows sum to 1
    Matrix W_true;  // N x K
    NoiseMode noise_mode = NoiseMode::Poisson;
};

struct SimulationOptions {
    int k = 3;
    int n = 300;
    int m = 96;
    std::uint64_t seed = 0;
    NoiseMode noise = NoiseMode::Poisson;
    double exposure_mean = 1000.0;       // mean mutations per sample
    double exposure_shape = 2.0;         // gamma shape of per-sample totals
    double signature_concentration = 0.1;
    double allocation_concentration = 1.0;  // Dirichlet over signatures within a sample
};

namespace detail {

inline std::vector<double> dirichlet(std::size_t dim, double alpha, Rng& rng) {
    std::gamma_distribution<double> g(alpha, 1.0);
    std::vector<double> out(dim);
    double total = 0;
    do {
        total = 0;
        for (auto& v : out) total += (v = g(rng));
    } while (!(total > 0));
    for (auto& v : out) v /= total;
    return out;
}

}  // namespace detail

/// Counts from the exact product W H: rounded half-up, or Poisson draws.
inline Matrix counts_from_truth(const Matrix& W, const Matrix& H, NoiseMode mode, Rng& rng) {
    const Matrix rates = W * H;
    Matrix out(rates.rows(), rates.cols());
    for (Eigen::Index i = 0; i < rates.size(); ++i) {
        const double r = rates.data()[i];
        if (mode == NoiseMode::Exact) {
            out.data()[i] = std::floor(r + 0.5);
        } else {
            out.data()[i] = r > 0 ? static_cast<double>(std::poisson_distribution<long long>(r)(rng)) : 0.0;
        }
    }
    return out;
}

/// Draws signatures from Dirichlet(signature_concentration) and integer
/// exposures as gamma-distributed totals split multinomially across signatures.
inline std::pair<MutationCatalog, GroundTruth> simulate(const SimulationOptions& opt) {
    if (opt.k < 1 || opt.n < opt.k || opt.m < opt.k)
        throw DomainError("simulate: need k >= 1 and n, m >= k (k=" + std::to_string(opt.k) +
                          ", n=" + std::to_string(opt.n) + ", m=" + std::to_string(opt.m) + ")");
    if (!(opt.exposure_mean > 0) || !(opt.exposure_shape > 0) || !(opt.signature_concentration > 0) ||
        !(opt.allocation_concentration > 0))
        throw DomainError("simulate: concentrations and exposure parameters must be > 0");
    Rng rng(opt.seed);
    GroundTruth truth;
    truth.noise_mode = opt.noise;
    truth.H_true.resize(opt.k, opt.m);
    for (int k = 0; k < opt.k; ++k) {
        const auto row = detail::dirichlet(static_cast<std::size_t>(opt.m), opt.signature_concentration, rng);
        for (int m = 0; m < opt.m; ++m) truth.H_true(k, m) = row[static_cast<std::size_t>(m)];
    }
    truth.W_true = Matrix::Zero(opt.n, opt.k);
    std::gamma_distribution<double> totals(opt.exposure_shape, opt.exposure_mean / opt.exposure_shape);
    for (int n = 0; n < opt.n; ++n) {
        long long remaining = std::llround(totals(rng));
        const auto p = detail::dirichlet(static_cast<std::size_t>(opt.k), opt.allocation_concentration, rng);
        double mass_left = 1.0;
        for (int k = 0; k < opt.k; ++k) {
            long long draw = remaining;
            if (k + 1 < opt.k && remaining > 0) {
                const double q = std::clamp(p[static_cast<std::size_t>(k)] / mass_left, 0.0, 1.0);
                draw = std::binomial_distribution<long long>(remaining, q)(rng);
            }
            truth.W_true(n, k) = static_cast<double>(draw);
            remaining -= draw;
            mass_left -= p[static_cast<std::size_t>(k)];
        }
    }
    MutationCatalog cat;
    cat.counts = counts_from_truth(truth.W_true, truth.H_true, opt.noise, rng);
    cat.channels = default_channels(opt.m);
    cat.samples = default_samples(opt.n);
    return {std::move(cat), std::move(truth)};
}

inline std::vector<std::string> signature_names(Eigen::Index k) {
    std::vector<std::string> out;
    for (Eigen::Index i = 0; i < k; ++i) out.push_back("SBS_" + std::to_string(i + 1));
    return out;
}

/// Writes signatures.tsv (K rows, 6 decimals) and exposures.tsv (N rows) into `dir`.
inline void write_ground_truth(const std::string& dir, const GroundTruth& t, const MutationCatalog& cat) {
    const auto names = signature_names(t.H_true.rows());
    {
        std::ofstream out(dir + "/signatures.tsv");
        if (!out) throw Error("cannot write " + dir + "/signatures.tsv");
        out << "Signature";
        for (const auto& ch : cat.channels) out << '\t' << ch;
        out << '\n' << std::fixed << std::setprecision(6);
        for (Eigen::Index k = 0; k < t.H_true.rows(); ++k) {
            out << names[static_cast<std::size_t>(k)];
            for (Eigen::Index m = 0; m < t.H_true.cols(); ++m) out << '\t' << t.H_true(k, m);
            out << '\n';
        }
    }
    std::ofstream out(dir + "/exposures.tsv");
    if (!out) throw Error("cannot write " + dir + "/exposures.tsv");
    out << "Sample";
    for (const auto& s : names) out << '\t' << s;
    out << '\n';
    for (Eigen::Index n = 0; n < t.W_true.rows(); ++n) {
        out << cat.samples[static_cast<std::size_t>(n)];
        for (Eigen::Index k = 0; k < t.W_true.cols(); ++k) out << '\t' << detail::format_count(t.W_true(n, k));
        out << '\n';
    }
}

namespace detail {

inline Matrix read_numeric_table(const std::string& path, std::size_t expected_cols) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    std::string line;
    std::getline(in, line);
    const auto header = split_tabs(strip_cr(line));
    if (expected_cols != 0 && header.size() != expected_cols + 1)
        throw ParseError(path + ":1: expected " + std::to_string(expected_cols) + " value columns");
    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        line = strip_cr(line);
        if (line.empty()) continue;
        const auto f = split_tabs(line);
        if (f.size() != header.size()) throw ParseError(path + ":" + std::to_string(lineno) + ": wrong field count");
        std::vector<double> r;
        for (std::size_t j = 1; j < f.size(); ++j) {
            try {
                r.push_back(std::stod(f[j]));
            } catch (const std::exception&) {
                throw ParseError(path + ":" + std::to_string(lineno) + ": bad number '" + f[j] + "'");
            }
        }
        rows.push_back(std::move(r));
    }
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(header.size() - 1));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
}

}  // namespace detail

/// Reads the bundle written by write_ground_truth. Signature rows are
/// renormalized to undo the 6-decimal rounding.
inline GroundTruth read_ground_truth(const std::string& dir) {
    GroundTruth t;
    t.H_true = detail::read_numeric_table(dir + "/signatures.tsv", 0);
    for (Eigen::Index k = 0; k < t.H_true.rows(); ++k) t.H_true.row(k) /= t.H_true.row(k).sum();
    t.W_true = detail::read_numeric_table(dir + "/exposures.tsv", static_cast<std::size_t>(t.H_true.rows()));
    return t;
}

}  // namespace vaems::data
