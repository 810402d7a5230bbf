#pragma once

// Checkpoint container: the line "VAEMS1" followed by one JSON document.

#include "vaems/core.hpp"
#include "vaems/nmf.hpp"
#include "vaems/vae.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>
#include <string>

namespace vaems::checkpoint {

inline constexpr const char* kMagic = "VAEMS1";

using nlohmann::json;

inline json to_json(const Matrix& m) {
    json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    j["data"] = std::vector<double>(m.data(), m.data() + m.size());
    return j;
}

inline Matrix matrix_from_json(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw ParseError("checkpoint: matrix size mismatch");
    Matrix m(rows, cols);
    std::copy(data.begin(), data.end(), m.data());
    return m;
}

inline json to_json(const vae::VaeConfig& c) {
    return json{{"k", c.k},
                {"hidden", c.hidden},
                {"activation", vae::activation_name(c.activation)},
                {"beta", c.beta},
                {"learning_rate", c.learning_rate},
                {"batch_size", c.batch_size},
                {"max_epochs", c.max_epochs},
                {"patience", c.patience},
                {"relax_temperature", c.relax_temperature},
                {"series_cap", c.series_cap},
                {"seed", c.seed}};
}

inline vae::VaeConfig config_from_json(const json& j) {
    vae::VaeConfig c;
    c.k = j.at("k").get<int>();
    c.hidden = j.at("hidden").get<std::array<int, 3>>();
    c.activation = vae::parse_activation(j.at("activation").get<std::string>());
    c.beta = j.at("beta").get<double>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.max_epochs = j.at("max_epochs").get<int>();
    c.patience = j.at("patience").get<int>();
    c.relax_temperature = j.at("relax_temperature").get<double>();
    c.series_cap = j.at("series_cap").get<long>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

inline json to_json(const vae::TrainReport& r) {
    json losses = json::array();
    for (const auto& e : r.epoch_losses) losses.push_back({e.train, e.val});
    return json{{"epoch_losses", losses},
                {"best_epoch", r.best_epoch},
                {"stopped_reason", vae::stop_reason_name(r.stopped_reason)},
                {"best_val_loss", r.best_val_loss},
                {"final_train_loss", r.final_train_loss},
                {"truncations", r.truncations},
                {"draws", r.draws}};
}

inline vae::TrainReport report_from_json(const json& j) {
    vae::TrainReport r;
    for (const auto& e : j.at("epoch_losses")) r.epoch_losses.push_back({e.at(0).get<double>(), e.at(1).get<double>()});
    r.best_epoch = j.at("best_epoch").get<int>();
    r.stopped_reason = vae::parse_stop_reason(j.at("stopped_reason").get<std::string>());
    r.best_val_loss = j.at("best_val_loss").get<double>();
    r.final_train_loss = j.at("final_train_loss").get<double>();
    r.truncations = j.at("truncations").get<long>();
    r.draws = j.at("draws").get<long>();
    return r;
}

/// Metadata stored alongside either model kind.
struct Provenance {
    std::uint64_t split_seed = 0;
    std::uint64_t run_seed = 0;
};

inline json vae_to_json(const vae::TrainedModel& tm, const Provenance& prov) {
    json params = json::array();
    for (const auto* p : tm.model.parameters()) {
        json e = to_json(p->value);
        e["name"] = p->name;
        params.push_back(std::move(e));
    }
    json bn = json::array();
    for (const auto& b : tm.model.blocks) {
        bn.push_back({{"running_mean", std::vector<double>(b.bn.running_mean.data(), b.bn.running_mean.data() + b.bn.running_mean.size())},
                      {"running_var", std::vector<double>(b.bn.running_var.data(), b.bn.running_var.data() + b.bn.running_var.size())},
                      {"momentum", b.bn.momentum},
                      {"eps", b.bn.eps}});
    }
    return json{{"format", kMagic},
                {"kind", "vae"},
                {"channels", tm.model.channels},
                {"split_seed", prov.split_seed},
                {"run_seed", prov.run_seed},
                {"config", to_json(tm.model.config)},
                {"parameters", params},
                {"batch_norm", bn},
                {"prior_basis", to_json(tm.prior_basis)},
                {"prior_rates", to_json(tm.train_prior)},
                {"report", to_json(tm.report)}};
}

inline vae::TrainedModel vae_from_json(const json& j) {
    const auto cfg = config_from_json(j.at("config"));
    vae::TrainedModel tm;
    tm.model = vae::build_model(j.at("channels").get<Eigen::Index>(), cfg);
    auto params = tm.model.parameters();
    const auto& jp = j.at("parameters");
    if (jp.size() != params.size()) throw ParseError("checkpoint: parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (jp[i].at("name").get<std::string>() != params[i]->name)
            throw ParseError("checkpoint: expected parameter " + params[i]->name);
        Matrix v = matrix_from_json(jp[i]);
        if (v.rows() != params[i]->value.rows() || v.cols() != params[i]->value.cols())
            throw ParseError("checkpoint: shape mismatch for " + params[i]->name);
        params[i]->value = std::move(v);
        params[i]->zero_grad();
    }
    const auto& jb = j.at("batch_norm");
    for (std::size_t i = 0; i < tm.model.blocks.size(); ++i) {
        auto& st = tm.model.blocks[i].bn;
        const auto mean = jb.at(i).at("running_mean").get<std::vector<double>>();
        const auto var = jb.at(i).at("running_var").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(mean.size()) != st.running_mean.size() ||
            static_cast<Eigen::Index>(var.size()) != st.running_var.size())
            throw ParseError("checkpoint: batch-norm size mismatch");
        st.running_mean = Eigen::Map<const RowVector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
        st.running_var = Eigen::Map<const RowVector>(var.data(), static_cast<Eigen::Index>(var.size()));
        st.momentum = jb.at(i).at("momentum").get<double>();
        st.eps = jb.at(i).at("eps").get<double>();
    }
    tm.prior_basis = matrix_from_json(j.at("prior_basis"));
    tm.train_prior = matrix_from_json(j.at("prior_rates"));
    tm.report = report_from_json(j.at("report"));
    return tm;
}

inline json nmf_to_json(const nmf::NmfFactorization& f, const Provenance& prov) {
    return json{{"format", kMagic},      {"kind", "nmf"},        {"split_seed", prov.split_seed},
                {"run_seed", prov.run_seed}, {"W", to_json(f.W)}, {"H", to_json(f.H)},
                {"loss_trace", f.loss_trace}};
}

inline nmf::NmfFactorization nmf_from_json(const json& j) {
    return {matrix_from_json(j.at("W")), matrix_from_json(j.at("H")), j.at("loss_trace").get<std::vector<double>>()};
}

inline void write(std::ostream& out, const json& j) { out << kMagic << '\n' << j.dump() << '\n'; }

inline json read(std::istream& in, const std::string& source = "<stream>") {
    std::string magic;
    if (!std::getline(in, magic) || magic != kMagic) throw ParseError(source + ": not a VAEMS1 checkpoint");
    try {
        json j = json::parse(in);
        if (j.value("format", "") != kMagic) throw ParseError(source + ": format field mismatch");
        return j;
    } catch (const json::exception& e) {
        throw ParseError(source + ": " + e.what());
    }
}

inline void save(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write checkpoint " + path);
    write(out, j);
}

inline json load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open checkpoint " + path);
    return read(in, path);
}

}  // namespace vaems::checkpoint
