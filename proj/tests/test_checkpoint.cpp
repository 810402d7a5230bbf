#include "vaems/checkpoint.hpp"
#include "vaems/data.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace vaems;

namespace {

vae::TrainedModel small_model() {
    data::SimulationOptions so;
    so.n = 40;
    so.m = 10;
    so.k = 2;
    so.seed = 8;
    so.exposure_mean = 200;
    const auto counts = data::simulate(so).first.counts;
    vae::VaeConfig c;
    c.k = 2;
    c.hidden = {8, 6, 4};
    c.max_epochs = 5;
    c.batch_size = 8;
    c.seed = 3;
    return vae::fit(counts.topRows(30), counts.bottomRows(10), c);
}

}  // namespace

TEST(Checkpoint, VaeRoundTrip) {
    auto tm = small_model();
    std::stringstream ss;
    checkpoint::write(ss, checkpoint::vae_to_json(tm, {4, 9}));
    EXPECT_EQ(ss.str().substr(0, 7), "VAEMS1\n");
    const auto j = checkpoint::read(ss);
    EXPECT_EQ(j.at("split_seed").get<std::uint64_t>(), 4u);
    EXPECT_EQ(j.at("run_seed").get<std::uint64_t>(), 9u);
    auto back = checkpoint::vae_from_json(j);
    const auto a = tm.model.parameters();
    const auto b = back.model.parameters();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE((a[i]->value.array() == b[i]->value.array()).all()) << a[i]->name;
    for (std::size_t i = 0; i < 3; ++i)
        EXPECT_TRUE((tm.model.blocks[i].bn.running_var.array() == back.model.blocks[i].bn.running_var.array()).all());
    EXPECT_EQ(back.report.best_epoch, tm.report.best_epoch);
    EXPECT_EQ(back.report.stopped_reason, tm.report.stopped_reason);
    EXPECT_EQ(back.report.epoch_losses.size(), tm.report.epoch_losses.size());
    EXPECT_EQ(back.model.config.hidden, tm.model.config.hidden);
    Rng rng(1);
    const Matrix V = uniform_matrix(5, 10, 0, 30, rng).array().round();
    EXPECT_TRUE((vae::encode(tm.model, V).array() == vae::encode(back.model, V).array()).all());
}

TEST(Checkpoint, NmfRoundTrip) {
    nmf::NmfFactorization f{Matrix::Constant(2, 3, 0.1), Matrix::Constant(3, 4, 1.0 / 3), {3.0, 2.0, 1.5}};
    std::stringstream ss;
    checkpoint::write(ss, checkpoint::nmf_to_json(f, {1, 2}));
    const auto j = checkpoint::read(ss);
    EXPECT_EQ(j.at("kind"), "nmf");
    const auto g = checkpoint::nmf_from_json(j);
    EXPECT_TRUE((g.W.array() == f.W.array()).all());
    EXPECT_TRUE((g.H.array() == f.H.array()).all());
    EXPECT_EQ(g.loss_trace, f.loss_trace);
}

TEST(Checkpoint, RejectsBadInput) {
    std::stringstream bad_magic("VAEMS0\n{}\n");
    EXPECT_THROW(checkpoint::read(bad_magic), ParseError);
    std::stringstream bad_json("VAEMS1\n{\"format\": \n");
    EXPECT_THROW(checkpoint::read(bad_json), ParseError);
    std::stringstream wrong_format("VAEMS1\n{\"format\": \"other\"}\n");
    EXPECT_THROW(checkpoint::read(wrong_format), ParseError);
    EXPECT_THROW(checkpoint::load("/nonexistent/x.ckpt"), ParseError);
}

TEST(Checkpoint, RejectsTamperedParameters) {
    auto tm = small_model();
    auto j = checkpoint::vae_to_json(tm, {});
    j["parameters"][0]["name"] = "renamed";
    EXPECT_THROW(checkpoint::vae_from_json(j), ParseError);
    j = checkpoint::vae_to_json(tm, {});
    j["parameters"].erase(0);
    EXPECT_THROW(checkpoint::vae_from_json(j), ParseError);
}
