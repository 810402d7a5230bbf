#include "vaems/data.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>
#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace vaems;

namespace {

const fs::path& work_dir() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / ("vaems_cli_test_" + std::to_string(::getpid()));
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

struct RemoveWorkDir : ::testing::Environment {
    void TearDown() override { fs::remove_all(work_dir()); }
};
const auto* const remove_work_dir = ::testing::AddGlobalTestEnvironment(new RemoveWorkDir);

int run(const std::string& args, const std::string& log = "") {
    std::string cmd = std::string(VAEMS_CLI_PATH) + " " + args;
    cmd += log.empty() ? " >/dev/null 2>&1" : " >" + (work_dir() / log).string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string path(const std::string& rel) { return (work_dir() / rel).string(); }

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(slurp(p));
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(cells);
    }
    return rows;
}

std::size_t column(const std::vector<std::string>& header, const std::string& name) {
    return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
}

// An integer catalog of exact nonnegative rank 3.
void write_rank3_catalog(const std::string& file) {
    Rng rng(5);
    std::uniform_int_distribution<int> w(0, 6), h(0, 4);
    Matrix W(60, 3), H(3, 96);
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = w(rng);
    for (Eigen::Index i = 0; i < H.size(); ++i) H.data()[i] = h(rng);
    W.col(0).array() += 1;
    data::MutationCatalog cat;
    cat.counts = W * H;
    cat.channels = data::sbs96_channels();
    for (int i = 0; i < 60; ++i) cat.samples.push_back("S" + std::to_string(i));
    std::ofstream out(file);
    data::write_catalog(out, cat);
}

}  // namespace

TEST(Cli, SimulateWritesCatalogTruthAndManifest) {
    ASSERT_EQ(run("simulate --k 3 --n 40 --seed 4 --out " + path("sim")), 0);
    for (auto f : {"catalog.tsv", "signatures.tsv", "exposures.tsv", "manifest.json"})
        EXPECT_TRUE(fs::exists(work_dir() / "sim" / f)) << f;
    const auto cat = data::load_catalog(path("sim/catalog.tsv"));
    EXPECT_EQ(cat.counts.rows(), 40);
    EXPECT_EQ(cat.counts.cols(), 96);
    const auto m = nlohmann::json::parse(slurp(work_dir() / "sim" / "manifest.json"));
    for (auto key : {"command", "args", "config", "seeds", "inputs", "outputs", "tool_version", "duration_seconds"})
        EXPECT_TRUE(m.contains(key)) << key;
    EXPECT_EQ(m.at("command"), "simulate");
}

TEST(Cli, SimulateIsDeterministic) {
    ASSERT_EQ(run("simulate --k 2 --n 30 --seed 9 --out " + path("det_a")), 0);
    ASSERT_EQ(run("simulate --k 2 --n 30 --seed 9 --out " + path("det_b")), 0);
    EXPECT_EQ(slurp(work_dir() / "det_a" / "catalog.tsv"), slurp(work_dir() / "det_b" / "catalog.tsv"));
    EXPECT_EQ(slurp(work_dir() / "det_a" / "signatures.tsv"), slurp(work_dir() / "det_b" / "signatures.tsv"));
}

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run("simulate --n 10 --out " + path("nok")), 2);
    EXPECT_EQ(run("bogus"), 2);
    ASSERT_EQ(run("simulate --k 2 --n 30 --out " + path("usage")), 0);
    const std::string cat = path("usage/catalog.tsv");
    EXPECT_EQ(run("fit --catalog " + cat + " --k 2 --method svd --out " + path("bad_method")), 2);
    EXPECT_EQ(run("select-k --catalog " + cat + " --k-min 4 --k-max 2 --method nmf --out " + path("bad_range")), 2);
    EXPECT_EQ(run("fit --catalog " + path("nothere.tsv") + " --k 2 --out " + path("nofile")), 2);
}

TEST(Cli, MalformedCatalogExitsOne) {
    std::ofstream(path("broken.tsv")) << "MutationType\tA\nA[C>A]A\t-3\n";
    ASSERT_EQ(run("fit --catalog " + path("broken.tsv") + " --k 1 --method nmf --out " + path("broken"), "broken.log"), 1);
    EXPECT_NE(slurp(work_dir() / "broken.log").find("broken.tsv:2"), std::string::npos);
}

TEST(Cli, FitNmfReconstructsExactRankThree) {
    write_rank3_catalog(path("rank3.tsv"));
    ASSERT_EQ(run("fit --catalog " + path("rank3.tsv") + " --k 3 --method nmf --runs 2 --nmf-iters 20000 --out " +
                  path("rank3")),
              0);
    const auto rows = read_csv(work_dir() / "rank3" / "stability.csv");
    ASSERT_EQ(rows.size(), 3u);
    const auto col = column(rows[0], "val_loss");
    for (std::size_t r = 1; r < rows.size(); ++r) EXPECT_LE(std::stod(rows[r][col]), 1e-3);
    EXPECT_TRUE(fs::exists(work_dir() / "rank3" / "checkpoints" / "k3_run00.ckpt"));
}

TEST(Cli, SelectKEqualBoundsWarns) {
    ASSERT_EQ(run("simulate --k 2 --n 30 --out " + path("eq")), 0);
    ASSERT_EQ(run("select-k --catalog " + path("eq/catalog.tsv") + " --k-min 2 --k-max 2 --method nmf --runs 2 --out " +
                      path("eq_out"),
                  "eq.log"),
              0);
    EXPECT_NE(slurp(work_dir() / "eq.log").find("warning"), std::string::npos);
    EXPECT_NE(slurp(work_dir() / "eq.log").find("selected k=2"), std::string::npos);
}

TEST(Cli, EvaluateCheckpointsWithoutTruth) {
    ASSERT_EQ(run("simulate --k 2 --n 40 --seed 3 --out " + path("ev")), 0);
    ASSERT_EQ(run("fit --catalog " + path("ev/catalog.tsv") + " --k 2 --method nmf --runs 2 --out " + path("ev_fit")), 0);
    const std::string ckpt = path("ev_fit/checkpoints/k2_run00.ckpt");
    ASSERT_EQ(run("evaluate --catalog " + path("ev/catalog.tsv") + " --checkpoint " + ckpt + " --checkpoint " + ckpt +
                      " --out " + path("ev_out"),
                  "ev.log"),
              0);
    EXPECT_NE(slurp(work_dir() / "ev.log").find("warning"), std::string::npos);
    const auto rows = read_csv(work_dir() / "ev_out" / "metrics.csv");
    ASSERT_EQ(rows.size(), 3u);
    const auto acs = column(rows[0], "ACS"), pacs = column(rows[0], "PACS");
    for (std::size_t r = 1; r < 3; ++r) {
        EXPECT_EQ(rows[r][acs], "");
        EXPECT_NEAR(std::stod(rows[r][pacs]), 1.0, 1e-12);
    }
    for (auto f : {"selected_k.svg", "exposure_density.svg", "manifest.json"})
        EXPECT_TRUE(fs::exists(work_dir() / "ev_out" / f)) << f;
}

TEST(Cli, EvaluateWithTruthScansK) {
    ASSERT_EQ(run("simulate --k 2 --n 50 --seed 6 --out " + path("evt")), 0);
    ASSERT_EQ(run("evaluate --catalog " + path("evt/catalog.tsv") + " --truth " + path("evt") +
                  " --k-min 2 --k-max 3 --n-splits 2 --method nmf --runs 3 --out " + path("evt_out")),
              0);
    const auto rows = read_csv(work_dir() / "evt_out" / "metrics.csv");
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].size(), 13u);
    const auto ci = column(rows[0], "CI_test"), acs = column(rows[0], "ACS"), k = column(rows[0], "k");
    for (std::size_t r = 1; r < 3; ++r) {
        EXPECT_EQ(rows[r][ci], "");  // NMF has no intervals
        if (rows[r][k] == "2")
            EXPECT_GT(std::stod(rows[r][acs]), 0.9);
        else
            EXPECT_EQ(rows[r][acs], "");  // no alignment when k differs from the truth
    }
    for (auto f : {"k_selection.csv", "loss_vs_k.svg", "silhouette_vs_k.svg"})
        EXPECT_TRUE(fs::exists(work_dir() / "evt_out" / f)) << f;
}

TEST(Cli, RerunReproducesCsvBytes) {
    ASSERT_EQ(run("simulate --k 2 --n 40 --seed 8 --out " + path("rr")), 0);
    ASSERT_EQ(run("fit --catalog " + path("rr/catalog.tsv") +
                  " --k 2 --method vae --runs 2 --sweep-trials 2 --max-epochs 5 --hidden 16 8 4 --out " + path("rr_a")),
              0);
    ASSERT_EQ(run("rerun --manifest " + path("rr_a/manifest.json") + " --out " + path("rr_b")), 0);
    for (auto f : {"sweep.csv", "stability.csv"})
        EXPECT_EQ(slurp(work_dir() / "rr_a" / f), slurp(work_dir() / "rr_b" / f)) << f;
    EXPECT_EQ(slurp(work_dir() / "rr_a" / "checkpoints" / "k2_run00.ckpt"),
              slurp(work_dir() / "rr_b" / "checkpoints" / "k2_run00.ckpt"));
}
