#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "alseg/cli.hpp"
#include "../support/fixtures.hpp"

namespace alseg::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
    int code;
    std::string out, err;
};

Result call(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run(args, out, err);
    return {code, out.str(), err.str()};
}

std::vector<std::string> lines_of(const fs::path& p) {
    std::ifstream is(p);
    std::vector<std::string> lines;
    for (std::string l; std::getline(is, l);) lines.push_back(l);
    return lines;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

fs::path small_volume(const std::string& name) {
    const auto dir = testing::scratch_dir(name);
    const auto r = call({"synth", "--out", dir.string(), "--z", "2", "--h", "64", "--w", "64", "--blobs", "3",
                         "--min-axis", "5", "--max-axis", "12", "--seed", "4"});
    EXPECT_EQ(r.code, kOk) << r.err;
    return dir;
}

std::vector<std::string> quick(const fs::path& data, const fs::path& out) {
    return {"--data", data.string(), "--preset", "desk", "--n", "40", "--m", "4", "--k", "3", "--patch", "16",
            "--initial-epochs", "2", "--finetune-epochs", "1", "--mc-passes", "2", "--quiet", "--out", out.string()};
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

TEST(Cli, UsageErrorsExitTwo) {
    const auto dir = testing::scratch_dir("cli_usage");
    EXPECT_EQ(call({"synth", "--out", dir.string(), "--h", "0"}).code, kUsageError);
    EXPECT_EQ(call({"run", "--strategy", "random"}).code, kUsageError);
    EXPECT_EQ(call({"bogus"}).code, kUsageError);
    EXPECT_EQ(call({}).code, kUsageError);
    const auto vol = small_volume("cli_usage_vol");
    const auto r = call(concat({"run", "--strategy", "entropy_please"}, quick(vol, dir / "x")));
    EXPECT_EQ(r.code, kUsageError);
    EXPECT_NE(r.err.find("entropy_please"), std::string::npos) << r.err;
    EXPECT_EQ(call(concat({"run", "--strategy", "random", "--m", "0"}, quick(vol, dir / "y"))).code, kUsageError);
}

TEST(Cli, HelpExitsZero) {
    const auto r = call({"--help"});
    EXPECT_EQ(r.code, kOk);
    EXPECT_NE(r.out.find("compare"), std::string::npos);
}

TEST(Cli, RuntimeFailureExitsOne) {
    const auto dir = testing::scratch_dir("cli_missing");
    const auto r = call(concat({"run", "--strategy", "random"}, quick(dir / "nowhere", dir / "out")));
    EXPECT_EQ(r.code, kRuntimeFailure);
    EXPECT_NE(r.err.find("error"), std::string::npos);
}

TEST(Cli, SynthWritesEverySliceDeterministically) {
    const auto a = small_volume("cli_synth_a"), b = small_volume("cli_synth_b");
    for (const char* sub : {"images", "labels"}) {
        std::size_t files = 0;
        for (const auto& e : fs::directory_iterator(a / sub)) {
            ++files;
            EXPECT_EQ(slurp(e.path()), slurp(b / sub / e.path().filename()));
        }
        EXPECT_EQ(files, 2u);
    }
    EXPECT_TRUE(fs::exists(a / "manifest.json"));
}

TEST(Cli, RunWritesCurveOfTPlusOneRows) {
    const auto vol = small_volume("cli_run_vol");
    const auto out = testing::scratch_dir("cli_run") / "r";
    const auto r = call(concat({"run", "--strategy", "max_entropy", "--seed", "2"}, quick(vol, out)));
    ASSERT_EQ(r.code, kOk) << r.err;
    const auto curve = lines_of(out / "curve.csv");
    ASSERT_EQ(curve.size(), 12u);  // header plus T+1 rows at the desk T of 10
    EXPECT_EQ(curve[1].rfind("max_entropy,2,4,", 0), 0u) << curve[1];
    EXPECT_EQ(curve[11].rfind("max_entropy,2,34,", 0), 0u) << curve[11];
    const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
    EXPECT_EQ(manifest.at("config").at("k"), 3);
    EXPECT_TRUE(fs::exists(out / "selections.csv"));
    EXPECT_NE(r.out.find("final jaccard"), std::string::npos);
}

TEST(Cli, CompareAggregatesAndWarnsOnDuplicates) {
    const auto vol = small_volume("cli_cmp_vol");
    const auto out = testing::scratch_dir("cli_cmp") / "c";
    auto args = concat({"compare", "--strategies", "random,coreset", "--strategy", "random", "--seeds", "1,2,3",
                        "--iters", "2"},
                       quick(vol, out));
    const auto r = call(args);
    ASSERT_EQ(r.code, kOk) << r.err;
    EXPECT_NE(r.err.find("duplicate strategy 'random'"), std::string::npos) << r.err;
    const auto raw = lines_of(out / "curve.csv");
    EXPECT_EQ(raw.size(), 1u + 6u * 3u);
    const auto summary = lines_of(out / "summary.csv");
    EXPECT_EQ(summary.size(), 1u + 2u * 3u);
    std::size_t runs = 0;
    for (const auto& e : fs::directory_iterator(out / "runs")) runs += e.is_directory();
    EXPECT_EQ(runs, 6u);
}

TEST(Cli, CompareIsReproducibleUnderParallelism) {
    const auto vol = small_volume("cli_par_vol");
    const auto base = testing::scratch_dir("cli_par");
    const std::vector<std::string> head{"compare", "--strategies", "bald,kmeans", "--seeds", "1,2", "--iters", "2"};
    ASSERT_EQ(call(concat(concat(head, quick(vol, base / "p1")), {"--parallel", "1"})).code, kOk);
    ASSERT_EQ(call(concat(concat(head, quick(vol, base / "p3")), {"--parallel", "3"})).code, kOk);
    EXPECT_EQ(slurp(base / "p1" / "curve.csv"), slurp(base / "p3" / "curve.csv"));
    EXPECT_EQ(slurp(base / "p1" / "summary.csv"), slurp(base / "p3" / "summary.csv"));
}

TEST(Presets, Values) {
    const auto d = desk_preset();
    EXPECT_EQ(d.m, 10u);
    EXPECT_EQ(d.n, 400u);
    EXPECT_EQ(d.k, 5u);
    EXPECT_EQ(d.iterations, 10u);
    EXPECT_EQ(d.patch_size, 32u);
    const auto p = paper_preset();
    EXPECT_EQ(p.final_label_count(), 520u);
    EXPECT_EQ(p.patch_size, 128u);
}

} // namespace
} // namespace alseg::cli
