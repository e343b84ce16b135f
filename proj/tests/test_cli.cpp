#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "netlens/classify.hpp"
#include "netlens/io_util.hpp"
#include "netlens/network.hpp"
#include "netlens/npy.hpp"
#include "netlens/relevance.hpp"
#include "netlens/xai_metrics.hpp"
#include "test_util.hpp"

using namespace netlens;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    std::string cmd = std::string(NETLENS_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

} // namespace

TEST_CASE("auc subcommand fails cleanly on a missing file") {
    CHECK(run_cli("auc --pred /nonexistent/missing.csv") == 1);
}

TEST_CASE("unknown flags are rejected") {
    CHECK(run_cli("auc --pred x.csv --no-such-flag 1") != 0);
}

TEST_CASE("cli pipeline equals in-process composition") {
    TempDir tmp;
    fs::path fx = tmp.path() / "fx";
    fs::path inf = tmp.path() / "inf";
    fs::path ex = tmp.path() / "ex";
    fs::path xai = tmp.path() / "xai";

    REQUIRE(run_cli("fixtures --seed 5 --out " + fx.string() + " --images 3") == 0);
    REQUIRE(run_cli("infer --net " + (fx / "net" / "manifest.json").string() + " --images " +
                    (fx / "images").string() + " --labels " + (fx / "labels.csv").string() +
                    " --out " + inf.string()) == 0);
    REQUIRE(run_cli("explain --net " + (fx / "net" / "manifest.json").string() +
                    " --images " + (fx / "images").string() + " --target 3 --out " +
                    ex.string()) == 0);
    REQUIRE(run_cli("xai-eval --heatmaps " + ex.string() + " --masks " +
                    (fx / "masks" / "index.json").string() + " --out " + xai.string()) == 0);

    // library-level reference path over the same artifacts
    NetworkSpec net = load_network(fx / "net" / "manifest.json");
    std::vector<std::pair<std::string, Tensor>> heatmaps;
    std::map<std::string, std::map<std::string, SegmentationMask>> masks;
    nlohmann::json index = nlohmann::json::parse(slurp(fx / "masks" / "index.json"));
    for (int i = 0; i < 3; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "img%03d", i);
        std::string id(buf);
        Tensor img = read_npy(fx / "images" / (id + ".npy"));
        RelevanceMap map = explain(net, img, 3, SeedMode::Logit);

        // the explain subcommand must have written identical relevance
        Tensor from_cli = read_npy(ex / (id + ".npy"));
        REQUIRE(from_cli.data == map.input_relevance.data);

        heatmaps.emplace_back(id, map.input_relevance);
        for (const auto& [lesion, file] : index.at(id).items())
            masks[id][lesion] = mask_from_tensor(
                read_npy(fx / "masks" / file.get<std::string>()), id, lesion);
    }

    XaiScoreTable expected =
        score_set(heatmaps, masks, {Pooling::SumPos, Pooling::L2NormSq},
                  {"microaneurysms", "haemorrhages", "hard_exudates", "total"}, "lrp_a1b0");

    std::string csv = slurp(xai / "scores.csv");
    std::size_t matched = 0;
    for (const XaiScoreRow& row : expected.rows) {
        std::string line = csv_join({row.lesion, row.method, pooling_name(row.pooling),
                                     row.metric, format_double(row.mean),
                                     format_double(row.median), std::to_string(row.n_used),
                                     std::to_string(row.n_excluded)});
        if (csv.find(line) != std::string::npos) ++matched;
    }
    CHECK(matched == expected.rows.size());

    // the infer CSV feeds auc with the same records the library sees
    auto records = read_predictions_csv(inf / "predictions.csv");
    CHECK(records.size() == 3);
}

TEST_CASE("outputs are identical for any thread count") {
    TempDir tmp;
    fs::path fx = tmp.path() / "fx";
    REQUIRE(run_cli("fixtures --seed 9 --out " + fx.string() + " --images 4") == 0);

    auto explain_with_threads = [&](const std::string& threads, const fs::path& out) {
        std::string cmd = "NETLENS_THREADS=" + threads + " " + NETLENS_CLI_PATH +
                          " explain --net " + (fx / "net" / "manifest.json").string() +
                          " --images " + (fx / "images").string() + " --target 2 --out " +
                          out.string() + " >/dev/null 2>&1";
        return WEXITSTATUS(std::system(cmd.c_str()));
    };
    fs::path one = tmp.path() / "one", four = tmp.path() / "four";
    REQUIRE(explain_with_threads("1", one) == 0);
    REQUIRE(explain_with_threads("4", four) == 0);
    for (const auto& entry : fs::directory_iterator(one)) {
        // the run manifest records the differing --out argument by design
        if (entry.path().filename() == "run_manifest.json") continue;
        CHECK(slurp(entry.path()) == slurp(four / entry.path().filename()));
    }
}

TEST_CASE("run manifests accompany every output directory") {
    TempDir tmp;
    fs::path fx = tmp.path() / "fx";
    REQUIRE(run_cli("fixtures --seed 2 --out " + fx.string() + " --images 2") == 0);
    nlohmann::json manifest = nlohmann::json::parse(slurp(fx / "run_manifest.json"));
    CHECK(manifest.at("command") == "fixtures");
    CHECK(manifest.at("seed") == 2);
    CHECK(manifest.contains("toolkit_version"));
    CHECK(manifest.contains("distortion_table_version"));
}
