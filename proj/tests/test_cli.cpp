// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#include "test_util.hpp"

#include <splatlift/cli.hpp>
#include <splatlift/feature_io.hpp>
#include <splatlift/image_io.hpp>

#include <gtest/gtest.h>
#include <json.hpp>

#include <fstream>
#include <numeric>
#include <sstream>

namespace splatlift {

namespace {

namespace fs = std::filesystem;

const fs::path kFixture = fs::path(SPLATLIFT_TEST_DATA) / "oracle_3g";

struct CliRun {
    int code = -1;
    std::string out;
    std::string err;
};

CliRun run(std::vector<std::string> args)
{
    args.insert(args.begin(), "splatlift");
    std::vector<const char *> argv;
    for (const auto &a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out, err;
    CliRun r;
    r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

nlohmann::json read_json(const fs::path &p)
{
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

bool contains(const std::string &text, const std::string &needle)
{
    return text.find(needle) != std::string::npos;
}

// One synthetic scene shared by the pipeline tests.
class CliPipeline : public ::testing::Test {
protected:
    static void SetUpTestSuite()
    {
        dir_ = fs::path(::testing::TempDir()) / "splatlift" / "cli_pipeline";
        fs::remove_all(dir_);
        const CliRun r = run({"gen-synthetic", "--out-dir", dir_.string(), "--openvocab"});
        ASSERT_EQ(r.code, 0) << r.err;
    }

    static std::vector<std::string> scene_args()
    {
        return {"--scene", (dir_ / "scene.ply").string(), "--cameras", (dir_ / "cameras.json").string()};
    }

    static std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string> &tail)
    {
        head.insert(head.end(), tail.begin(), tail.end());
        return head;
    }

    static fs::path dir_;
};

fs::path CliPipeline::dir_;

} // namespace

TEST(Cli, UpliftReproducesGoldenFixture)
{
    const auto dir = testing_util::scratch_dir();
    const CliRun r = run({"uplift", "--scene", (kFixture / "scene.ply").string(), "--cameras",
                       (kFixture / "cameras.json").string(), "--features-dir", (kFixture / "features").string(),
                       "--out", (dir / "f.splf").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const GaussianFeatures got = read_gaussian_features(dir / "f.splf");
    const auto want = read_json(kFixture / "expected_uplift.json").at("features");
    ASSERT_EQ(got.values.rows(), static_cast<Eigen::Index>(want.size()));
    for (std::size_t i = 0; i < want.size(); ++i) {
        for (std::size_t k = 0; k < want[i].size(); ++k) {
            EXPECT_NEAR(got.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)),
                        want[i][k].get<double>(), 1e-6);
        }
    }
    EXPECT_EQ(nlohmann::json::parse(r.out).at("unseen").get<int>(), 0);
}

TEST(Cli, MissingRequiredFlagIsNamed)
{
    const CliRun r = run({"uplift", "--cameras", "c.json", "--features-dir", "f", "--out", "o.splf"});
    EXPECT_EQ(r.code, 1);
    EXPECT_TRUE(contains(r.err, "--scene")) << r.err;
    EXPECT_TRUE(contains(r.err, "Usage")) << r.err;
}

TEST(Cli, UnknownFlagPrintsUsage)
{
    const CliRun r = run({"render", "--scene", "s.ply", "--cameras", "c.json", "--view", "v", "--out", "o.png", "--bogus"});
    EXPECT_EQ(r.code, 1);
    EXPECT_TRUE(contains(r.err, "--bogus")) << r.err;
    EXPECT_TRUE(contains(r.err, "--view")) << r.err;
    EXPECT_EQ(run({}).code, 1);
}

TEST(Cli, HelpExitsZero)
{
    const CliRun r = run({"segment", "--help"});
    EXPECT_EQ(r.code, 0);
    EXPECT_TRUE(contains(r.out, "--method")) << r.out;
}

TEST(Cli, MissingInputFileExitsTwo)
{
    const auto dir = testing_util::scratch_dir();
    const CliRun r = run({"uplift", "--scene", (dir / "absent.ply").string(), "--cameras",
                       (kFixture / "cameras.json").string(), "--features-dir", (kFixture / "features").string(),
                       "--out", (dir / "f.splf").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_TRUE(contains(r.err, "absent.ply")) << r.err;
}

TEST(Cli, InvalidValueExitsOne)
{
    const auto dir = testing_util::scratch_dir();
    const CliRun r = run({"uplift", "--scene", (kFixture / "scene.ply").string(), "--cameras",
                       (kFixture / "cameras.json").string(), "--features-dir", (kFixture / "features").string(),
                       "--out", (dir / "f.splf").string(), "--keep-fraction", "1.5", "--pruned-scene",
                       (dir / "p.ply").string()});
    EXPECT_EQ(r.code, 1) << r.err;
}

TEST(Cli, RenderWritesPngAndFeatureMaps)
{
    const auto dir = testing_util::scratch_dir();
    const std::vector<std::string> scene = {"--scene", (kFixture / "scene.ply").string(), "--cameras",
                                            (kFixture / "cameras.json").string()};
    auto args = std::vector<std::string>{"render", "--view", "cam1", "--out", (dir / "rgb.png").string()};
    args.insert(args.end(), scene.begin(), scene.end());
    CliRun r = run(args);
    ASSERT_EQ(r.code, 0) << r.err;
    const Image8 img = read_png(dir / "rgb.png");
    EXPECT_EQ(img.width, 4);
    EXPECT_EQ(img.channels, 3);

    ASSERT_EQ(run({"uplift", "--scene", scene[1], "--cameras", scene[3], "--features-dir",
                   (kFixture / "features").string(), "--out", (dir / "f.splf").string()})
                  .code,
              0);
    args = {"render", "--view", "cam0", "--out", (dir / "feat.splf").string(), "--features",
            (dir / "f.splf").string(), "--layer", "feature"};
    args.insert(args.end(), scene.begin(), scene.end());
    r = run(args);
    ASSERT_EQ(r.code, 0) << r.err;
    const FeatureMap m = read_feature_map(dir / "feat.splf");
    EXPECT_EQ(m.channels, 2);
    EXPECT_EQ(m.camera_id, "cam0");

    args = {"render", "--view", "nope", "--out", (dir / "x.png").string()};
    args.insert(args.end(), scene.begin(), scene.end());
    EXPECT_EQ(run(args).code, 1);
}

TEST_F(CliPipeline, SegmentReachesHighIouOnEveryView)
{
    const fs::path out = dir_ / "seg";
    const fs::path features = dir_ / "features_3d.splf";
    ASSERT_EQ(run(with({"uplift", "--features-dir", (dir_ / "features").string(), "--out", features.string()},
                       scene_args()))
                  .code,
              0);
    const CliRun r = run(with({"segment", "--features", features.string(), "--fg-mask",
                            (dir_ / "scribbles" / "view_0.png").string(), "--gt-dir", (dir_ / "gt").string(),
                            "--out-dir", out.string()},
                           scene_args()));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto summary = read_json(out / "summary.json");
    ASSERT_EQ(summary.at("views").size(), 12u);
    for (const auto &v : summary.at("views")) {
        EXPECT_GE(v.at("iou").get<double>(), 0.95) << v.dump();
        EXPECT_TRUE(fs::exists(out / (v.at("camera_id").get<std::string>() + ".png")));
    }
    EXPECT_EQ(summary.at("unary_mode").get<std::string>(), "cosine_to_mean");
}

TEST_F(CliPipeline, DiffuseWritesVectorAndGraph)
{
    const fs::path features = dir_ / "features_3d_diffuse.splf";
    ASSERT_EQ(run(with({"uplift", "--features-dir", (dir_ / "features").string(), "--out", features.string()},
                       scene_args()))
                  .code,
              0);
    const fs::path cfg = dir_ / "diffuse_config.json";
    std::ofstream(cfg) << R"({"k": 8, "T": 20})";
    const CliRun r = run(with({"diffuse", "--features", features.string(), "--fg-mask",
                            (dir_ / "scribbles" / "view_0.png").string(), "--config", cfg.string(), "--out",
                            (dir_ / "g.splf").string(), "--graph-out", (dir_ / "graph").string()},
                           scene_args()));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto summary = nlohmann::json::parse(r.out);
    EXPECT_EQ(summary.at("k").get<int>(), 8);
    const Tensor g = read_tensor(dir_ / "g.splf");
    EXPECT_EQ(g.dims, (std::vector<std::uint64_t>{1000, 1}));
    const Tensor deg = read_tensor(dir_ / "graph_degrees.splf");
    const Tensor idx = read_tensor(dir_ / "graph_indices.splf");
    const Tensor val = read_tensor(dir_ / "graph_values.splf");
    EXPECT_EQ(std::accumulate(deg.data.begin(), deg.data.end(), 0.0), static_cast<double>(idx.data.size()));
    EXPECT_EQ(idx.data.size(), val.data.size());
    EXPECT_EQ(idx.data.size(), 8000u);

    std::ofstream(cfg) << R"({"k": 8, "colour": "red"})";
    EXPECT_EQ(run(with({"diffuse", "--features", features.string(), "--fg-mask",
                        (dir_ / "scribbles" / "view_0.png").string(), "--config", cfg.string(), "--out",
                        (dir_ / "g2.splf").string()},
                       scene_args()))
                  .code,
              1);
}

TEST_F(CliPipeline, LocalizeFindsTheQueriedCluster)
{
    const fs::path out = dir_ / "localize.json";
    const CliRun r = run(with({"localize", "--clip-features", (dir_ / "clip.splf").string(), "--dino-features",
                            (dir_ / "dino.splf").string(), "--query-emb", (dir_ / "query.splf").string(),
                            "--canon-emb", (dir_ / "canon.splf").string(), "--views", "view_2,view_7", "--out",
                            out.string()},
                           scene_args()));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = read_json(out);
    ASSERT_EQ(j.size(), 2u);
    for (const auto &v : j) {
        const FeatureMap gt = read_mask(dir_ / "gt" / (v.at("camera_id").get<std::string>() + ".png"));
        const int x = v.at("pixel")[0].get<int>();
        const int y = v.at("pixel")[1].get<int>();
        EXPECT_GT(gt.at(y, x), 0.5f) << v.dump();
    }
}

TEST_F(CliPipeline, RelevancyWritesMapsAndPrompts)
{
    const fs::path out = dir_ / "relevancy";
    const CliRun r = run(with({"relevancy", "--clip-features", (dir_ / "clip.splf").string(), "--dino-features",
                            (dir_ / "dino.splf").string(), "--query-emb", (dir_ / "query.splf").string(),
                            "--canon-emb", (dir_ / "canon.splf").string(), "--views", "view_1", "--bandwidths",
                            "0.01", "--out", out.string(), "--prompts-dir", (out / "prompts").string()},
                           scene_args()));
    ASSERT_EQ(r.code, 0) << r.err;
    std::size_t files = 0;
    for (const auto &e : fs::recursive_directory_iterator(out)) {
        files += e.is_regular_file();
    }
    EXPECT_GE(files, 11u) << r.out;
}

TEST(Cli, BenchSweepReportsFit)
{
    const auto dir = testing_util::scratch_dir();
    const CliRun r = run({"bench", "--gaussians-per-cluster", "50", "--views", "2", "--width", "32", "--height", "32",
                       "--focal", "24", "--channels", "1,4", "--repeats", "1", "--warmup", "0", "--out",
                       (dir / "bench.json").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = read_json(dir / "bench.json");
    EXPECT_EQ(j.at("points").size(), 2u);
    EXPECT_TRUE(j.contains("fit"));
}

} // namespace splatlift
