// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#include "test_util.hpp"

#include <splatlift/cli.hpp>
#include <splatlift/feature_io.hpp>
#include <splatlift/image_io.hpp>
#include <splatlift/service.hpp>
#include <splatlift/synthetic.hpp>

#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <sstream>
#include <thread>

namespace splatlift {

namespace {

namespace fs = std::filesystem;

// The synthetic scene written to disk, so the session and the CLI read the
// exact same inputs.
struct OnDisk {
    fs::path dir;
    GaussianScene scene;
    GaussianFeatures features;
    std::vector<PixelCoord> scribble;
    GroundTruth gt;
};

int cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "splatlift");
    std::vector<const char *> argv;
    for (const auto &a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    EXPECT_EQ(code, 0) << err.str();
    return code;
}

const OnDisk &on_disk()
{
    static const OnDisk d = [] {
        OnDisk o;
        o.dir = fs::path(::testing::TempDir()) / "splatlift" / "service_scene";
        fs::remove_all(o.dir);
        cli({"gen-synthetic", "--out-dir", o.dir.string()});
        cli({"uplift", "--scene", (o.dir / "scene.ply").string(), "--cameras", (o.dir / "cameras.json").string(),
             "--features-dir", (o.dir / "features").string(), "--out", (o.dir / "f3d.splf").string()});
        o.scene = load_scene(o.dir / "scene.ply", o.dir / "cameras.json");
        o.features = read_gaussian_features(o.dir / "f3d.splf");
        const FeatureMap s = read_mask(o.dir / "scribbles" / "view_0.png");
        for (int y = 0; y < s.height; ++y) {
            for (int x = 0; x < s.width; ++x) {
                if (s.at(y, x) > 0.5f) {
                    o.scribble.push_back({x, y});
                }
            }
        }
        for (const Camera &cam : o.scene.cameras) {
            o.gt[cam.id] = read_mask(o.dir / "gt" / (cam.id + ".png"));
        }
        return o;
    }();
    return d;
}

std::unique_ptr<Session> scribbled_session()
{
    const OnDisk &d = on_disk();
    auto s = std::make_unique<Session>(d.scene, d.features);
    s->add_scribbles("view_0", d.scribble, ScribbleLabel::fg);
    return s;
}

double mask_iou(const Image8 &mask, const FeatureMap &gt)
{
    FeatureMap m(mask.height, mask.width, 1);
    for (std::size_t p = 0; p < mask.pixels.size(); ++p) {
        m.data[p] = mask.pixels[p] > 127 ? 1.0f : 0.0f;
    }
    return iou(m, gt);
}

} // namespace

TEST(Session, ListsViewsAndRendersLayers)
{
    const OnDisk &d = on_disk();
    Session s(d.scene, d.features);
    const auto views = nlohmann::json::parse(s.views_json());
    ASSERT_EQ(views.size(), 12u);
    EXPECT_EQ(views[0].at("id").get<std::string>(), "view_0");
    const Image8 rgb = s.render_layer("view_3", "rgb");
    EXPECT_EQ(rgb.channels, 3);
    EXPECT_EQ(rgb.width, 64);
    EXPECT_EQ(s.render_layer("view_3", "pca").channels, 3);
    EXPECT_THROW((void)s.render_layer("view_3", "mask"), NotFoundError);
    EXPECT_THROW((void)s.render_layer("view_99", "rgb"), NotFoundError);
    EXPECT_THROW((void)s.render_layer("view_3", "depth"), ValidationError);
}

TEST(Session, ScribblesAreValidatedAndCounted)
{
    const OnDisk &d = on_disk();
    Session s(d.scene, d.features);
    EXPECT_EQ(s.add_scribbles("view_1", {{10, 10}}, ScribbleLabel::fg, 1), 5u);
    EXPECT_EQ(s.add_scribbles("view_1", {{10, 10}, {30, 30}}, ScribbleLabel::fg), 6u);
    EXPECT_THROW((void)s.add_scribbles("view_1", {{64, 0}}, ScribbleLabel::fg), ValidationError);
    EXPECT_THROW((void)s.add_scribbles("view_1", {{0, 0}}, ScribbleLabel::fg, -1), ValidationError);
    EXPECT_THROW((void)s.add_scribbles("elsewhere", {{0, 0}}, ScribbleLabel::bg), NotFoundError);
    EXPECT_EQ(s.foreground().size(), 1u);
    EXPECT_TRUE(s.background().empty());
    EXPECT_EQ(parse_scribble_label("bg"), ScribbleLabel::bg);
    EXPECT_THROW((void)parse_scribble_label("maybe"), ValidationError);
}

TEST(Session, DiffusionNeedsForegroundScribbles)
{
    const OnDisk &d = on_disk();
    Session s(d.scene, d.features);
    s.add_scribbles("view_2", {{5, 5}}, ScribbleLabel::bg);
    EXPECT_THROW((void)s.start_diffusion("{}", true), ValidationError);
    EXPECT_THROW((void)s.result("view_2"), NotFoundError);
    EXPECT_THROW((void)s.job(7), NotFoundError);
}

TEST(Session, MatchesDirectSegmentationExactly)
{
    const OnDisk &d = on_disk();
    auto s = scribbled_session();
    const std::uint64_t id = s->start_diffusion("", true);
    const JobStatus st = s->job(id);
    ASSERT_EQ(st.state, JobState::done) << st.error;
    EXPECT_EQ(st.version, 1u);

    const std::vector<ForegroundSpec> fg = s->foreground();
    const SegmentationResult direct =
        segment_by_diffusion(d.scene, d.features, fg, SegmentationConfig{}, d.scene.cameras);
    for (const ViewSegmentation &v : direct.views) {
        EXPECT_EQ(s->result(v.camera_id).mask.pixels, to_image8(v.mask).pixels) << v.camera_id;
    }
    EXPECT_EQ(s->latest()->g, direct.g);
}

TEST(Session, ScriptedSessionSegmentsEveryView)
{
    const OnDisk &d = on_disk();
    auto s = scribbled_session();
    (void)s->start_diffusion(R"({"T": 100})");
    s->wait_idle();
    ASSERT_EQ(s->version(), 1u);
    for (const Camera &cam : d.scene.cameras) {
        EXPECT_GE(mask_iou(s->result(cam.id).mask, d.gt.at(cam.id)), 0.95) << cam.id;
    }
    const auto stats = nlohmann::json::parse(s->result("view_4").stats_json);
    EXPECT_EQ(stats.at("version").get<int>(), 1);
    EXPECT_GT(stats.at("foreground_pixels").get<int>(), 0);
}

TEST(Session, BackgroundScribblesSuppressTheirGaussians)
{
    const OnDisk &d = on_disk();
    auto s = scribbled_session();
    // a background stroke across the other cluster in view 0
    std::vector<PixelCoord> stroke;
    const FeatureMap &gt = d.gt.at("view_0");
    for (int y = 0; y < gt.height; ++y) {
        for (int x = 0; x < gt.width; ++x) {
            if (gt.at(y, x) < 0.5f && (x + y) % 7 == 0) {
                stroke.push_back({x, y});
            }
        }
    }
    s->add_scribbles("view_0", stroke, ScribbleLabel::bg);
    const auto suppressed = suppressed_from_background(d.scene, s->background(), 0.5);
    EXPECT_FALSE(suppressed.empty());
    (void)s->start_diffusion("", true);
    const auto res = s->latest();
    for (auto i : suppressed) {
        EXPECT_LT(std::abs(res->g[i]), 1e-100);
    }
}

TEST(Session, ConflictsWhileRunningAndResetClears)
{
    auto s = scribbled_session();
    (void)s->start_diffusion(R"({"T": 400})");
    EXPECT_THROW((void)s->start_diffusion(""), ConflictError);
    EXPECT_THROW(s->reset(), ConflictError);
    s->wait_idle();
    s->reset();
    EXPECT_TRUE(s->foreground().empty());
    EXPECT_EQ(s->latest(), nullptr);
    EXPECT_THROW((void)s->start_diffusion(R"({"bogus": 1})"), ValidationError);
}

TEST(Session, FailedJobKeepsPreviousResult)
{
    auto s = scribbled_session();
    (void)s->start_diffusion("", true);
    const auto before = s->latest();
    // a k larger than the number of Gaussians fails inside the job
    const auto id = s->start_diffusion(R"({"k": 5000})", true);
    const JobStatus st = s->job(id);
    EXPECT_EQ(st.state, JobState::failed);
    EXPECT_FALSE(st.error.empty());
    EXPECT_EQ(s->latest(), before);
    EXPECT_EQ(s->version(), 1u);
}

class Http : public ::testing::Test {
protected:
    void SetUp() override
    {
        session_ = scribbled_session();
        service_ = std::make_unique<HttpService>(*session_, ServiceOptions{"127.0.0.1", 0, {}, "*"});
        port_ = service_->bind();
        ASSERT_GT(port_, 0);
        thread_ = std::thread([this] { service_->listen(); });
        client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
        client_->set_read_timeout(30, 0);
    }

    void TearDown() override
    {
        service_->stop();
        thread_.join();
    }

    JobStatus wait_for(std::uint64_t id)
    {
        for (int i = 0; i < 600; ++i) {
            auto r = client_->Get("/api/job?id=" + std::to_string(id));
            if (r && r->status == 200 && nlohmann::json::parse(r->body).at("state") != "running") {
                break;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
        }
        return session_->job(id);
    }

    std::unique_ptr<Session> session_;
    std::unique_ptr<HttpService> service_;
    std::unique_ptr<httplib::Client> client_;
    std::thread thread_;
    int port_ = 0;
};

TEST_F(Http, ViewsRenderAndCors)
{
    auto r = client_->Get("/api/views");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    EXPECT_EQ(nlohmann::json::parse(r->body).size(), 12u);
    EXPECT_EQ(r->get_header_value("Access-Control-Allow-Origin"), "*");

    r = client_->Get("/api/render?view=view_1&layer=rgb");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    EXPECT_EQ(r->get_header_value("Content-Type"), "image/png");
    const Image8 img = decode_png(std::vector<std::uint8_t>(r->body.begin(), r->body.end()));
    EXPECT_EQ(img.width, 64);

    r = client_->Options("/api/diffuse");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 204);
}

TEST_F(Http, ErrorStatuses)
{
    auto r = client_->Get("/api/render?view=nowhere");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 404);
    EXPECT_TRUE(nlohmann::json::parse(r->body).contains("error"));
    r = client_->Get("/api/render");
    EXPECT_EQ(r->status, 400);
    r = client_->Get("/api/job?id=abc");
    EXPECT_EQ(r->status, 400);
    r = client_->Get("/api/job?id=99");
    EXPECT_EQ(r->status, 404);
    r = client_->Get("/api/result?view=view_0");
    EXPECT_EQ(r->status, 404);
    r = client_->Post("/api/scribbles", R"({"view": "view_0", "strokes": [[200, 3]]})", "application/json");
    EXPECT_EQ(r->status, 400);
    r = client_->Post("/api/scribbles", "not json", "application/json");
    EXPECT_EQ(r->status, 400);
    r = client_->Post("/api/diffuse", R"({"T": 400})", "application/json");
    EXPECT_EQ(r->status, 202);
    r = client_->Post("/api/diffuse", "{}", "application/json");
    EXPECT_EQ(r->status, 409);
    r = client_->Post("/api/reset", "", "application/json");
    EXPECT_EQ(r->status, 409);
    session_->wait_idle();
}

TEST_F(Http, ScribbleDiffuseResultRoundTrip)
{
    const OnDisk &d = on_disk();
    session_->reset();
    nlohmann::json body = {{"view", "view_0"}, {"label", "fg"}, {"strokes", nlohmann::json::array()}};
    for (const auto &p : d.scribble) {
        body["strokes"].push_back({p.x, p.y});
    }
    auto r = client_->Post("/api/scribbles", body.dump(), "application/json");
    ASSERT_TRUE(r);
    ASSERT_EQ(r->status, 200) << r->body;
    EXPECT_EQ(nlohmann::json::parse(r->body).at("pixels").get<std::size_t>(), d.scribble.size());

    r = client_->Post("/api/diffuse", "{}", "application/json");
    ASSERT_EQ(r->status, 202) << r->body;
    const auto id = nlohmann::json::parse(r->body).at("job").get<std::uint64_t>();
    const JobStatus st = wait_for(id);
    ASSERT_EQ(st.state, JobState::done) << st.error;

    // the CLI on the same scribble mask produces the same bytes
    const fs::path out = testing_util::scratch_dir();
    write_mask(out / "view_0.png", session_->foreground().at(0).mask);
    cli({"segment", "--scene", (d.dir / "scene.ply").string(), "--cameras", (d.dir / "cameras.json").string(),
         "--features", (d.dir / "f3d.splf").string(), "--fg-mask", (out / "view_0.png").string(), "--out-dir",
         (out / "seg").string()});
    for (const char *view : {"view_0", "view_5", "view_11"}) {
        r = client_->Get(std::string("/api/result?view=") + view);
        ASSERT_TRUE(r);
        ASSERT_EQ(r->status, 200);
        const auto stats = nlohmann::json::parse(r->get_header_value("X-Result-Stats"));
        EXPECT_EQ(stats.at("view").get<std::string>(), view);
        const Image8 served = decode_png(std::vector<std::uint8_t>(r->body.begin(), r->body.end()));
        const Image8 written = read_png(out / "seg" / (std::string(view) + ".png"));
        EXPECT_EQ(served.pixels, written.pixels) << view;
        EXPECT_GE(mask_iou(served, d.gt.at(view)), 0.95) << view;
    }
    r = client_->Get("/api/result?view=view_2&format=json");
    EXPECT_EQ(r->get_header_value("Content-Type"), "application/json");
    r = client_->Get("/api/render?view=view_2&layer=score");
    EXPECT_EQ(r->status, 200);
}

} // namespace splatlift
