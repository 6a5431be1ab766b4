// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#include "splatlift/service.hpp"

#include "splatlift/rasterizer.hpp"
#include "splatlift/uplift.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <iostream>

namespace splatlift {

ScribbleLabel parse_scribble_label(const std::string &name)
{
    if (name == "fg") return ScribbleLabel::fg;
    if (name == "bg") return ScribbleLabel::bg;
    throw ValidationError("unknown scribble label '" + name + "' (expected fg or bg)");
}

std::string to_string(JobState state)
{
    switch (state) {
    case JobState::running:
        return "running";
    case JobState::done:
        return "done";
    case JobState::failed:
        break;
    }
    return "failed";
}

std::vector<std::uint32_t> suppressed_from_background(const GaussianScene &scene,
                                                      const std::map<std::string, FeatureMap> &bg,
                                                      double g0_threshold, const UpliftOptions &opts)
{
    std::vector<ForegroundSpec> specs;
    for (const auto &[view, mask] : bg) {
        specs.push_back({view, mask, ForegroundKind::scribbles});
    }
    if (specs.empty()) {
        return {};
    }
    return init_g0(scene, specs, g0_threshold, opts).anchors;
}

Session::Session(GaussianScene scene, GaussianFeatures features, SegmentationConfig base)
    : scene_(std::move(scene)), features_(std::move(features)), base_(std::move(base))
{
    scene_.validate();
    base_.validate();
    if (static_cast<std::size_t>(features_.count()) != scene_.size()) {
        throw ValidationError("session: " + std::to_string(features_.count()) + " feature rows for " +
                              std::to_string(scene_.size()) + " Gaussians");
    }
    if (features_.channels() > 0 && features_.count() > 0) {
        pca_colors_ = pca_rgb(features_.values);
    }
}

Session::~Session()
{
    if (worker_.joinable()) {
        worker_.join();
    }
}

std::size_t Session::view_index(const std::string &view) const
{
    for (std::size_t v = 0; v < scene_.cameras.size(); ++v) {
        if (scene_.cameras[v].id == view) {
            return v;
        }
    }
    throw NotFoundError("unknown view '" + view + "'");
}

std::string Session::views_json() const
{
    nlohmann::json j = nlohmann::json::array();
    for (const Camera &cam : scene_.cameras) {
        j.push_back({{"id", cam.id}, {"width", cam.width}, {"height", cam.height}});
    }
    return j.dump();
}

Image8 Session::render_layer(const std::string &view, const std::string &layer)
{
    const Camera &cam = scene_.cameras[view_index(view)];
    if (layer == "rgb") {
        const RenderOutput out = render_rgb(scene_, cam);
        return to_image8(out.values, out.width, out.height, 3);
    }
    if (layer == "pca") {
        if (!pca_colors_) {
            throw NotFoundError("no features to visualize");
        }
        const RenderOutput out = render(scene_, cam, FeatureMatrix(*pca_colors_));
        return to_image8(out.values, out.width, out.height, 3);
    }
    if (layer != "score" && layer != "mask") {
        throw ValidationError("unknown layer '" + layer + "' (expected rgb, pca, score or mask)");
    }
    const auto res = latest();
    if (!res) {
        throw NotFoundError("no diffusion result yet");
    }
    for (const ViewSegmentation &v : res->views) {
        if (v.camera_id != view) {
            continue;
        }
        if (layer == "mask") {
            return to_image8(v.mask);
        }
        FeatureMap scaled = v.score;
        const float hi = scaled.data.empty() ? 0.0f : *std::max_element(scaled.data.begin(), scaled.data.end());
        if (hi > 0.0f) {
            for (float &x : scaled.data) {
                x /= hi;
            }
        }
        return to_image8(scaled);
    }
    throw NotFoundError("no result for view '" + view + "'");
}

std::size_t Session::add_scribbles(const std::string &view, const std::vector<PixelCoord> &points,
                                   ScribbleLabel label, int radius)
{
    const Camera &cam = scene_.cameras[view_index(view)];
    if (radius < 0) {
        throw ValidationError("scribble radius must be >= 0");
    }
    for (const PixelCoord &p : points) {
        if (p.x < 0 || p.y < 0 || p.x >= cam.width || p.y >= cam.height) {
            throw ValidationError("scribble point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                                  ") is outside view '" + view + "'");
        }
    }
    std::lock_guard lock(mutex_);
    auto &masks = label == ScribbleLabel::fg ? fg_ : bg_;
    auto it = masks.find(view);
    if (it == masks.end()) {
        FeatureMap m(cam.height, cam.width, 1);
        m.camera_id = view;
        it = masks.emplace(view, std::move(m)).first;
    }
    FeatureMap &mask = it->second;
    for (const PixelCoord &p : points) {
        for (int dy = -radius; dy <= radius; ++dy) {
            for (int dx = -radius; dx <= radius; ++dx) {
                const int x = p.x + dx;
                const int y = p.y + dy;
                if (dx * dx + dy * dy <= radius * radius && x >= 0 && y >= 0 && x < cam.width && y < cam.height) {
                    mask.at(y, x) = 1.0f;
                }
            }
        }
    }
    return static_cast<std::size_t>(std::count(mask.data.begin(), mask.data.end(), 1.0f));
}

std::vector<ForegroundSpec> Session::foreground() const
{
    std::lock_guard lock(mutex_);
    std::vector<ForegroundSpec> out;
    for (const auto &[view, mask] : fg_) {
        out.push_back({view, mask, ForegroundKind::scribbles});
    }
    return out;
}

std::map<std::string, FeatureMap> Session::background() const
{
    std::lock_guard lock(mutex_);
    return bg_;
}

std::uint64_t Session::start_diffusion(const std::string &overrides_json, bool wait)
{
    SegmentationConfig cfg = parse_segmentation_config(overrides_json.empty() ? "{}" : overrides_json, base_);
    std::vector<ForegroundSpec> fg = foreground();
    if (fg.empty()) {
        throw ValidationError("no foreground scribbles yet");
    }
    std::map<std::string, FeatureMap> bg = background();
    std::uint64_t id = 0;
    {
        std::lock_guard lock(mutex_);
        if (running_) {
            throw ConflictError("a diffusion job is already running");
        }
        running_ = true;
        id = next_job_++;
        jobs_[id] = JobStatus{id, JobState::running, {}, 0};
        if (worker_.joinable()) {
            worker_.join();
        }
        if (!wait) {
            // the job blocks on mutex_ before publishing, so starting it here is safe
            worker_ = std::thread(&Session::run_job, this, id, std::move(cfg), std::move(fg), std::move(bg));
            return id;
        }
    }
    run_job(id, std::move(cfg), std::move(fg), std::move(bg));
    return id;
}

void Session::run_job(std::uint64_t id, SegmentationConfig cfg, std::vector<ForegroundSpec> fg,
                      std::map<std::string, FeatureMap> bg)
{
    std::shared_ptr<const SegmentationResult> res;
    std::string error;
    try {
        const auto suppressed = suppressed_from_background(scene_, bg, cfg.g0_threshold, cfg.uplift);
        res = std::make_shared<const SegmentationResult>(
            segment_by_diffusion(scene_, features_, fg, cfg, scene_.cameras, nullptr, suppressed));
    } catch (const std::exception &e) {
        error = e.what();
    }
    {
        std::lock_guard lock(mutex_);
        JobStatus &st = jobs_[id];
        if (res) {
            result_ = std::move(res);
            st.state = JobState::done;
            st.version = ++version_;
        } else {
            st.state = JobState::failed;
            st.error = error;
        }
        running_ = false;
    }
    idle_.notify_all();
}

JobStatus Session::job(std::uint64_t id) const
{
    std::lock_guard lock(mutex_);
    const auto it = jobs_.find(id);
    if (it == jobs_.end()) {
        throw NotFoundError("unknown job " + std::to_string(id));
    }
    return it->second;
}

void Session::wait_idle()
{
    std::unique_lock lock(mutex_);
    idle_.wait(lock, [this] { return !running_; });
}

std::shared_ptr<const SegmentationResult> Session::latest() const
{
    std::lock_guard lock(mutex_);
    return result_;
}

std::uint64_t Session::version() const
{
    std::lock_guard lock(mutex_);
    return version_;
}

ViewResult Session::result(const std::string &view) const
{
    (void)view_index(view);
    std::uint64_t ver = 0;
    std::shared_ptr<const SegmentationResult> res;
    {
        std::lock_guard lock(mutex_);
        res = result_;
        ver = version_;
    }
    if (!res) {
        throw NotFoundError("no diffusion result yet");
    }
    for (const ViewSegmentation &v : res->views) {
        if (v.camera_id != view) {
            continue;
        }
        const auto fg_pixels = std::count_if(v.mask.data.begin(), v.mask.data.end(), [](float x) { return x > 0.5f; });
        nlohmann::json stats = {{"view", view},
                                {"version", ver},
                                {"threshold", v.threshold},
                                {"foreground_pixels", fg_pixels},
                                {"anchors", res->anchors.size()},
                                {"unary_mode", to_string(res->unary)}};
        if (v.iou) {
            stats["iou"] = *v.iou;
        }
        return {to_image8(v.mask), stats.dump()};
    }
    throw NotFoundError("no result for view '" + view + "'");
}

void Session::reset()
{
    std::lock_guard lock(mutex_);
    if (running_) {
        throw ConflictError("cannot reset while a diffusion job is running");
    }
    fg_.clear();
    bg_.clear();
    result_.reset();
}

// ---------------------------------------------------------------------------

struct HttpService::Impl {
    Session &session;
    ServiceOptions opts;
    httplib::Server server;

    Impl(Session &s, ServiceOptions o) : session(s), opts(std::move(o)) {}

    static void send_error(httplib::Response &res, int status, const std::string &msg)
    {
        res.status = status;
        res.set_content(nlohmann::json{{"error", msg}}.dump(), "application/json");
    }

    template <class F>
    auto guarded(F fn)
    {
        return [fn](const httplib::Request &req, httplib::Response &res) {
            try {
                fn(req, res);
            } catch (const NotFoundError &e) {
                send_error(res, 404, e.what());
            } catch (const ConflictError &e) {
                send_error(res, 409, e.what());
            } catch (const ValidationError &e) {
                send_error(res, 400, e.what());
            } catch (const nlohmann::json::exception &e) {
                send_error(res, 400, std::string("malformed JSON: ") + e.what());
            } catch (const std::exception &e) {
                send_error(res, 500, e.what());
            }
        };
    }

    static std::string required_param(const httplib::Request &req, const char *name)
    {
        if (!req.has_param(name)) {
            throw ValidationError(std::string("missing query parameter '") + name + "'");
        }
        return req.get_param_value(name);
    }

    void routes()
    {
        server.set_post_routing_handler([this](const httplib::Request &, httplib::Response &res) {
            res.set_header("Access-Control-Allow-Origin", opts.cors_origin);
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        });
        server.Options(R"(/api/.*)", [](const httplib::Request &, httplib::Response &res) { res.status = 204; });

        server.Get("/api/views", guarded([this](const httplib::Request &, httplib::Response &res) {
                       res.set_content(session.views_json(), "application/json");
                   }));
        server.Get("/api/render", guarded([this](const httplib::Request &req, httplib::Response &res) {
                       const std::string layer = req.has_param("layer") ? req.get_param_value("layer") : "rgb";
                       const Image8 img = session.render_layer(required_param(req, "view"), layer);
                       const auto png = encode_png(img);
                       res.set_content(std::string(png.begin(), png.end()), "image/png");
                   }));
        server.Post("/api/scribbles", guarded([this](const httplib::Request &req, httplib::Response &res) {
                        const auto body = nlohmann::json::parse(req.body);
                        const std::string view = body.at("view").get<std::string>();
                        const ScribbleLabel label = parse_scribble_label(body.value("label", std::string("fg")));
                        std::vector<PixelCoord> points;
                        for (const auto &p : body.at("strokes")) {
                            if (!p.is_array() || p.size() != 2) {
                                throw ValidationError("each stroke point must be [x, y]");
                            }
                            points.push_back({p[0].get<int>(), p[1].get<int>()});
                        }
                        const std::size_t n = session.add_scribbles(view, points, label, body.value("radius", 0));
                        res.set_content(nlohmann::json{{"view", view}, {"pixels", n}}.dump(), "application/json");
                    }));
        server.Post("/api/diffuse", guarded([this](const httplib::Request &req, httplib::Response &res) {
                        const std::uint64_t id = session.start_diffusion(req.body);
                        res.status = 202;
                        res.set_content(nlohmann::json{{"job", id}}.dump(), "application/json");
                    }));
        server.Get("/api/job", guarded([this](const httplib::Request &req, httplib::Response &res) {
                       std::uint64_t id = 0;
                       try {
                           id = std::stoull(required_param(req, "id"));
                       } catch (const std::logic_error &) {
                           throw ValidationError("job id must be a non-negative integer");
                       }
                       const JobStatus st = session.job(id);
                       nlohmann::json j = {{"id", st.id}, {"state", to_string(st.state)}, {"version", st.version}};
                       if (!st.error.empty()) {
                           j["error"] = st.error;
                       }
                       res.set_content(j.dump(), "application/json");
                   }));
        server.Get("/api/result", guarded([this](const httplib::Request &req, httplib::Response &res) {
                       const ViewResult r = session.result(required_param(req, "view"));
                       if (req.has_param("format") && req.get_param_value("format") == "json") {
                           res.set_content(r.stats_json, "application/json");
                           return;
                       }
                       const auto png = encode_png(r.mask);
                       res.set_header("X-Result-Stats", r.stats_json);
                       res.set_content(std::string(png.begin(), png.end()), "image/png");
                   }));
        server.Post("/api/reset", guarded([this](const httplib::Request &, httplib::Response &res) {
                        session.reset();
                        res.set_content(R"({"ok":true})", "application/json");
                    }));
        if (!opts.static_dir.empty() && !server.set_mount_point("/", opts.static_dir.string())) {
            throw IoError("static directory '" + opts.static_dir.string() + "' does not exist");
        }
    }
};

HttpService::HttpService(Session &session, ServiceOptions opts)
    : impl_(std::make_unique<Impl>(session, std::move(opts)))
{
    impl_->routes();
}

HttpService::~HttpService()
{
    stop();
}

int HttpService::bind()
{
    if (impl_->opts.port == 0) {
        const int port = impl_->server.bind_to_any_port(impl_->opts.host);
        if (port < 0) {
            throw IoError("cannot bind to " + impl_->opts.host);
        }
        return port;
    }
    if (!impl_->server.bind_to_port(impl_->opts.host, impl_->opts.port)) {
        throw IoError("cannot bind to " + impl_->opts.host + ":" + std::to_string(impl_->opts.port));
    }
    return impl_->opts.port;
}

void HttpService::listen()
{
    impl_->server.listen_after_bind();
}

void HttpService::stop()
{
    impl_->server.stop();
}

} // namespace splatlift
