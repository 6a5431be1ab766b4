// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatlift/error.hpp"
#include "splatlift/image_io.hpp"
#include "splatlift/scene.hpp"
#include "splatlift/segmentation.hpp"
#include "splatlift/types.hpp"

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace splatlift {

/// Unknown view, job or layer content; mapped to HTTP 404.
class NotFoundError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// A mutation while a diffusion job is still running; mapped to HTTP 409.
class ConflictError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

enum class ScribbleLabel { fg, bg };

[[nodiscard]] ScribbleLabel parse_scribble_label(const std::string &name);

enum class JobState { running, done, failed };

[[nodiscard]] std::string to_string(JobState state);

struct JobStatus {
    std::uint64_t id = 0;
    JobState state = JobState::running;
    std::string error;
    /// Result version produced by the job (0 until done).
    std::uint64_t version = 0;
};

/// Per-view output of the last finished diffusion.
struct ViewResult {
    Image8 mask;
    std::string stats_json;
};

/// State behind the interactive service: one scene, its per-Gaussian
/// features, scribble masks per view and the latest diffusion result.
/// Readers never wait for a running job; mutations are serialized.
class Session {
public:
    Session(GaussianScene scene, GaussianFeatures features, SegmentationConfig base = {});
    ~Session();
    Session(const Session &) = delete;
    Session &operator=(const Session &) = delete;

    [[nodiscard]] const GaussianScene &scene() const { return scene_; }
    [[nodiscard]] std::string views_json() const;

    /// layer: rgb, pca, score or mask.
    [[nodiscard]] Image8 render_layer(const std::string &view, const std::string &layer);

    /// Marks the pixels within `radius` of each point. Returns the number of
    /// scribbled pixels on that view and label afterwards.
    std::size_t add_scribbles(const std::string &view, const std::vector<PixelCoord> &points, ScribbleLabel label,
                              int radius = 0);

    /// Starts a diffusion with `overrides_json` applied on top of the base
    /// config. Runs on a worker thread unless `wait` is set.
    std::uint64_t start_diffusion(const std::string &overrides_json, bool wait = false);
    [[nodiscard]] JobStatus job(std::uint64_t id) const;
    /// Blocks until no job is running.
    void wait_idle();

    [[nodiscard]] ViewResult result(const std::string &view) const;
    [[nodiscard]] std::shared_ptr<const SegmentationResult> latest() const;
    [[nodiscard]] std::uint64_t version() const;

    void reset();

    /// Scribble masks (foreground / background) as the CLI reads them.
    [[nodiscard]] std::vector<ForegroundSpec> foreground() const;
    [[nodiscard]] std::map<std::string, FeatureMap> background() const;

private:
    void run_job(std::uint64_t id, SegmentationConfig cfg, std::vector<ForegroundSpec> fg,
                 std::map<std::string, FeatureMap> bg);
    [[nodiscard]] std::size_t view_index(const std::string &view) const;

    GaussianScene scene_;
    GaussianFeatures features_;
    SegmentationConfig base_;
    std::optional<Eigen::MatrixXd> pca_colors_;

    mutable std::mutex mutex_;
    std::condition_variable idle_;
    std::map<std::string, FeatureMap> fg_;
    std::map<std::string, FeatureMap> bg_;
    std::map<std::uint64_t, JobStatus> jobs_;
    std::uint64_t next_job_ = 1;
    bool running_ = false;
    std::shared_ptr<const SegmentationResult> result_;
    std::uint64_t version_ = 0;
    std::thread worker_;
};

/// Background scribbles as suppressed nodes: Gaussians whose mean-normalized
/// uplifted background weight reaches g0_threshold.
[[nodiscard]] std::vector<std::uint32_t> suppressed_from_background(const GaussianScene &scene,
                                                                    const std::map<std::string, FeatureMap> &bg,
                                                                    double g0_threshold,
                                                                    const UpliftOptions &opts = {});

struct ServiceOptions {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path static_dir;
    std::string cors_origin = "*";
};

/// HTTP front end of a Session.
class HttpService {
public:
    HttpService(Session &session, ServiceOptions opts);
    ~HttpService();
    HttpService(const HttpService &) = delete;
    HttpService &operator=(const HttpService &) = delete;

    /// Binds the socket; port 0 picks a free port. Returns the bound port.
    int bind();
    /// Serves until stop() is called.
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace splatlift
