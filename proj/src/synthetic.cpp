// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#include "splatlift/synthetic.hpp"

#include "splatlift/error.hpp"
#include "splatlift/rng.hpp"

#include <Eigen/Geometry>
#include <Eigen/QR>
#include <json.hpp>
#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <thread>

namespace splatlift {

namespace {

Eigen::Vector4d random_quaternion(SplitMix64 &rng)
{
    Eigen::Vector4d q;
    do {
        q = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    } while (q.norm() < 1e-6);
    return q.normalized();
}

double log_uniform(SplitMix64 &rng, double lo, double hi)
{
    return std::exp(std::log(lo) + rng.uniform() * (std::log(hi) - std::log(lo)));
}

Eigen::Vector3d in_ball(SplitMix64 &rng, double radius)
{
    Eigen::Vector3d p;
    do {
        p = {2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0};
    } while (p.squaredNorm() > 1.0);
    return radius * p;
}

/// Rotates v by the unit quaternion q = (w, x, y, z) as q v q*.
Eigen::Vector3d quat_rotate(const Eigen::Vector4d &q, const Eigen::Vector3d &v)
{
    const double w = q[0];
    const Eigen::Vector3d u(q[1], q[2], q[3]);
    return 2.0 * u.dot(v) * u + (w * w - u.dot(u)) * v + 2.0 * w * u.cross(v);
}

} // namespace

void SyntheticSpec::validate() const
{
    if (gaussians_per_cluster < 1 || views < 1 || width < 1 || height < 1) {
        throw ValidationError("synthetic: counts and image dims must be positive");
    }
    if (!(cluster_radius > 0.0) || !(scale_min > 0.0) || !(scale_max >= scale_min)) {
        throw ValidationError("synthetic: radius and scales must be positive with scale_min <= scale_max");
    }
    if (!(opacity_min > 0.0) || !(opacity_max < 1.0) || opacity_max < opacity_min) {
        throw ValidationError("synthetic: opacities must lie in (0, 1)");
    }
    if (feature_dim < 3) {
        throw ValidationError("synthetic: feature_dim must be >= 3");
    }
    if (!(noise >= 0.0)) {
        throw ValidationError("synthetic: noise must be non-negative");
    }
    if (!(focal > 0.0) || !(ring_radius > cluster_radius + 3.0 * scale_max + 0.2)) {
        throw ValidationError("synthetic: cameras must be outside the clusters");
    }
    const double min_gap = 2.0 * cluster_radius + 6.0 * scale_max;
    if (cluster_separation <= min_gap) {
        throw ValidationError("synthetic: clusters overlap (separation " + std::to_string(cluster_separation) +
                              " must exceed " + std::to_string(min_gap) + ")");
    }
}

SyntheticScene make_two_cluster_scene(const SyntheticSpec &spec)
{
    spec.validate();
    SplitMix64 rng(spec.seed);
    SyntheticScene out;
    GaussianScene &scene = out.scene;

    const Eigen::Vector3d centers[2] = {{-0.5 * spec.cluster_separation, 0.0, 0.0},
                                        {0.5 * spec.cluster_separation, 0.0, 0.0}};
    const Eigen::Vector3d colors[2] = {{0.8, 0.25, 0.2}, {0.2, 0.35, 0.85}};
    for (int c = 0; c < 2; ++c) {
        for (int k = 0; k < spec.gaussians_per_cluster; ++k) {
            Gaussian g;
            g.mean = centers[c] + in_ball(rng, spec.cluster_radius);
            g.scale = {log_uniform(rng, spec.scale_min, spec.scale_max), log_uniform(rng, spec.scale_min, spec.scale_max),
                       log_uniform(rng, spec.scale_min, spec.scale_max)};
            g.rotation = random_quaternion(rng);
            g.opacity = spec.opacity_min + rng.uniform() * (spec.opacity_max - spec.opacity_min);
            Eigen::Vector3d rgb = colors[c];
            for (int ch = 0; ch < 3; ++ch) {
                rgb[ch] = std::clamp(rgb[ch] + 0.1 * (rng.uniform() - 0.5), 0.0, 1.0);
            }
            set_base_color(g, rgb);
            scene.gaussians.push_back(g);
            out.labels.push_back(c == 0 ? 1 : 0);
        }
    }
    scene.active.assign(scene.gaussians.size(), 1);
    scene.sh_degree = 0;

    for (int v = 0; v < spec.views; ++v) {
        const double theta = 2.0 * std::numbers::pi * v / spec.views;
        const Eigen::Vector3d eye(0.0, spec.ring_radius * std::cos(theta), spec.ring_radius * std::sin(theta));
        scene.cameras.push_back(look_at_camera("view_" + std::to_string(v), spec.width, spec.height, spec.focal, eye,
                                               Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitX()));
    }

    // mutually orthogonal unit feature vectors
    Eigen::MatrixXd basis(spec.feature_dim, 3);
    for (int j = 0; j < 3; ++j) {
        Eigen::VectorXd v(spec.feature_dim);
        for (int k = 0; k < spec.feature_dim; ++k) {
            v[k] = rng.normal();
        }
        for (int i = 0; i < j; ++i) {
            v -= v.dot(basis.col(i)) * basis.col(i);
        }
        basis.col(j) = v.normalized();
    }
    out.feature_a = basis.col(0);
    out.feature_b = basis.col(1);
    out.feature_background = basis.col(2);

    for (const Camera &cam : scene.cameras) {
        const WeightFragmentBuffer buf = rasterize_weights(scene, cam);
        FeatureMap feat(cam.height, cam.width, spec.feature_dim);
        FeatureMap gt(cam.height, cam.width, 1);
        feat.camera_id = cam.id;
        gt.camera_id = cam.id;
        for (std::size_t p = 0; p < buf.pixel_count(); ++p) {
            double wa = 0.0, wb = 0.0;
            bool hit_a = false, hit_b = false;
            for (const Fragment &f : buf.pixel(p)) {
                if (out.labels[f.gaussian_id]) {
                    wa += f.weight;
                    hit_a = true;
                } else {
                    wb += f.weight;
                    hit_b = true;
                }
            }
            const Eigen::VectorXd *base = &out.feature_background;
            if (hit_a && (!hit_b || wa >= wb)) {
                base = &out.feature_a;
            } else if (hit_b) {
                base = &out.feature_b;
            }
            auto px = feat.pixel(p);
            for (int k = 0; k < spec.feature_dim; ++k) {
                px[static_cast<std::size_t>(k)] = static_cast<float>((*base)[k] + spec.noise * rng.normal());
            }
            gt.data[p] = wa > 0.5 ? 1.0f : 0.0f;
        }
        out.features.push_back(std::move(feat));
        out.gt_masks.push_back(std::move(gt));
    }
    return out;
}

std::vector<ViewFeatures> view_features(const GaussianScene &scene, const std::vector<FeatureMap> &maps)
{
    if (maps.size() != scene.cameras.size()) {
        throw ValidationError("view_features: " + std::to_string(maps.size()) + " maps for " +
                              std::to_string(scene.cameras.size()) + " cameras");
    }
    std::vector<ViewFeatures> frames;
    for (std::size_t v = 0; v < maps.size(); ++v) {
        frames.push_back({&scene.cameras[v], &maps[v]});
    }
    return frames;
}

FeatureMap scribble_from_mask(const FeatureMap &mask, int margin)
{
    if (mask.channels != 1) {
        throw ValidationError("scribble_from_mask: mask must have one channel");
    }
    const int h = mask.height;
    const int w = mask.width;
    auto inside = [&](int y, int x) { return y >= 0 && y < h && x >= 0 && x < w && mask.at(y, x) > 0.5f; };
    std::vector<std::uint8_t> core(mask.pixel_count(), 0);
    double sx = 0.0, sy = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            bool ok = true;
            for (int dy = -margin; dy <= margin && ok; ++dy) {
                for (int dx = -margin; dx <= margin && ok; ++dx) {
                    ok = inside(y + dy, x + dx);
                }
            }
            if (ok) {
                core[static_cast<std::size_t>(y) * w + x] = 1;
                sx += x;
                sy += y;
                ++n;
            }
        }
    }
    if (n == 0) {
        throw ValidationError("scribble_from_mask: mask has no pixels " + std::to_string(margin) +
                              " pixels inside its border");
    }
    const double cx = sx / static_cast<double>(n);
    const double cy = sy / static_cast<double>(n);
    // nearest row and column through the centroid that contain core pixels
    int best_row = -1, best_col = -1;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!core[static_cast<std::size_t>(y) * w + x]) {
                continue;
            }
            if (best_row < 0 || std::abs(y - cy) < std::abs(best_row - cy)) {
                best_row = y;
            }
            if (best_col < 0 || std::abs(x - cx) < std::abs(best_col - cx)) {
                best_col = x;
            }
        }
    }
    FeatureMap out(h, w, 1);
    out.camera_id = mask.camera_id;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (core[static_cast<std::size_t>(y) * w + x] && (y == best_row || x == best_col)) {
                out.at(y, x) = 1.0f;
            }
        }
    }
    return out;
}

OracleFixture make_oracle_3g()
{
    OracleFixture fx;
    GaussianScene &scene = fx.scene;
    const double means[3][3] = {{-0.3, 0.1, 0.0}, {0.2, -0.2, 0.3}, {0.05, 0.3, -0.2}};
    const double scales[3][3] = {{0.35, 0.25, 0.3}, {0.4, 0.3, 0.2}, {0.25, 0.45, 0.3}};
    const double opacities[3] = {0.7, 0.5, 0.8};
    const Eigen::Vector4d rotations[3] = {{1.0, 0.0, 0.0, 0.0}, {0.9, 0.1, -0.3, 0.2}, {0.6, 0.5, 0.4, -0.3}};
    for (int i = 0; i < 3; ++i) {
        Gaussian g;
        g.mean = {means[i][0], means[i][1], means[i][2]};
        g.scale = {scales[i][0], scales[i][1], scales[i][2]};
        g.rotation = rotations[i].normalized();
        g.opacity = opacities[i];
        set_base_color(g, Eigen::Vector3d(0.2 + 0.3 * i, 0.5, 0.8 - 0.3 * i));
        scene.gaussians.push_back(g);
    }
    scene.active.assign(3, 1);
    scene.cameras.push_back(look_at_camera("cam0", 4, 4, 5.0, {0.0, 0.0, -3.0}, Eigen::Vector3d::Zero(),
                                           Eigen::Vector3d(0.0, -1.0, 0.0)));
    scene.cameras.push_back(look_at_camera("cam1", 4, 4, 5.0, {2.0, 0.5, -2.5}, Eigen::Vector3d::Zero(),
                                           Eigen::Vector3d(0.0, -1.0, 0.0)));
    for (std::size_t v = 0; v < scene.cameras.size(); ++v) {
        FeatureMap map(4, 4, 2);
        map.camera_id = scene.cameras[v].id;
        for (int y = 0; y < 4; ++y) {
            for (int x = 0; x < 4; ++x) {
                map.at(y, x, 0) = static_cast<float>(0.25 * x + 0.1 * static_cast<double>(v));
                map.at(y, x, 1) = static_cast<float>(1.0 - 0.2 * y);
            }
        }
        fx.features.push_back(std::move(map));
    }
    return fx;
}

OracleFixture make_random_oracle_scene(std::uint64_t seed, int max_gaussians, int max_size, int max_views, int channels)
{
    if (max_gaussians < 1 || max_size < 2 || max_views < 1 || channels < 1) {
        throw ValidationError("make_random_oracle_scene: limits must be positive (max_size >= 2)");
    }
    SplitMix64 rng(seed);
    OracleFixture fx;
    GaussianScene &scene = fx.scene;
    const int n = 1 + static_cast<int>(rng.bounded(static_cast<std::uint64_t>(max_gaussians)));
    for (int i = 0; i < n; ++i) {
        Gaussian g;
        g.mean = {rng.uniform() - 0.5, rng.uniform() - 0.5, rng.uniform() - 0.5};
        g.scale = {log_uniform(rng, 0.05, 0.4), log_uniform(rng, 0.05, 0.4), log_uniform(rng, 0.05, 0.4)};
        g.rotation = random_quaternion(rng);
        g.opacity = 0.1 + 0.85 * rng.uniform();
        set_base_color(g, Eigen::Vector3d(rng.uniform(), rng.uniform(), rng.uniform()));
        scene.gaussians.push_back(g);
    }
    scene.active.assign(scene.gaussians.size(), 1);
    const int views = 1 + static_cast<int>(rng.bounded(static_cast<std::uint64_t>(max_views)));
    const int lo = std::min(4, max_size);
    for (int v = 0; v < views; ++v) {
        const int w = lo + static_cast<int>(rng.bounded(static_cast<std::uint64_t>(max_size - lo + 1)));
        const int h = lo + static_cast<int>(rng.bounded(static_cast<std::uint64_t>(max_size - lo + 1)));
        Eigen::Vector3d dir;
        do {
            dir = {rng.normal(), rng.normal(), rng.normal()};
        } while (dir.norm() < 1e-3);
        dir.normalize();
        Eigen::Vector3d up;
        do {
            up = {rng.normal(), rng.normal(), rng.normal()};
        } while (up.normalized().cross(dir).norm() < 0.2);
        const double focal = 0.5 * std::min(w, h) * 3.0 / 0.8;
        scene.cameras.push_back(
            look_at_camera("r" + std::to_string(v), w, h, focal, 3.0 * dir, Eigen::Vector3d::Zero(), up.normalized()));
        FeatureMap map(h, w, channels);
        map.camera_id = scene.cameras.back().id;
        for (float &x : map.data) {
            x = static_cast<float>(rng.normal());
        }
        fx.features.push_back(std::move(map));
    }
    return fx;
}

DenseOracle dense_oracle(const GaussianScene &scene, const std::vector<Camera> &cameras, const RasterConfig &cfg)
{
    std::size_t rows = 0;
    for (const Camera &cam : cameras) {
        rows += cam.pixel_count();
    }
    const std::size_t n = scene.size();
    if (n * rows > 1'000'000) {
        throw ValidationError("dense_oracle: " + std::to_string(n) + " Gaussians x " + std::to_string(rows) +
                              " pixels exceeds the 10^6 entry cap");
    }
    DenseOracle out;
    out.W = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n));

    struct Splat {
        std::size_t index;
        double depth, mx, my, ca, cb, cc, opacity;
    };
    std::size_t row0 = 0;
    for (const Camera &cam : cameras) {
        const Eigen::Matrix3d R = cam.world_to_camera.block<3, 3>(0, 0);
        const Eigen::Vector3d t = cam.world_to_camera.block<3, 1>(0, 3);
        std::vector<Splat> splats;
        for (std::size_t i = 0; i < n; ++i) {
            if (!scene.active[i]) {
                continue;
            }
            const Gaussian &g = scene.gaussians[i];
            const Eigen::Vector3d pc = R * g.mean + t;
            if (pc.z() <= cfg.near_plane) {
                continue;
            }
            const Eigen::Vector4d q = g.rotation / g.rotation.norm();
            Eigen::Matrix3d sigma = Eigen::Matrix3d::Zero();
            for (int k = 0; k < 3; ++k) {
                const Eigen::Vector3d axis = quat_rotate(q, Eigen::Vector3d::Unit(k));
                sigma += g.scale[k] * g.scale[k] * axis * axis.transpose();
            }
            const Eigen::Matrix3d sigma_cam = R * sigma * R.transpose();
            const double z = pc.z();
            Eigen::Matrix<double, 2, 3> J = Eigen::Matrix<double, 2, 3>::Zero();
            J(0, 0) = cam.fx / z;
            J(0, 2) = -cam.fx * pc.x() / (z * z);
            J(1, 1) = cam.fy / z;
            J(1, 2) = -cam.fy * pc.y() / (z * z);
            const Eigen::Matrix2d cov = J * sigma_cam * J.transpose();
            const double a = cov(0, 0) + cfg.cov2d_blur;
            const double c = cov(1, 1) + cfg.cov2d_blur;
            const double b = 0.5 * (cov(0, 1) + cov(1, 0));
            const double det = a * c - b * b;
            if (det <= 0.0) {
                continue;
            }
            splats.push_back({i, z, cam.fx * pc.x() / z + cam.cx, cam.fy * pc.y() / z + cam.cy, c / det, -b / det,
                              a / det, g.opacity});
        }
        std::sort(splats.begin(), splats.end(), [](const Splat &l, const Splat &r) {
            return l.depth != r.depth ? l.depth < r.depth : l.index < r.index;
        });
        const double limit = cfg.extent_sigmas * cfg.extent_sigmas;
        for (int y = 0; y < cam.height; ++y) {
            for (int x = 0; x < cam.width; ++x) {
                const auto row = static_cast<Eigen::Index>(row0 + static_cast<std::size_t>(y) * cam.width + x);
                double T = 1.0;
                for (const Splat &s : splats) {
                    const double dx = x + 0.5 - s.mx;
                    const double dy = y + 0.5 - s.my;
                    const double power = s.ca * dx * dx + 2.0 * s.cb * dx * dy + s.cc * dy * dy;
                    if (power > limit) {
                        continue;
                    }
                    const double alpha = std::min(cfg.alpha_max, s.opacity * std::exp(-0.5 * power));
                    if (alpha < cfg.alpha_min) {
                        continue;
                    }
                    if (T * (1.0 - alpha) < cfg.transmittance_min) {
                        break;
                    }
                    out.W(row, static_cast<Eigen::Index>(s.index)) = alpha * T;
                    T *= 1.0 - alpha;
                }
            }
        }
        row0 += cam.pixel_count();
    }
    out.d = out.W.colwise().sum().transpose();
    return out;
}

Eigen::MatrixXd stack_features(const std::vector<FeatureMap> &maps)
{
    if (maps.empty()) {
        return {};
    }
    std::size_t rows = 0;
    for (const auto &m : maps) {
        if (m.channels != maps.front().channels) {
            throw ValidationError("stack_features: channel mismatch");
        }
        rows += m.pixel_count();
    }
    Eigen::MatrixXd F(static_cast<Eigen::Index>(rows), maps.front().channels);
    Eigen::Index r = 0;
    for (const auto &m : maps) {
        for (std::size_t p = 0; p < m.pixel_count(); ++p, ++r) {
            for (int k = 0; k < m.channels; ++k) {
                F(r, k) = m.pixel(p)[static_cast<std::size_t>(k)];
            }
        }
    }
    return F;
}

std::string BenchmarkReport::to_json() const
{
    nlohmann::json j;
    j["views"] = views;
    j["width"] = width;
    j["height"] = height;
    j["channels"] = channels;
    j["gaussians"] = gaussians;
    j["threads"] = threads;
    j["repeats"] = repeats;
    j["seconds"] = seconds;
    j["median_seconds"] = median_seconds;
    j["ms_per_view_per_channel"] = ms_per_view_per_channel;
    j["machine"] = {{"hardware_concurrency", std::thread::hardware_concurrency()},
                    {"compiler", __VERSION__},
                    {"omp_max_threads", omp_get_max_threads()}};
    return j.dump(2);
}

namespace {

double time_uplift(const GaussianScene &scene, std::span<const ViewFeatures> frames, const UpliftOptions &opts)
{
    const auto t0 = std::chrono::steady_clock::now();
    (void)uplift(scene, frames, opts);
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

BenchmarkReport make_report(const GaussianScene &scene, std::span<const ViewFeatures> frames,
                            std::vector<double> seconds)
{
    BenchmarkReport rep;
    rep.views = static_cast<int>(frames.size());
    rep.width = frames.front().camera->width;
    rep.height = frames.front().camera->height;
    rep.channels = frames.front().features->channels;
    rep.gaussians = static_cast<int>(scene.active_count());
    rep.threads = omp_get_max_threads();
    rep.repeats = static_cast<int>(seconds.size());
    rep.seconds = std::move(seconds);
    std::vector<double> sorted = rep.seconds;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size() / 2;
    rep.median_seconds = sorted.size() % 2 ? sorted[m] : 0.5 * (sorted[m - 1] + sorted[m]);
    rep.ms_per_view_per_channel = 1e3 * rep.median_seconds / (rep.views * rep.channels);
    return rep;
}

} // namespace

BenchmarkReport benchmark_uplift(const GaussianScene &scene, std::span<const ViewFeatures> frames, int repeats,
                                 int warmup, const UpliftOptions &opts)
{
    if (repeats < 1) {
        throw ValidationError("benchmark_uplift: repeats must be >= 1");
    }
    if (frames.empty()) {
        throw ValidationError("benchmark_uplift: no frames");
    }
    for (int i = 0; i < warmup; ++i) {
        (void)uplift(scene, frames, opts);
    }
    std::vector<double> seconds;
    for (int r = 0; r < repeats; ++r) {
        seconds.push_back(time_uplift(scene, frames, opts));
    }
    return make_report(scene, frames, std::move(seconds));
}

std::string ChannelSweepReport::to_json() const
{
    nlohmann::json j;
    j["points"] = nlohmann::json::array();
    for (const auto &p : points) {
        j["points"].push_back(nlohmann::json::parse(p.to_json()));
    }
    j["fit"] = {{"intercept_seconds", intercept}, {"slope_seconds_per_channel", slope}, {"r_squared", r_squared}};
    return j.dump(2);
}

ChannelSweepReport benchmark_channel_sweep(const GaussianScene &scene, std::span<const int> channels, int repeats,
                                           int warmup, std::uint64_t seed, const UpliftOptions &opts)
{
    if (channels.size() < 2) {
        throw ValidationError("benchmark_channel_sweep: need at least two channel counts");
    }
    if (repeats < 1) {
        throw ValidationError("benchmark_channel_sweep: repeats must be >= 1");
    }
    if (scene.cameras.empty()) {
        throw ValidationError("benchmark_channel_sweep: scene has no cameras");
    }
    SplitMix64 rng(seed);
    std::vector<std::vector<FeatureMap>> maps(channels.size());
    for (std::size_t k = 0; k < channels.size(); ++k) {
        if (channels[k] < 1) {
            throw ValidationError("benchmark_channel_sweep: channel counts must be >= 1");
        }
        for (const Camera &cam : scene.cameras) {
            FeatureMap m(cam.height, cam.width, channels[k]);
            m.camera_id = cam.id;
            for (float &v : m.data) {
                v = static_cast<float>(rng.uniform());
            }
            maps[k].push_back(std::move(m));
        }
    }
    std::vector<std::vector<ViewFeatures>> frames;
    for (const auto &m : maps) {
        frames.push_back(view_features(scene, m));
    }
    // Repeats are interleaved across channel counts so that slow drift in
    // machine load does not land on a single point of the fit.
    for (int i = 0; i < warmup; ++i) {
        for (const auto &f : frames) {
            (void)uplift(scene, f, opts);
        }
    }
    std::vector<std::vector<double>> seconds(channels.size());
    for (int r = 0; r < repeats; ++r) {
        for (std::size_t k = 0; k < frames.size(); ++k) {
            seconds[k].push_back(time_uplift(scene, frames[k], opts));
        }
    }
    ChannelSweepReport rep;
    for (std::size_t k = 0; k < frames.size(); ++k) {
        rep.points.push_back(make_report(scene, frames[k], std::move(seconds[k])));
    }
    const auto n = static_cast<double>(rep.points.size());
    double sx = 0.0, sy = 0.0;
    for (const auto &p : rep.points) {
        sx += p.channels;
        sy += p.median_seconds;
    }
    const double mx = sx / n;
    const double my = sy / n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto &p : rep.points) {
        sxx += (p.channels - mx) * (p.channels - mx);
        sxy += (p.channels - mx) * (p.median_seconds - my);
        syy += (p.median_seconds - my) * (p.median_seconds - my);
    }
    if (sxx == 0.0) {
        throw ValidationError("benchmark_channel_sweep: channel counts must differ");
    }
    rep.slope = sxy / sxx;
    rep.intercept = my - rep.slope * mx;
    rep.r_squared = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
    return rep;
}

OpenVocabFixture make_openvocab_fixture(const SyntheticScene &syn, int dim, double noise, std::uint64_t seed)
{
    if (dim < 5) {
        throw ValidationError("make_openvocab_fixture: dim must be >= 5");
    }
    SplitMix64 rng(seed);
    // query and canonical directions are orthonormal so the planted signal is unambiguous
    Eigen::MatrixXd basis(dim, 5);
    for (Eigen::Index i = 0; i < basis.size(); ++i) {
        basis.data()[i] = rng.normal();
    }
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(basis);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dim, 5);

    OpenVocabFixture fx;
    fx.query = q.col(0);
    for (int i = 0; i < 4; ++i) {
        fx.canonical[static_cast<std::size_t>(i)] = q.col(i + 1);
    }
    const auto n = static_cast<Eigen::Index>(syn.scene.size());
    fx.clip.values.resize(n, dim);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd v = syn.labels[static_cast<std::size_t>(i)] ? fx.query : fx.canonical[0];
        for (int c = 0; c < dim; ++c) {
            v[c] += noise * rng.normal();
        }
        fx.clip.values.row(i) = v.normalized().transpose();
    }
    fx.dino = uplift(syn.scene, view_features(syn.scene, syn.features)).features;
    return fx;
}

} // namespace splatlift
