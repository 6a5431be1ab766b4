// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#include "splatlift/cli.hpp"

#include "splatlift/error.hpp"
#include "splatlift/feature_graph.hpp"
#include "splatlift/feature_io.hpp"
#include "splatlift/image_io.hpp"
#include "splatlift/openvocab.hpp"
#include "splatlift/rasterizer.hpp"
#include "splatlift/scene.hpp"
#include "splatlift/segmentation.hpp"
#include "splatlift/service.hpp"
#include "splatlift/synthetic.hpp"
#include "splatlift/uplift.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include <fstream>
#include <iostream>
#include <sstream>

namespace splatlift {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_text(const fs::path &path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path &path, const std::string &text)
{
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write '" + path.string() + "'");
    }
    out << text << "\n";
}

void ensure_dir(const fs::path &dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
    }
}

/// Feature maps of a directory paired with the scene cameras by camera id.
struct LoadedViews {
    std::vector<FeatureMap> maps;
    std::vector<ViewFeatures> frames;
};

LoadedViews load_views(const GaussianScene &scene, const fs::path &dir)
{
    LoadedViews v;
    v.maps = read_feature_dir(dir);
    if (v.maps.empty()) {
        throw ValidationError("no .splf feature maps in '" + dir.string() + "'");
    }
    for (const FeatureMap &m : v.maps) {
        v.frames.push_back({&scene.camera(m.camera_id), &m});
    }
    return v;
}

std::vector<Camera> select_cameras(const GaussianScene &scene, const std::vector<std::string> &ids)
{
    if (ids.empty()) {
        return scene.cameras;
    }
    std::vector<Camera> out;
    for (const auto &id : ids) {
        out.push_back(scene.camera(id));
    }
    return out;
}

SegmentationConfig load_config(const std::string &path)
{
    return path.empty() ? SegmentationConfig{} : parse_segmentation_config(read_text(path));
}

ForegroundSpec load_foreground(const GaussianScene &scene, const std::string &mask_path, const std::string &view,
                               const std::string &kind)
{
    ForegroundSpec fg;
    fg.mask = read_mask(mask_path);
    fg.camera_id = view.empty() ? fg.mask.camera_id : view;
    fg.mask.camera_id = fg.camera_id;
    fg.kind = parse_foreground_kind(kind);
    const Camera &cam = scene.camera(fg.camera_id);
    if (fg.mask.width != cam.width || fg.mask.height != cam.height) {
        throw ValidationError("foreground mask is " + std::to_string(fg.mask.width) + "x" +
                              std::to_string(fg.mask.height) + " but camera '" + cam.id + "' is " +
                              std::to_string(cam.width) + "x" + std::to_string(cam.height));
    }
    fg.validate();
    return fg;
}

std::vector<std::uint32_t> load_suppressed(const GaussianScene &scene, const std::string &bg_mask,
                                           const std::string &bg_view, const SegmentationConfig &cfg)
{
    if (bg_mask.empty()) {
        return {};
    }
    FeatureMap m = read_mask(bg_mask);
    const std::string view = bg_view.empty() ? m.camera_id : bg_view;
    std::map<std::string, FeatureMap> bg;
    bg.emplace(view, std::move(m));
    return suppressed_from_background(scene, bg, cfg.g0_threshold, cfg.uplift);
}

void write_vector(const fs::path &path, const Eigen::VectorXd &v)
{
    GaussianFeatures f;
    f.values = v;
    write_gaussian_features(path, f);
}

void write_csr(const std::string &prefix, const CsrMatrix &m)
{
    // f32 container: row degrees (<= k) instead of running offsets, and
    // node indices, both exact below 2^24
    if (m.n >= (std::size_t{1} << 24)) {
        throw ValidationError("--graph-out supports fewer than 2^24 nodes, got " + std::to_string(m.n));
    }
    Tensor t;
    t.dims = {m.n};
    for (std::size_t i = 0; i < m.n; ++i) {
        t.data.push_back(static_cast<float>(m.offsets[i + 1] - m.offsets[i]));
    }
    write_tensor(prefix + "_degrees.splf", t);
    t.dims = {m.indices.size()};
    t.data.assign(m.indices.begin(), m.indices.end());
    write_tensor(prefix + "_indices.splf", t);
    t.dims = {m.values.size()};
    t.data.assign(m.values.begin(), m.values.end());
    write_tensor(prefix + "_values.splf", t);
}

std::string lower_ext(const fs::path &p)
{
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return e;
}

// ---------------------------------------------------------------------------

struct SceneArgs {
    std::string scene;
    std::string cameras;

    void add(CLI::App *cmd)
    {
        cmd->add_option("--scene", scene, "Gaussian scene (.ply)")->required();
        cmd->add_option("--cameras", cameras, "Camera list (.json)")->required();
    }
    [[nodiscard]] GaussianScene load() const { return load_scene(scene, cameras); }
};

struct UpliftArgs {
    SceneArgs scene;
    std::string features_dir;
    std::string out;
    std::optional<double> keep_fraction;
    std::string pruned_scene;
    bool count_normalize = false;
    int refine_steps = 0;
    double refine_step_size = 1.0;
};

int run_uplift(const UpliftArgs &a, std::ostream &out)
{
    const GaussianScene scene = a.scene.load();
    const LoadedViews views = load_views(scene, a.features_dir);
    UpliftResult res = uplift(scene, views.frames);
    if (a.count_normalize) {
        res.features = uplift_count_normalized(scene, views.frames);
    }
    json summary = {{"gaussians", scene.size()},
                    {"views", views.frames.size()},
                    {"channels", res.features.channels()},
                    {"unseen", res.unseen.size()}};
    if (a.refine_steps > 0) {
        const RefineResult ref =
            refine_by_gradient(scene, views.frames, res.features.values, a.refine_steps, a.refine_step_size);
        res.features.values = ref.features.values;
        summary["loss"] = ref.loss;
    }
    if (a.keep_fraction) {
        if (a.pruned_scene.empty()) {
            throw ValidationError("--keep-fraction needs --pruned-scene");
        }
        const GaussianScene pruned = prune_by_importance(scene, res.beta, *a.keep_fraction);
        save_scene(pruned, a.pruned_scene);
        const std::vector<std::uint32_t> kept = pruned.active_indices();
        GaussianFeatures f;
        f.channel_names = res.features.channel_names;
        f.values.resize(static_cast<Eigen::Index>(kept.size()), res.features.channels());
        for (std::size_t k = 0; k < kept.size(); ++k) {
            f.values.row(static_cast<Eigen::Index>(k)) = res.features.values.row(kept[k]);
        }
        res.features = std::move(f);
        summary["kept"] = kept.size();
    }
    write_gaussian_features(a.out, res.features);
    out << summary.dump(2) << "\n";
    return kExitOk;
}

struct RenderArgs {
    SceneArgs scene;
    std::string view;
    std::string out;
    std::string features;
    std::string layer;
    std::vector<double> background = {0.0, 0.0, 0.0};
};

int run_render(const RenderArgs &a, std::ostream &out)
{
    const GaussianScene scene = a.scene.load();
    const Camera &cam = scene.camera(a.view);
    const bool splf = lower_ext(a.out) == ".splf";
    const std::string layer = !a.layer.empty() ? a.layer : (a.features.empty() ? "rgb" : (splf ? "feature" : "pca"));
    if (a.background.size() != 3) {
        throw ValidationError("--background needs three values r,g,b");
    }
    RenderOutput img;
    if (layer == "rgb") {
        img = render_rgb(scene, cam, {a.background[0], a.background[1], a.background[2]});
    } else if (layer == "pca" || layer == "feature") {
        if (a.features.empty()) {
            throw ValidationError("layer '" + layer + "' needs --features");
        }
        const GaussianFeatures f = read_gaussian_features(a.features);
        if (static_cast<std::size_t>(f.count()) != scene.size()) {
            throw ValidationError("--features has " + std::to_string(f.count()) + " rows for " +
                                  std::to_string(scene.size()) + " Gaussians");
        }
        img = render(scene, cam, layer == "pca" ? FeatureMatrix(pca_rgb(f.values)) : f.values);
    } else {
        throw ValidationError("unknown layer '" + layer + "' (expected rgb, pca or feature)");
    }
    if (splf) {
        write_feature_map(a.out, to_feature_map(img, cam.id));
    } else {
        if (img.channels != 1 && img.channels != 3) {
            throw ValidationError("PNG output needs 1 or 3 channels, the render has " +
                                  std::to_string(img.channels) + "; write .splf instead");
        }
        write_png(a.out, to_image8(img.values, img.width, img.height, img.channels));
    }
    out << json{{"view", cam.id}, {"layer", layer}, {"width", img.width}, {"height", img.height}}.dump() << "\n";
    return kExitOk;
}

struct ForegroundArgs {
    std::string features;
    std::string fg_mask;
    std::string fg_view;
    std::string fg_kind = "scribbles";
    std::string bg_mask;
    std::string bg_view;
    std::string config;

    void add(CLI::App *cmd)
    {
        cmd->add_option("--features", features, "Per-Gaussian features (.splf)")->required();
        cmd->add_option("--fg-mask", fg_mask, "Foreground mask (.png or .pgm)")->required();
        cmd->add_option("--fg-view", fg_view, "Camera of the foreground mask (default: mask file stem)");
        cmd->add_option("--fg-kind", fg_kind, "scribbles or reference_mask");
        cmd->add_option("--bg-mask", bg_mask, "Background scribbles; their Gaussians get no unary support");
        cmd->add_option("--bg-view", bg_view, "Camera of the background mask (default: mask file stem)");
        cmd->add_option("--config", config, "Segmentation config (.json)");
    }
};

struct DiffuseArgs {
    SceneArgs scene;
    ForegroundArgs fg;
    std::string out;
    std::string graph_out;
};

int run_diffuse(const DiffuseArgs &a, std::ostream &out)
{
    const GaussianScene scene = a.scene.load();
    const GaussianFeatures features = read_gaussian_features(a.fg.features);
    const SegmentationConfig cfg = load_config(a.fg.config);
    const ForegroundSpec fg = load_foreground(scene, a.fg.fg_mask, a.fg.fg_view, a.fg.fg_kind);
    const auto suppressed = load_suppressed(scene, a.fg.bg_mask, a.fg.bg_view, cfg);
    const ForegroundDiffusion run = diffuse_foreground(scene, features, std::span(&fg, 1), cfg, suppressed);
    write_vector(a.out, run.g);
    if (!a.graph_out.empty()) {
        write_csr(a.graph_out, run.graph.adjacency);
    }
    json summary = {{"nodes", run.nodes.index.size()}, {"k", run.graph.k},
                    {"s_f", run.graph.s_f},            {"unary_mode", to_string(run.unary)},
                    {"anchors", run.anchors.size()},   {"suppressed", suppressed.size()},
                    {"T", cfg.T},                      {"degenerate", run.degenerate}};
    out << summary.dump(2) << "\n";
    return kExitOk;
}

struct SegmentArgs {
    SceneArgs scene;
    ForegroundArgs fg;
    std::vector<std::string> targets;
    std::string gt_dir;
    std::string out_dir;
    std::string method = "diffusion";
    double bandwidth = 1.0;
    std::string prompts_dir;
};

GroundTruth load_ground_truth(const std::string &dir, std::span<const Camera> targets)
{
    GroundTruth gt;
    for (const Camera &cam : targets) {
        for (const char *ext : {".png", ".pgm"}) {
            const fs::path p = fs::path(dir) / (cam.id + ext);
            if (fs::exists(p)) {
                FeatureMap m = read_mask(p);
                m.camera_id = cam.id;
                gt.emplace(cam.id, std::move(m));
                break;
            }
        }
    }
    return gt;
}

int run_segment(const SegmentArgs &a, std::ostream &out)
{
    const GaussianScene scene = a.scene.load();
    const SegmentationConfig cfg = load_config(a.fg.config);
    const ForegroundSpec fg = load_foreground(scene, a.fg.fg_mask, a.fg.fg_view, a.fg.fg_kind);
    const std::vector<Camera> targets = select_cameras(scene, a.targets);
    const GroundTruth gt = a.gt_dir.empty() ? GroundTruth{} : load_ground_truth(a.gt_dir, targets);
    const GroundTruth *gtp = a.gt_dir.empty() ? nullptr : &gt;

    SegmentationResult res;
    if (a.method == "diffusion") {
        const GaussianFeatures features = read_gaussian_features(a.fg.features);
        const auto suppressed = load_suppressed(scene, a.fg.bg_mask, a.fg.bg_view, cfg);
        res = segment_by_diffusion(scene, features, std::span(&fg, 1), cfg, targets, gtp, suppressed);
    } else if (a.method == "geometry") {
        res = segment_geometry_only(scene, fg, cfg, targets, gtp);
    } else if (a.method == "scoring") {
        const GaussianFeatures features = read_gaussian_features(a.fg.features);
        res = segment_by_scoring(scene, features, fg, cfg, targets, a.bandwidth, gtp);
    } else {
        throw ValidationError("unknown method '" + a.method + "' (expected diffusion, geometry or scoring)");
    }

    ensure_dir(a.out_dir);
    json summary = {{"method", a.method}, {"threshold", to_string(cfg.threshold)}, {"views", json::array()}};
    if (a.method == "diffusion") {
        summary["unary_mode"] = to_string(res.unary);
        summary["anchors"] = res.anchors.size();
    }
    if (res.tuned_threshold) {
        summary["tuned_threshold"] = *res.tuned_threshold;
    }
    for (const ViewSegmentation &v : res.views) {
        write_mask(fs::path(a.out_dir) / (v.camera_id + ".png"), v.mask);
        write_feature_map(fs::path(a.out_dir) / (v.camera_id + "_score.splf"), v.score);
        json jv = {{"camera_id", v.camera_id}, {"threshold", v.threshold}};
        if (v.iou) {
            jv["iou"] = *v.iou;
        }
        summary["views"].push_back(jv);
    }
    if (!a.prompts_dir.empty()) {
        ensure_dir(a.prompts_dir);
        for (const Camera &cam : targets) {
            const auto sets =
                generate_prompts(scene, fg, cam, cfg.tau, cfg.n_prompts, cfg.n_repeats, cfg.seed, cfg.uplift);
            for (const PromptSet &p : sets) {
                write_text(fs::path(a.prompts_dir) / (cam.id + "_" + std::to_string(p.repeat_index) + ".json"),
                           prompt_to_json(p));
            }
        }
    }
    write_text(fs::path(a.out_dir) / "summary.json", summary.dump(2));
    out << summary.dump(2) << "\n";
    return kExitOk;
}

struct VocabArgs {
    SceneArgs scene;
    std::string clip;
    std::string dino;
    std::string query;
    std::string canon;
    std::vector<std::string> views;
    OpenVocabOptions opts;
    std::string out;
    std::string prompts_dir;
};

void add_vocab_options(CLI::App *cmd, VocabArgs &a)
{
    a.scene.add(cmd);
    cmd->add_option("--clip-features", a.clip, "Per-Gaussian CLIP features (.splf)")->required();
    cmd->add_option("--dino-features", a.dino, "Per-Gaussian DINO features (.splf)")->required();
    cmd->add_option("--query-emb", a.query, "Query embedding (.splf + .json {text})")->required();
    cmd->add_option("--canon-emb", a.canon, "Canonical phrase embeddings (4 x c .splf)")->required();
    cmd->add_option("--bandwidths", a.opts.bandwidths, "Candidate edge bandwidths")->delimiter(',');
    cmd->add_option("--views", a.views, "Cameras to evaluate (default: all)")->delimiter(',');
    cmd->add_option("--k", a.opts.k, "Graph neighbors");
    cmd->add_option("--steps", a.opts.steps, "Diffusion steps");
    cmd->add_option("--temperature", a.opts.temperature, "Relevancy temperature");
    cmd->add_option("--kernel", a.opts.kernel, "Box filter size (odd)");
    cmd->add_option("--seed", a.opts.seed, "Seed for the median estimate and prompts");
}

std::vector<BandwidthSelection> run_selection(const VocabArgs &a, const GaussianScene &scene)
{
    const GaussianFeatures clip = read_gaussian_features(a.clip);
    const GaussianFeatures dino = read_gaussian_features(a.dino);
    const QueryEmbedding q = read_embedding(a.query);
    const CanonicalSet canon = read_canonical_set(a.canon);
    const std::vector<Camera> cams = select_cameras(scene, a.views);
    return select_bandwidth(scene, clip, dino, q, canon, cams, a.opts);
}

int run_localize(const VocabArgs &a, std::ostream &out)
{
    const GaussianScene scene = a.scene.load();
    json j = json::array();
    for (const BandwidthSelection &sel : run_selection(a, scene)) {
        const PixelCoord p = localize(sel.best);
        j.push_back({{"camera_id", sel.camera_id},
                     {"pixel", {p.x, p.y}},
                     {"score", sel.best.scores.at(p.y, p.x)},
                     {"bandwidth", sel.best.bandwidth},
                     {"peaks", sel.peaks}});
    }
    if (!a.out.empty()) {
        write_text(a.out, j.dump(2));
    }
    out << j.dump(2) << "\n";
    return kExitOk;
}

int run_relevancy(const VocabArgs &a, std::ostream &out)
{
    const GaussianScene scene = a.scene.load();
    if (a.out.empty()) {
        throw ValidationError("relevancy needs --out <dir>");
    }
    ensure_dir(a.out);
    json j = json::array();
    for (const BandwidthSelection &sel : run_selection(a, scene)) {
        write_mask(fs::path(a.out) / (sel.camera_id + ".png"), sel.best.scores);
        write_feature_map(fs::path(a.out) / (sel.camera_id + ".splf"), sel.best.scores);
        json jv = {{"camera_id", sel.camera_id}, {"bandwidth", sel.best.bandwidth}, {"peaks", sel.peaks}};
        if (!a.prompts_dir.empty()) {
            ensure_dir(a.prompts_dir);
            const TopQPrompts tq = top_q_prompts(sel.best, a.opts.seed);
            jv["q"] = tq.q;
            jv["candidates"] = tq.candidates.size();
            for (const PromptSet &p : tq.prompts) {
                write_text(fs::path(a.prompts_dir) / (sel.camera_id + "_" + std::to_string(p.repeat_index) + ".json"),
                           prompt_to_json(p));
            }
        }
        j.push_back(jv);
    }
    write_text(fs::path(a.out) / "summary.json", j.dump(2));
    out << j.dump(2) << "\n";
    return kExitOk;
}

struct BenchArgs {
    std::string scene;
    std::string cameras;
    std::string features_dir;
    SyntheticSpec spec;
    std::vector<int> channels = {8};
    int repeats = 5;
    int warmup = 1;
    int threads = 0;
    std::string out;
};

int run_bench(BenchArgs a, std::ostream &out)
{
    if (a.threads > 0) {
        omp_set_num_threads(a.threads);
    }
    std::string report;
    if (!a.scene.empty()) {
        if (a.cameras.empty() || a.features_dir.empty()) {
            throw ValidationError("bench on a scene needs --cameras and --features-dir");
        }
        const GaussianScene scene = load_scene(a.scene, a.cameras);
        const LoadedViews views = load_views(scene, a.features_dir);
        report = benchmark_uplift(scene, views.frames, a.repeats, a.warmup).to_json();
    } else {
        a.spec.feature_dim = std::max(a.spec.feature_dim, 3);
        const SyntheticScene syn = make_two_cluster_scene(a.spec);
        if (a.channels.size() == 1) {
            report = benchmark_channel_sweep(syn.scene, std::vector<int>{a.channels[0], a.channels[0] + 1}, a.repeats,
                                             a.warmup)
                         .points.front()
                         .to_json();
        } else {
            report = benchmark_channel_sweep(syn.scene, a.channels, a.repeats, a.warmup).to_json();
        }
    }
    if (!a.out.empty()) {
        write_text(a.out, report);
    }
    out << report << "\n";
    return kExitOk;
}

struct GenArgs {
    std::string out_dir;
    SyntheticSpec spec;
    int scribble_view = 0;
    bool openvocab = false;
    int clip_dim = 16;
};

int run_gen(const GenArgs &a, std::ostream &out)
{
    const SyntheticScene syn = make_two_cluster_scene(a.spec);
    if (a.scribble_view < 0 || a.scribble_view >= a.spec.views) {
        throw ValidationError("--scribble-view must be in [0, views)");
    }
    const fs::path dir = a.out_dir;
    for (const char *sub : {"features", "gt", "scribbles"}) {
        ensure_dir(dir / sub);
    }
    save_scene(syn.scene, dir / "scene.ply");
    save_cameras(syn.scene.cameras, dir / "cameras.json");
    for (std::size_t v = 0; v < syn.features.size(); ++v) {
        const std::string &id = syn.scene.cameras[v].id;
        write_feature_map(dir / "features" / (id + ".splf"), syn.features[v]);
        write_mask(dir / "gt" / (id + ".png"), syn.gt_masks[v]);
    }
    const auto sv = static_cast<std::size_t>(a.scribble_view);
    const std::string sid = syn.scene.cameras[sv].id;
    write_mask(dir / "scribbles" / (sid + ".png"), scribble_from_mask(syn.gt_masks[sv]));
    Eigen::VectorXd labels(static_cast<Eigen::Index>(syn.labels.size()));
    for (std::size_t i = 0; i < syn.labels.size(); ++i) {
        labels[static_cast<Eigen::Index>(i)] = syn.labels[i];
    }
    write_vector(dir / "labels.splf", labels);
    json summary = {{"gaussians", syn.scene.size()}, {"views", syn.scene.cameras.size()}, {"scribble_view", sid}};
    if (a.openvocab) {
        const OpenVocabFixture fx = make_openvocab_fixture(syn, a.clip_dim);
        write_gaussian_features(dir / "clip.splf", fx.clip);
        write_gaussian_features(dir / "dino.splf", fx.dino);
        write_embedding(dir / "query.splf", {"cluster a", fx.query});
        CanonicalSet canon;
        for (std::size_t i = 0; i < 4; ++i) {
            canon.entries[i] = {kCanonicalPhrases[i], fx.canonical[i]};
        }
        write_canonical_set(dir / "canon.splf", canon);
        summary["openvocab"] = true;
    }
    out << summary.dump(2) << "\n";
    return kExitOk;
}

struct ServeArgs {
    SceneArgs scene;
    std::string features;
    std::string config;
    ServiceOptions service;
    std::string static_dir;
};

int run_serve(const ServeArgs &a, std::ostream &out)
{
    Session session(a.scene.load(), read_gaussian_features(a.features), load_config(a.config));
    ServiceOptions opts = a.service;
    opts.static_dir = a.static_dir;
    HttpService http(session, opts);
    const int port = http.bind();
    out << "listening on http://" << opts.host << ":" << port << std::endl;
    http.listen();
    return kExitOk;
}

void add_spec_options(CLI::App *cmd, SyntheticSpec &spec)
{
    cmd->add_option("--gaussians-per-cluster", spec.gaussians_per_cluster);
    cmd->add_option("--views", spec.views);
    cmd->add_option("--width", spec.width);
    cmd->add_option("--height", spec.height);
    cmd->add_option("--focal", spec.focal);
    cmd->add_option("--noise", spec.noise);
    cmd->add_option("--feature-dim", spec.feature_dim);
    cmd->add_option("--seed", spec.seed);
}

std::string usage_for(const CLI::App &app)
{
    for (const CLI::App *sub : app.get_subcommands()) {
        return sub->help();
    }
    return app.help();
}

} // namespace

int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err)
{
    CLI::App app{"Learning-free feature uplifting and graph diffusion on Gaussian Splatting scenes", "splatlift"};
    app.require_subcommand(1);

    UpliftArgs ua;
    auto *cu = app.add_subcommand("uplift", "Uplift 2D feature maps to per-Gaussian features");
    ua.scene.add(cu);
    cu->add_option("--features-dir", ua.features_dir, "Directory of per-view feature maps (.splf)")->required();
    cu->add_option("--out", ua.out, "Output per-Gaussian features (.splf)")->required();
    cu->add_option("--keep-fraction", ua.keep_fraction, "Keep this fraction of Gaussians by importance");
    cu->add_option("--pruned-scene", ua.pruned_scene, "Where to write the pruned scene (.ply)");
    cu->add_flag("--count-normalize", ua.count_normalize, "Normalize by fragment counts instead of weights");
    cu->add_option("--refine-steps", ua.refine_steps, "Preconditioned gradient steps after uplifting");
    cu->add_option("--refine-step-size", ua.refine_step_size, "Step size of the refinement");

    RenderArgs ra;
    auto *cr = app.add_subcommand("render", "Render a view of the scene or of per-Gaussian features");
    ra.scene.add(cr);
    cr->add_option("--view", ra.view, "Camera id")->required();
    cr->add_option("--out", ra.out, "Output image (.png) or feature map (.splf)")->required();
    cr->add_option("--features", ra.features, "Per-Gaussian features (.splf)");
    cr->add_option("--layer", ra.layer, "rgb, pca or feature");
    cr->add_option("--background", ra.background, "Background color r,g,b in [0, 1]")->delimiter(',');

    DiffuseArgs da;
    auto *cd = app.add_subcommand("diffuse", "Diffuse a foreground mask over the kNN feature graph");
    da.scene.add(cd);
    da.fg.add(cd);
    cd->add_option("--out", da.out, "Output diffusion vector per Gaussian (.splf)")->required();
    cd->add_option("--graph-out", da.graph_out, "Prefix for the CSR adjacency (_degrees, _indices, _values .splf)");

    SegmentArgs sa;
    auto *cs = app.add_subcommand("segment", "Segment target views from a reference mask or scribbles");
    sa.scene.add(cs);
    sa.fg.add(cs);
    cs->add_option("--targets", sa.targets, "Target camera ids (default: all)")->delimiter(',');
    cs->add_option("--gt-dir", sa.gt_dir, "Ground-truth masks named <camera>.png for IoU");
    cs->add_option("--out-dir", sa.out_dir, "Output directory")->required();
    cs->add_option("--method", sa.method, "diffusion, geometry or scoring");
    cs->add_option("--bandwidth", sa.bandwidth, "Cosine scorer bandwidth (scoring method)");
    cs->add_option("--prompts-dir", sa.prompts_dir, "Write point prompts for an external mask predictor here");

    VocabArgs la;
    auto *cl = app.add_subcommand("localize", "Locate a text query in each view");
    add_vocab_options(cl, la);
    cl->add_option("--out", la.out, "Output JSON");

    VocabArgs va;
    auto *cv = app.add_subcommand("relevancy", "Write relevancy maps for a text query");
    add_vocab_options(cv, va);
    cv->add_option("--out", va.out, "Output directory")->required();
    cv->add_option("--prompts-dir", va.prompts_dir, "Write top-q point prompts here");

    BenchArgs ba;
    auto *cb = app.add_subcommand("bench", "Time the uplift");
    cb->add_option("--scene", ba.scene, "Gaussian scene (.ply); synthetic scene when omitted");
    cb->add_option("--cameras", ba.cameras, "Camera list (.json)");
    cb->add_option("--features-dir", ba.features_dir, "Directory of per-view feature maps");
    add_spec_options(cb, ba.spec);
    cb->add_option("--channels", ba.channels, "Channel counts for the synthetic sweep")->delimiter(',');
    cb->add_option("--repeats", ba.repeats, "Timed runs");
    cb->add_option("--warmup", ba.warmup, "Untimed runs");
    cb->add_option("--threads", ba.threads, "Worker threads (default: OpenMP setting)");
    cb->add_option("--out", ba.out, "Output JSON report");

    GenArgs ga;
    auto *cg = app.add_subcommand("gen-synthetic", "Write the two-cluster synthetic scene and its inputs");
    cg->add_option("--out-dir", ga.out_dir, "Output directory")->required();
    add_spec_options(cg, ga.spec);
    cg->add_option("--scribble-view", ga.scribble_view, "Index of the view that gets the scribble");
    cg->add_flag("--openvocab", ga.openvocab, "Also write CLIP-like features and query embeddings");
    cg->add_option("--clip-dim", ga.clip_dim, "Dimension of the CLIP-like features");

    ServeArgs sv;
    auto *cse = app.add_subcommand("serve", "Serve the interactive segmentation API");
    sv.scene.add(cse);
    cse->add_option("--features", sv.features, "Per-Gaussian features (.splf)")->required();
    cse->add_option("--config", sv.config, "Base segmentation config (.json)");
    cse->add_option("--host", sv.service.host, "Bind address");
    cse->add_option("--port", sv.service.port, "Port (0 picks a free one)");
    cse->add_option("--static-dir", sv.static_dir, "Serve a built UI from this directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &) {
        out << usage_for(app);
        return kExitOk;
    } catch (const CLI::CallForAllHelp &) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError &e) {
        err << "error: " << e.what() << "\n\n" << usage_for(app);
        return kExitValidation;
    }

    try {
        if (cu->parsed()) return run_uplift(ua, out);
        if (cr->parsed()) return run_render(ra, out);
        if (cd->parsed()) return run_diffuse(da, out);
        if (cs->parsed()) return run_segment(sa, out);
        if (cl->parsed()) return run_localize(la, out);
        if (cv->parsed()) return run_relevancy(va, out);
        if (cb->parsed()) return run_bench(ba, out);
        if (cg->parsed()) return run_gen(ga, out);
        if (cse->parsed()) return run_serve(sv, out);
    } catch (const ValidationError &e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const IoError &e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const fs::filesystem_error &e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const NumericError &e) {
        err << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
    return kExitValidation;
}

} // namespace splatlift
