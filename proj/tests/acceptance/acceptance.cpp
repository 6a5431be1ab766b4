// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include "../oracles.hpp"

#include <splatlift/feature_graph.hpp>
#include <splatlift/openvocab.hpp>
#include <splatlift/rasterizer.hpp>
#include <splatlift/rng.hpp>
#include <splatlift/segmentation.hpp>
#include <splatlift/synthetic.hpp>
#include <splatlift/threshold.hpp>
#include <splatlift/uplift.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace splatlift {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

Outcome outcome(bool pass, const std::ostringstream &detail)
{
    return {pass, detail.str()};
}

Outcome uplift_matches_oracle()
{
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (std::uint64_t seed = 1000; seed < 1025; ++seed) {
        const OracleFixture fx = make_random_oracle_scene(seed);
        const auto frames = view_features(fx.scene, fx.features);
        const UpliftResult up = uplift(fx.scene, frames);
        worst = std::max(worst, oracle::max_relative_error(up.features.values, oracle::dense_uplift(fx)));
    }
    const double t = seconds_since(t0);
    std::ostringstream d;
    d << "25 scenes, max rel err " << worst << " (< 1e-5), " << t << " s (< 5 s)";
    return outcome(worst < 1e-5 && t < 5.0, d);
}

Outcome one_gradient_step_equals_uplift()
{
    double worst = 0.0;
    for (std::uint64_t seed = 2000; seed < 2025; ++seed) {
        const OracleFixture fx = make_random_oracle_scene(seed);
        const auto frames = view_features(fx.scene, fx.features);
        const UpliftResult up = uplift(fx.scene, frames);
        const FeatureMatrix f0 = FeatureMatrix::Zero(up.features.count(), up.features.channels());
        const RefineResult r = refine_by_gradient(fx.scene, frames, f0, 1, 1.0);
        worst = std::max(worst, oracle::max_relative_error(r.features.values, up.features.values));
    }
    std::ostringstream d;
    d << "25 scenes, max rel err " << worst << " (< 1e-6)";
    return outcome(worst < 1e-6, d);
}

Outcome rendering_invariants()
{
    double max_sum = 0.0, lin = 0.0, perm = 0.0;
    for (std::uint64_t seed = 3000; seed < 3100; ++seed) {
        const OracleFixture fx = make_random_oracle_scene(seed);
        const auto n = fx.scene.size();
        const FeatureMatrix f = oracle::random_features(n, 3, seed);
        const FeatureMatrix g = oracle::random_features(n, 3, seed + 7919);
        GaussianScene reversed = fx.scene;
        std::reverse(reversed.gaussians.begin(), reversed.gaussians.end());
        const FeatureMatrix fr = f.colwise().reverse();
        for (const Camera &cam : fx.scene.cameras) {
            const WeightFragmentBuffer buf = rasterize_weights(fx.scene, cam);
            for (std::size_t p = 0; p < buf.pixel_count(); ++p) {
                double s = 0.0;
                for (const Fragment &fr_ : buf.pixel(p)) {
                    s += fr_.weight;
                }
                max_sum = std::max(max_sum, s);
            }
            const RenderOutput rf = render(buf, f);
            const RenderOutput rg = render(buf, g);
            const RenderOutput mix = render(buf, FeatureMatrix(1.7 * f - 0.4 * g));
            for (std::size_t k = 0; k < mix.values.size(); ++k) {
                lin = std::max(lin, std::abs(mix.values[k] - (1.7 * rf.values[k] - 0.4 * rg.values[k])));
            }
            const RenderOutput rr = render(reversed, cam, fr);
            for (std::size_t k = 0; k < rf.values.size(); ++k) {
                perm = std::max(perm, static_cast<double>(std::abs(rr.values[k] - rf.values[k])));
            }
        }
    }
    std::ostringstream d;
    d << "100 scenes, max sum w " << max_sum << " (<= 1+1e-6), linearity " << lin << " (< 1e-5), permutation "
      << perm << " (< 1e-6)";
    return outcome(max_sum <= 1.0 + 1e-6 && lin < 1e-5 && perm < 1e-6, d);
}

Outcome diffusion_power_method()
{
    int tested = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 1; tested < 20 && seed < 1000; ++seed) {
        const oracle::GraphInstance in = oracle::random_graph_instance(seed, 30, 4);
        GraphParams p;
        p.k = 10;
        const FeatureGraph g = build_graph(in.centers, in.features, p);
        Eigen::EigenSolver<Eigen::MatrixXd> es(g.adjacency.to_dense());
        const Eigen::VectorXcd ev = es.eigenvalues();
        std::vector<Eigen::Index> order(static_cast<std::size_t>(ev.size()));
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](Eigen::Index a, Eigen::Index b) { return std::abs(ev[a]) > std::abs(ev[b]); });
        const double l1 = std::abs(ev[order[0]]);
        if ((l1 - std::abs(ev[order[1]])) / l1 <= 0.1) {
            continue;
        }
        ++tested;
        Eigen::VectorXd v = es.eigenvectors().col(order[0]).real();
        if (v.sum() < 0.0) {
            v = -v;
        }
        SplitMix64 rng(seed);
        Eigen::VectorXd g0(30);
        for (int i = 0; i < 30; ++i) {
            g0[i] = 0.1 + rng.uniform();
        }
        worst = std::max(worst, oracle::angle(diffuse(g, g0, 100).g, v));
    }
    std::ostringstream d;
    d << tested << " graphs with gap > 0.1, max angle " << worst << " rad (< 1e-3)";
    return outcome(tested == 20 && worst < 1e-3, d);
}

Outcome graph_matches_definition()
{
    double worst = 0.0;
    for (UnaryMode mode : {UnaryMode::none, UnaryMode::cosine_to_mean, UnaryMode::logistic}) {
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            const oracle::GraphInstance in = oracle::random_graph_instance(seed * 31 + 5, 50, 6);
            GraphParams p;
            p.k = 8;
            p.unary_mode = mode;
            p.bandwidth_edge = 0.7;
            p.bandwidth_unary = 1.3;
            std::vector<std::uint32_t> anchors(10);
            std::iota(anchors.begin(), anchors.end(), 0u);
            const FeatureGraph g = build_graph(in.centers, in.features, p, anchors);
            const Eigen::MatrixXd want = oracle::dense_adjacency(in, p, anchors, {});
            worst = std::max(worst, (g.adjacency.to_dense() - want).cwiseAbs().maxCoeff());
        }
    }
    std::ostringstream d;
    d << "3 unary modes x 3 graphs, max abs err " << worst << " (< 1e-10)";
    return outcome(worst < 1e-10, d);
}

Outcome thresholds_exact()
{
    SplitMix64 rng(4242);
    int li_ok = 0, otsu_ok = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const Histogram h = oracle::random_histogram(rng);
        li_ok += threshold_li_levels(h) == oracle::brute_li(h);
        otsu_ok += threshold_otsu_levels(h) == oracle::brute_otsu(h);
    }
    std::ostringstream d;
    d << "Li " << li_ok << "/100, Otsu " << otsu_ok << "/100 equal to exhaustive scan";
    return outcome(li_ok == 100 && otsu_ok == 100, d);
}

Outcome relevancy_closed_forms()
{
    const int dim = 8;
    QueryEmbedding q{"query", Eigen::VectorXd::Unit(dim, 0)};
    CanonicalSet canon;
    for (int i = 0; i < 4; ++i) {
        canon.entries[static_cast<std::size_t>(i)] = {kCanonicalPhrases[static_cast<std::size_t>(i)],
                                                      Eigen::VectorXd::Unit(dim, i + 1)};
    }
    const double e_orth = std::abs(relevancy(Eigen::VectorXd::Unit(dim, 6), q, canon) - 0.5);
    const double e_query = std::abs(relevancy(q.vector, q, canon) - 1.0 / (1.0 + std::exp(-10.0)));
    double e_box = 0.0;
    for (int k : {1, 3, 7, 11}) {
        const FeatureMap m = oracle::random_scalar_map(static_cast<std::uint64_t>(k), 31, 27);
        const FeatureMap got = box_filter(m, k);
        const FeatureMap want = oracle::direct_box(m, k);
        for (std::size_t p = 0; p < m.data.size(); ++p) {
            e_box = std::max(e_box, static_cast<double>(std::abs(got.data[p] - want.data[p])));
        }
    }
    std::ostringstream d;
    d << "orthogonal " << e_orth << " (< 1e-12), on-query " << e_query << " (< 1e-9), box filter " << e_box
      << " (< 1e-6)";
    return outcome(e_orth < 1e-12 && e_query < 1e-9 && e_box < 1e-6, d);
}

Outcome synthetic_segmentation()
{
    const auto t0 = Clock::now();
    const SyntheticScene syn = make_two_cluster_scene(SyntheticSpec{});
    const auto frames = view_features(syn.scene, syn.features);
    const GaussianFeatures features = uplift(syn.scene, frames).features;
    GroundTruth gt;
    for (std::size_t v = 0; v < syn.gt_masks.size(); ++v) {
        gt[syn.scene.cameras[v].id] = syn.gt_masks[v];
    }
    const ForegroundSpec fg{syn.scene.cameras[0].id, scribble_from_mask(syn.gt_masks[0]), ForegroundKind::scribbles};
    const std::vector<Camera> held_out(syn.scene.cameras.begin() + 1, syn.scene.cameras.end());
    const SegmentationConfig cfg;
    const SegmentationResult diff = segment_by_diffusion(syn.scene, features, fg, cfg, held_out, &gt);
    const SegmentationResult geo = segment_geometry_only(syn.scene, fg, cfg, held_out, &gt);
    const double t = seconds_since(t0);

    double min_iou = 1.0;
    int beats = 0;
    for (std::size_t v = 0; v < diff.views.size(); ++v) {
        min_iou = std::min(min_iou, diff.views[v].iou.value());
        beats += diff.views[v].iou.value() >= geo.views[v].iou.value();
    }
    const auto n = static_cast<int>(diff.views.size());
    std::ostringstream d;
    d << n << " held-out views, min IoU " << min_iou << " (>= 0.95), diffusion >= geometry on " << beats << "/" << n
      << ", " << t << " s (< 60 s)";
    return outcome(n == 11 && min_iou >= 0.95 && beats == n && t < 60.0, d);
}

double psnr(const std::vector<float> &a, const std::vector<float> &b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double e = a[i] - b[i];
        s += e * e;
    }
    return 10.0 * std::log10(static_cast<double>(a.size()) / s);
}

Outcome pruning_keeps_quality()
{
    const SyntheticScene syn = make_two_cluster_scene(SyntheticSpec{});
    const auto frames = view_features(syn.scene, syn.features);
    const UpliftResult up = uplift(syn.scene, frames);
    const GaussianScene pruned = prune_by_importance(syn.scene, up.beta, 0.5);
    SplitMix64 rng(5);
    double worst = 0.0;
    for (const Camera &cam : syn.scene.cameras) {
        const std::vector<float> full = render_rgb(syn.scene, cam).values;
        const std::vector<float> kept = render_rgb(pruned, cam).values;
        std::vector<float> photo = full;
        for (float &v : photo) {
            v = std::clamp(static_cast<float>(v + 0.02 * rng.normal()), 0.0f, 1.0f);
        }
        worst = std::max(worst, psnr(full, photo) - psnr(kept, photo));
    }
    std::ostringstream d;
    d << "keep 0.5, worst-view PSNR drop " << worst << " dB (< 3 dB)";
    return outcome(worst < 3.0, d);
}

Outcome uplift_throughput()
{
    SyntheticSpec spec;
    spec.views = 4;
    spec.width = 640;
    spec.height = 480;
    spec.focal = 480.0;
    spec.noise = 0.0;
    const SyntheticScene syn = make_two_cluster_scene(spec);
    const std::vector<int> channels = {1, 8, 40};
    const ChannelSweepReport r = benchmark_channel_sweep(syn.scene, channels, 21, 2);
    const double marginal_ms = 1000.0 * r.slope / spec.views;
    const double at_40 = r.points.back().ms_per_view_per_channel;
    std::ostringstream d;
    d << "R^2 " << r.r_squared << " (> 0.95), marginal " << marginal_ms << " ms/view/channel, " << at_40
      << " ms/view/channel at c=40 (<= 50)";
    return outcome(r.r_squared > 0.95 && marginal_ms <= 50.0 && at_40 <= 50.0, d);
}

} // namespace
} // namespace splatlift

int main()
{
    using namespace splatlift;
    const std::vector<std::pair<const char *, std::function<Outcome()>>> criteria = {
        {"uplift-oracle", uplift_matches_oracle},
        {"gradient-step", one_gradient_step_equals_uplift},
        {"render-invariants", rendering_invariants},
        {"power-method", diffusion_power_method},
        {"graph-fidelity", graph_matches_definition},
        {"thresholds", thresholds_exact},
        {"relevancy", relevancy_closed_forms},
        {"synthetic-segmentation", synthetic_segmentation},
        {"pruning-psnr", pruning_keeps_quality},
        {"uplift-throughput", uplift_throughput},
    };
    int failed = 0;
    for (const auto &[name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception &e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %-24s %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
