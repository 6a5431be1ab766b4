// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#include "splatlift/openvocab.hpp"

#include "splatlift/error.hpp"
#include "splatlift/rasterizer.hpp"
#include "splatlift/rng.hpp"
#include "splatlift/uplift.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace splatlift {

namespace {

Eigen::VectorXd unit(const Eigen::VectorXd &v, const std::string &where)
{
    const double n = v.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
        throw ValidationError(where + ": embedding has zero or non-finite norm");
    }
    return v / n;
}

nlohmann::json read_sidecar(const std::filesystem::path &path)
{
    const auto side = sidecar_path(path);
    if (!std::filesystem::exists(side)) {
        return nlohmann::json::object();
    }
    std::ifstream in(side);
    if (!in) {
        throw IoError("cannot open '" + side.string() + "'");
    }
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception &e) {
        throw FormatError("'" + side.string() + "': " + e.what());
    }
}

void write_sidecar(const std::filesystem::path &path, const nlohmann::json &j)
{
    const auto side = sidecar_path(path);
    std::ofstream out(side);
    if (!out) {
        throw IoError("cannot write '" + side.string() + "'");
    }
    out << j.dump(2) << "\n";
}

/// log(1 + exp(x)) without overflow.
double softplus(double x)
{
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

} // namespace

void CanonicalSet::validate() const
{
    const Eigen::Index c = entries[0].vector.size();
    if (c == 0) {
        throw ValidationError("canonical set: empty embeddings");
    }
    for (const auto &e : entries) {
        if (e.vector.size() != c) {
            throw ValidationError("canonical set: embeddings differ in dimension");
        }
        if (std::abs(e.vector.norm() - 1.0) > 1e-5) {
            throw ValidationError("canonical set: embedding '" + e.text + "' is not unit length");
        }
    }
}

void write_embedding(const std::filesystem::path &path, const QueryEmbedding &emb)
{
    Tensor t;
    t.dims = {static_cast<std::uint64_t>(emb.vector.size())};
    t.data.assign(emb.vector.data(), emb.vector.data() + emb.vector.size());
    write_tensor(path, t);
    write_sidecar(path, {{"text", emb.text}});
}

QueryEmbedding read_embedding(const std::filesystem::path &path)
{
    const Tensor t = read_tensor(path);
    if (t.dims.size() != 1 && !(t.dims.size() == 2 && t.dims[0] == 1)) {
        throw FormatError("'" + path.string() + "': query embedding must be a rank-1 vector");
    }
    QueryEmbedding emb;
    emb.vector = Eigen::Map<const Eigen::VectorXf>(t.data.data(), static_cast<Eigen::Index>(t.data.size()))
                     .cast<double>();
    emb.vector = unit(emb.vector, path.string());
    const auto side = read_sidecar(path);
    emb.text = side.value("text", path.stem().string());
    return emb;
}

void write_canonical_set(const std::filesystem::path &path, const CanonicalSet &set)
{
    set.validate();
    Tensor t;
    t.dims = {4, static_cast<std::uint64_t>(set.dim())};
    nlohmann::json texts = nlohmann::json::array();
    for (const auto &e : set.entries) {
        t.data.insert(t.data.end(), e.vector.data(), e.vector.data() + e.vector.size());
        texts.push_back(e.text);
    }
    write_tensor(path, t);
    write_sidecar(path, {{"texts", texts}});
}

CanonicalSet read_canonical_set(const std::filesystem::path &path)
{
    const Tensor t = read_tensor(path);
    if (t.dims.size() != 2 || t.dims[0] != 4) {
        throw FormatError("'" + path.string() + "': canonical set must be a 4 x c matrix");
    }
    const auto side = read_sidecar(path);
    std::vector<std::string> texts(kCanonicalPhrases.begin(), kCanonicalPhrases.end());
    if (side.contains("texts")) {
        texts = side["texts"].get<std::vector<std::string>>();
        if (texts.size() != 4) {
            throw FormatError("'" + path.string() + "': sidecar lists " + std::to_string(texts.size()) +
                              " texts, expected 4");
        }
    }
    const auto c = static_cast<Eigen::Index>(t.dims[1]);
    CanonicalSet set;
    for (std::size_t i = 0; i < 4; ++i) {
        set.entries[i].text = texts[i];
        set.entries[i].vector =
            unit(Eigen::Map<const Eigen::VectorXf>(t.data.data() + i * static_cast<std::size_t>(c), c).cast<double>(),
                 path.string());
    }
    return set;
}

QueryEmbedding mock_embedding(const std::string &text, int dim)
{
    if (dim < 1) {
        throw ValidationError("mock_embedding: dim must be >= 1");
    }
    SplitMix64 rng(fnv1a64(text));
    Eigen::VectorXd v(dim);
    do {
        for (int i = 0; i < dim; ++i) {
            v[i] = rng.normal();
        }
    } while (v.norm() == 0.0);
    return {text, v.normalized()};
}

CanonicalSet mock_canonical_set(int dim)
{
    CanonicalSet set;
    for (std::size_t i = 0; i < 4; ++i) {
        set.entries[i] = mock_embedding(kCanonicalPhrases[i], dim);
    }
    return set;
}

FeatureMap pool_multiscale(std::span<const std::vector<PatchGrid>> scales, int height, int width)
{
    if (scales.empty()) {
        throw ValidationError("pool_multiscale: no scales");
    }
    FeatureMap sum;
    std::vector<std::uint16_t> count(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), 0);
    for (std::size_t s = 0; s < scales.size(); ++s) {
        const AggregateResult agg = sliding_window_aggregate(scales[s], height, width);
        if (s == 0) {
            sum = FeatureMap(height, width, agg.map.channels);
            sum.camera_id = agg.map.camera_id;
        } else if (agg.map.channels != sum.channels) {
            throw ValidationError("pool_multiscale: scale " + std::to_string(s) + " has " +
                                  std::to_string(agg.map.channels) + " channels, scale 0 has " +
                                  std::to_string(sum.channels));
        }
        for (std::size_t p = 0; p < count.size(); ++p) {
            if (agg.coverage[p] == 0) {
                continue;
            }
            ++count[p];
            const auto src = agg.map.pixel(p);
            auto dst = sum.pixel(p);
            for (int ch = 0; ch < sum.channels; ++ch) {
                dst[ch] += src[ch];
            }
        }
    }
    for (std::size_t p = 0; p < count.size(); ++p) {
        if (count[p] > 1) {
            for (float &v : sum.pixel(p)) {
                v /= static_cast<float>(count[p]);
            }
        }
    }
    return sum;
}

double relevancy(const Eigen::Ref<const Eigen::VectorXd> &feat, const QueryEmbedding &q, const CanonicalSet &canon,
                 double temperature)
{
    if (!(temperature > 0.0)) {
        throw ValidationError("relevancy: temperature must be positive");
    }
    if (feat.size() != q.vector.size() || feat.size() != canon.entries[0].vector.size()) {
        throw ValidationError("relevancy: feature has " + std::to_string(feat.size()) + " channels, query has " +
                              std::to_string(q.vector.size()));
    }
    // exp(Ta) / (exp(Ta) + exp(Tc)) = 1 / (1 + exp(T(c - a))), smallest for the largest c
    const double a = feat.dot(q.vector);
    double c = -std::numeric_limits<double>::infinity();
    for (const auto &e : canon.entries) {
        c = std::max(c, feat.dot(e.vector));
    }
    return std::exp(-softplus(temperature * (c - a)));
}

FeatureMap box_filter(const FeatureMap &map, int kernel)
{
    if (kernel < 1 || kernel % 2 == 0) {
        throw ValidationError("box_filter: kernel size must be odd and positive, got " + std::to_string(kernel));
    }
    const int r = kernel / 2;
    const int ph = map.height + 2 * r;
    const int pw = map.width + 2 * r;
    const int c = map.channels;
    // summed-area table over the edge-clamped padded image
    std::vector<double> sat(static_cast<std::size_t>(ph + 1) * (pw + 1) * c, 0.0);
    auto at = [&](int y, int x, int ch) -> double & {
        return sat[(static_cast<std::size_t>(y) * (pw + 1) + x) * c + ch];
    };
    for (int y = 0; y < ph; ++y) {
        const int sy = std::clamp(y - r, 0, map.height - 1);
        for (int x = 0; x < pw; ++x) {
            const int sx = std::clamp(x - r, 0, map.width - 1);
            for (int ch = 0; ch < c; ++ch) {
                at(y + 1, x + 1, ch) = map.at(sy, sx, ch) + at(y, x + 1, ch) + at(y + 1, x, ch) - at(y, x, ch);
            }
        }
    }
    FeatureMap out(map.height, map.width, c);
    out.camera_id = map.camera_id;
    out.meta = map.meta;
    const double area = static_cast<double>(kernel) * kernel;
    for (int y = 0; y < map.height; ++y) {
        for (int x = 0; x < map.width; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                const double s = at(y + kernel, x + kernel, ch) - at(y, x + kernel, ch) - at(y + kernel, x, ch) +
                                 at(y, x, ch);
                out.at(y, x, ch) = static_cast<float>(s / area);
            }
        }
    }
    return out;
}

RelevancyMap relevancy_map(const FeatureMap &rendered, const QueryEmbedding &q, const CanonicalSet &canon,
                           double temperature, int kernel)
{
    if (kernel < 1 || kernel % 2 == 0) {
        throw ValidationError("relevancy_map: kernel size must be odd, got " + std::to_string(kernel));
    }
    canon.validate();
    if (rendered.channels != q.vector.size() || rendered.channels != canon.dim()) {
        throw ValidationError("relevancy_map: rendered features have " + std::to_string(rendered.channels) +
                              " channels, embeddings have " + std::to_string(q.vector.size()));
    }
    FeatureMap raw(rendered.height, rendered.width, 1);
    raw.camera_id = rendered.camera_id;
    const auto n = static_cast<std::ptrdiff_t>(rendered.pixel_count());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t p = 0; p < n; ++p) {
        const auto px = rendered.pixel(static_cast<std::size_t>(p));
        Eigen::VectorXd f = Eigen::Map<const Eigen::VectorXf>(px.data(), rendered.channels).cast<double>();
        const double norm = f.norm();
        if (norm > 0.0) {
            f /= norm;
        }
        raw.data[static_cast<std::size_t>(p)] = static_cast<float>(relevancy(f, q, canon, temperature));
    }
    RelevancyMap out;
    out.scores = box_filter(raw, kernel);
    out.query = q.text;
    return out;
}

void OpenVocabOptions::validate() const
{
    if (bandwidths.empty()) {
        throw ValidationError("select_bandwidth: bandwidth list is empty");
    }
    for (double b : bandwidths) {
        if (!(b > 0.0)) {
            throw ValidationError("select_bandwidth: bandwidths must be positive");
        }
    }
    if (k < 1 || steps < 0) {
        throw ValidationError("select_bandwidth: need k >= 1 and steps >= 0");
    }
    if (!(temperature > 0.0) || kernel < 1 || kernel % 2 == 0) {
        throw ValidationError("select_bandwidth: temperature must be positive and the kernel odd");
    }
}

std::vector<BandwidthSelection> select_bandwidth(const GaussianScene &scene, const GaussianFeatures &clip,
                                                 const GaussianFeatures &dino, const QueryEmbedding &q,
                                                 const CanonicalSet &canon, std::span<const Camera> cameras,
                                                 const OpenVocabOptions &opts)
{
    opts.validate();
    if (static_cast<std::size_t>(clip.count()) != scene.size() ||
        static_cast<std::size_t>(dino.count()) != scene.size()) {
        throw ValidationError("select_bandwidth: feature rows (" + std::to_string(clip.count()) + ", " +
                              std::to_string(dino.count()) + ") do not match " + std::to_string(scene.size()) +
                              " Gaussians");
    }
    const ActiveNodes nodes = active_nodes(scene);
    GraphParams params;
    params.k = opts.k;
    params.median_sample_size = opts.median_sample_size;
    params.seed = opts.seed;
    params.unary_mode = UnaryMode::none;
    const GraphBasis basis = prepare_graph(nodes.centers, nodes.gather(dino.values), params);
    const FeatureMatrix clip_nodes = nodes.gather(clip.values);

    std::vector<WeightFragmentBuffer> buffers;
    buffers.reserve(cameras.size());
    for (const Camera &cam : cameras) {
        buffers.push_back(rasterize_weights(scene, cam, opts.raster));
    }

    std::vector<BandwidthSelection> out(cameras.size());
    for (std::size_t c = 0; c < cameras.size(); ++c) {
        out[c].camera_id = cameras[c].id;
    }
    for (std::size_t b = 0; b < opts.bandwidths.size(); ++b) {
        params.bandwidth_edge = opts.bandwidths[b];
        const FeatureGraph graph = build_graph(basis, params);
        const FeatureMatrix diffused =
            nodes.scatter(diffuse_matrix(graph, clip_nodes, opts.steps), scene.size());
        for (std::size_t c = 0; c < cameras.size(); ++c) {
            RelevancyMap map = relevancy_map(to_feature_map(render(buffers[c], diffused), cameras[c].id), q, canon,
                                             opts.temperature, opts.kernel);
            map.bandwidth = opts.bandwidths[b];
            const double peak = *std::max_element(map.scores.data.begin(), map.scores.data.end());
            BandwidthSelection &sel = out[c];
            if (b == 0 || peak > sel.peaks[sel.best_index]) {
                sel.best_index = b;
                sel.best = std::move(map);
            }
            sel.peaks.push_back(peak);
        }
    }
    return out;
}

PixelCoord localize(const RelevancyMap &map)
{
    const auto &d = map.scores.data;
    if (d.empty()) {
        throw ValidationError("localize: empty relevancy map");
    }
    const auto p = static_cast<int>(std::max_element(d.begin(), d.end()) - d.begin());
    return {p % map.scores.width, p / map.scores.width};
}

TopQPrompts top_q_prompts(const RelevancyMap &map, std::uint64_t seed, int n_prompts, int n_repeats)
{
    const auto &d = map.scores.data;
    if (d.empty() || map.scores.channels != 1) {
        throw ValidationError("top_q_prompts: need a non-empty single-channel map");
    }
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
    TopQPrompts out;
    out.q = 0.4 * mean;
    const auto count = static_cast<std::size_t>(std::ceil(out.q * static_cast<double>(d.size()) - 1e-9));
    if (count == 0) {
        throw ValidationError("top_q_prompts: candidate set is empty (mean relevancy " + std::to_string(mean) + ")");
    }
    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] > d[b]; });
    order.resize(std::min(count, order.size()));
    // candidates keep row-major order so sampling does not depend on the sort
    std::sort(order.begin(), order.end());
    for (std::size_t p : order) {
        out.candidates.push_back({static_cast<int>(p % map.scores.width), static_cast<int>(p / map.scores.width)});
    }
    out.prompts = sample_prompts(out.candidates, map.scores.camera_id, n_prompts, n_repeats, seed);
    return out;
}

} // namespace splatlift
