// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#include "splatlift/feature_io.hpp"

#include "splatlift/error.hpp"
#include "splatlift/rng.hpp"

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace splatlift {

namespace {

static_assert(std::endian::native == std::endian::little, "SPLF I/O assumes a little-endian host");

constexpr char kMagic[4] = {'S', 'P', 'L', 'F'};

void write_json(const std::filesystem::path &path, const nlohmann::json &j)
{
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write '" + path.string() + "'");
    }
    out << j.dump(2) << "\n";
}

nlohmann::json read_json(const std::filesystem::path &path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception &e) {
        throw FormatError("'" + path.string() + "': " + e.what());
    }
}

double sample_clamped(const float *src, int rows, int cols, int channels, double r, double c, int ch)
{
    r = std::clamp(r, 0.0, static_cast<double>(rows - 1));
    c = std::clamp(c, 0.0, static_cast<double>(cols - 1));
    const int r0 = static_cast<int>(std::floor(r));
    const int c0 = static_cast<int>(std::floor(c));
    const int r1 = std::min(r0 + 1, rows - 1);
    const int c1 = std::min(c0 + 1, cols - 1);
    const double fr = r - r0;
    const double fc = c - c0;
    auto at = [&](int rr, int cc) {
        return static_cast<double>(src[(static_cast<std::size_t>(rr) * cols + cc) * channels + ch]);
    };
    return (1.0 - fr) * ((1.0 - fc) * at(r0, c0) + fc * at(r0, c1)) + fr * ((1.0 - fc) * at(r1, c0) + fc * at(r1, c1));
}

} // namespace

std::filesystem::path sidecar_path(const std::filesystem::path &path)
{
    std::filesystem::path p = path;
    p.replace_extension(".json");
    return p;
}

std::size_t splf_header_size(std::size_t rank) { return 4 + 4 + 4 + 8 * rank + 1; }

void write_tensor(const std::filesystem::path &path, const Tensor &tensor)
{
    std::uint64_t expected = 1;
    for (auto d : tensor.dims) {
        expected *= d;
    }
    if (expected != tensor.data.size()) {
        throw ValidationError("write_tensor: dims describe " + std::to_string(expected) + " elements but data holds " +
                              std::to_string(tensor.data.size()));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write '" + path.string() + "'");
    }
    const std::uint32_t version = kSplfVersion;
    const auto rank = static_cast<std::uint32_t>(tensor.dims.size());
    const std::uint8_t dtype = 0;
    out.write(kMagic, 4);
    out.write(reinterpret_cast<const char *>(&version), 4);
    out.write(reinterpret_cast<const char *>(&rank), 4);
    out.write(reinterpret_cast<const char *>(tensor.dims.data()), static_cast<std::streamsize>(8 * rank));
    out.write(reinterpret_cast<const char *>(&dtype), 1);
    out.write(reinterpret_cast<const char *>(tensor.data.data()),
              static_cast<std::streamsize>(tensor.data.size() * sizeof(float)));
    if (!out) {
        throw IoError("failed writing '" + path.string() + "'");
    }
}

Tensor read_tensor(const std::filesystem::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string where = "'" + path.string() + "'";
    std::size_t pos = 0;
    auto need = [&](std::size_t n, const char *what) {
        if (bytes.size() < pos + n) {
            throw FormatError(where + ": truncated " + std::string(what) + " at byte offset " + std::to_string(pos) +
                              " (need " + std::to_string(n) + " bytes, have " + std::to_string(bytes.size() - pos) +
                              ")");
        }
    };
    need(4, "magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError(where + ": bad magic at byte offset 0");
    }
    pos = 4;
    std::uint32_t version = 0, rank = 0;
    need(4, "version");
    std::memcpy(&version, bytes.data() + pos, 4);
    if (version != kSplfVersion) {
        throw FormatError(where + ": unsupported version " + std::to_string(version) + " at byte offset 4");
    }
    pos += 4;
    need(4, "rank");
    std::memcpy(&rank, bytes.data() + pos, 4);
    pos += 4;
    if (rank > 8) {
        throw FormatError(where + ": implausible rank " + std::to_string(rank) + " at byte offset 8");
    }
    Tensor t;
    t.dims.resize(rank);
    need(8 * rank, "dims");
    std::memcpy(t.dims.data(), bytes.data() + pos, 8 * rank);
    pos += 8 * rank;
    need(1, "dtype");
    const auto dtype = static_cast<std::uint8_t>(bytes[pos]);
    if (dtype != 0) {
        throw FormatError(where + ": unsupported dtype " + std::to_string(dtype) + " at byte offset " +
                          std::to_string(pos));
    }
    pos += 1;
    std::uint64_t count = 1;
    for (auto d : t.dims) {
        count *= d;
    }
    const std::size_t payload = count * sizeof(float);
    if (bytes.size() - pos != payload) {
        throw FormatError(where + ": payload at byte offset " + std::to_string(pos) + " has " +
                          std::to_string(bytes.size() - pos) + " bytes, expected " + std::to_string(payload));
    }
    t.data.resize(count);
    std::memcpy(t.data.data(), bytes.data() + pos, payload);
    return t;
}

void write_feature_map(const std::filesystem::path &path, const FeatureMap &map)
{
    Tensor t;
    t.dims = {static_cast<std::uint64_t>(map.height), static_cast<std::uint64_t>(map.width),
              static_cast<std::uint64_t>(map.channels)};
    t.data = map.data;
    write_tensor(path, t);
    nlohmann::json side = {{"camera_id", map.camera_id}, {"meta", map.meta}};
    write_json(sidecar_path(path), side);
}

FeatureMap read_feature_map(const std::filesystem::path &path)
{
    Tensor t = read_tensor(path);
    if (t.dims.size() != 2 && t.dims.size() != 3) {
        throw FormatError("'" + path.string() + "': feature map must have rank 2 or 3, got " +
                          std::to_string(t.dims.size()));
    }
    FeatureMap map;
    map.height = static_cast<int>(t.dims[0]);
    map.width = static_cast<int>(t.dims[1]);
    map.channels = t.dims.size() == 3 ? static_cast<int>(t.dims[2]) : 1;
    if (map.channels < 1) {
        throw FormatError("'" + path.string() + "': feature map has no channels");
    }
    map.data = std::move(t.data);
    map.camera_id = path.stem().string();
    const auto side = sidecar_path(path);
    if (std::filesystem::exists(side)) {
        const auto j = read_json(side);
        if (j.contains("camera_id")) {
            map.camera_id = j["camera_id"].get<std::string>();
        }
        if (j.contains("meta")) {
            map.meta = j["meta"].get<std::map<std::string, std::string>>();
        }
    }
    for (float v : map.data) {
        if (!std::isfinite(v)) {
            throw ValidationError("'" + path.string() + "': feature map contains non-finite values");
        }
    }
    return map;
}

void write_gaussian_features(const std::filesystem::path &path, const GaussianFeatures &features)
{
    Tensor t;
    t.dims = {static_cast<std::uint64_t>(features.values.rows()), static_cast<std::uint64_t>(features.values.cols())};
    t.data.resize(static_cast<std::size_t>(features.values.size()));
    for (Eigen::Index i = 0; i < features.values.size(); ++i) {
        t.data[static_cast<std::size_t>(i)] = static_cast<float>(features.values.data()[i]);
    }
    write_tensor(path, t);
    if (!features.channel_names.empty()) {
        write_json(sidecar_path(path), {{"channel_names", features.channel_names}});
    }
}

GaussianFeatures read_gaussian_features(const std::filesystem::path &path)
{
    Tensor t = read_tensor(path);
    if (t.dims.size() == 1) {
        t.dims.push_back(1);
    }
    if (t.dims.size() != 2) {
        throw FormatError("'" + path.string() + "': Gaussian features must have rank 2, got " +
                          std::to_string(t.dims.size()));
    }
    GaussianFeatures f;
    f.values.resize(static_cast<Eigen::Index>(t.dims[0]), static_cast<Eigen::Index>(t.dims[1]));
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        f.values.data()[i] = t.data[i];
    }
    if (!f.values.allFinite()) {
        throw ValidationError("'" + path.string() + "': features contain non-finite values");
    }
    const auto side = sidecar_path(path);
    if (std::filesystem::exists(side)) {
        const auto j = read_json(side);
        if (j.contains("channel_names")) {
            f.channel_names = j["channel_names"].get<std::vector<std::string>>();
        }
    }
    return f;
}

std::vector<FeatureMap> read_feature_dir(const std::filesystem::path &dir)
{
    if (!std::filesystem::is_directory(dir)) {
        throw IoError("'" + dir.string() + "' is not a directory");
    }
    std::vector<std::filesystem::path> files;
    for (const auto &entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".splf") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<FeatureMap> maps;
    maps.reserve(files.size());
    for (const auto &f : files) {
        maps.push_back(read_feature_map(f));
    }
    return maps;
}

FeatureMap resize_bilinear(const FeatureMap &map, int height, int width)
{
    if (height <= 0 || width <= 0) {
        throw ValidationError("resize_bilinear: target dims must be positive");
    }
    if (map.height == height && map.width == width) {
        return map;
    }
    FeatureMap out(height, width, map.channels);
    out.camera_id = map.camera_id;
    out.meta = map.meta;
    const double sy = static_cast<double>(map.height) / height;
    const double sx = static_cast<double>(map.width) / width;
    for (int y = 0; y < height; ++y) {
        const double r = (y + 0.5) * sy - 0.5;
        for (int x = 0; x < width; ++x) {
            const double c = (x + 0.5) * sx - 0.5;
            for (int ch = 0; ch < map.channels; ++ch) {
                out.at(y, x, ch) =
                    static_cast<float>(sample_clamped(map.data.data(), map.height, map.width, map.channels, r, c, ch));
            }
        }
    }
    return out;
}

PcaResult pca_reduce(const Eigen::MatrixXd &samples, int out_dim, const PcaOptions &opts)
{
    const Eigen::Index n = samples.rows();
    const Eigen::Index c = samples.cols();
    if (out_dim < 1 || out_dim > std::min(n, c)) {
        throw ValidationError("pca_reduce: out_dim " + std::to_string(out_dim) + " must be in [1, min(N, c) = " +
                              std::to_string(std::min(n, c)) + "]");
    }

    std::vector<Eigen::Index> fit_rows;
    if (static_cast<std::size_t>(n) > opts.max_fit_samples) {
        SplitMix64 rng(opts.seed);
        std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            all[static_cast<std::size_t>(i)] = i;
        }
        for (std::size_t i = 0; i < opts.max_fit_samples; ++i) {
            const std::size_t j = i + rng.bounded(all.size() - i);
            std::swap(all[i], all[j]);
        }
        fit_rows.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(opts.max_fit_samples));
        std::sort(fit_rows.begin(), fit_rows.end());
    }

    PcaResult res;
    Eigen::MatrixXd cov;
    if (fit_rows.empty()) {
        res.mean = samples.colwise().mean().transpose();
        const Eigen::MatrixXd centered = samples.rowwise() - res.mean.transpose();
        cov = centered.transpose() * centered / static_cast<double>(n);
    } else {
        Eigen::MatrixXd fit(static_cast<Eigen::Index>(fit_rows.size()), c);
        for (std::size_t i = 0; i < fit_rows.size(); ++i) {
            fit.row(static_cast<Eigen::Index>(i)) = samples.row(fit_rows[i]);
        }
        res.mean = fit.colwise().mean().transpose();
        const Eigen::MatrixXd centered = fit.rowwise() - res.mean.transpose();
        cov = centered.transpose() * centered / static_cast<double>(fit.rows());
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) {
        throw NumericError("pca_reduce: eigendecomposition failed");
    }
    // eigenvalues ascend; take the trailing out_dim in reverse
    res.projection.resize(c, out_dim);
    res.explained_variance.resize(out_dim);
    for (int k = 0; k < out_dim; ++k) {
        const Eigen::Index src = c - 1 - k;
        Eigen::VectorXd v = eig.eigenvectors().col(src);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v[arg] < 0.0) {
            v = -v;
        }
        res.projection.col(k) = v;
        res.explained_variance[k] = std::max(eig.eigenvalues()[src], 0.0);
    }
    res.projected = (samples.rowwise() - res.mean.transpose()) * res.projection;
    return res;
}

Eigen::MatrixXd pca_rgb(const Eigen::MatrixXd &features, const PcaOptions &opts)
{
    Eigen::MatrixXd rgb = Eigen::MatrixXd::Zero(features.rows(), 3);
    const auto dim = static_cast<int>(std::min<Eigen::Index>({3, features.rows(), features.cols()}));
    if (dim < 1) {
        return rgb;
    }
    const PcaResult pca = pca_reduce(features, dim, opts);
    for (int k = 0; k < dim; ++k) {
        const double lo = pca.projected.col(k).minCoeff();
        const double hi = pca.projected.col(k).maxCoeff();
        if (hi > lo) {
            rgb.col(k) = (pca.projected.col(k).array() - lo) / (hi - lo);
        }
    }
    return rgb;
}

FeatureMap pca_apply(const FeatureMap &map, const PcaResult &pca)
{
    if (pca.projection.rows() != map.channels) {
        throw ValidationError("pca_apply: map has " + std::to_string(map.channels) + " channels, PCA expects " +
                              std::to_string(pca.projection.rows()));
    }
    const auto out_dim = static_cast<int>(pca.projection.cols());
    FeatureMap out(map.height, map.width, out_dim);
    out.camera_id = map.camera_id;
    out.meta = map.meta;
    Eigen::VectorXd x(map.channels);
    for (std::size_t p = 0; p < map.pixel_count(); ++p) {
        const auto src = map.pixel(p);
        for (int k = 0; k < map.channels; ++k) {
            x[k] = src[static_cast<std::size_t>(k)] - pca.mean[k];
        }
        const Eigen::VectorXd y = pca.projection.transpose() * x;
        auto dst = out.pixel(p);
        for (int k = 0; k < out_dim; ++k) {
            dst[static_cast<std::size_t>(k)] = static_cast<float>(y[k]);
        }
    }
    return out;
}

void PatchGrid::validate() const
{
    if (rows < 1 || cols < 1 || channels < 1 || patch_size < 1) {
        throw ValidationError("patch grid: dims and patch_size must be positive");
    }
    if (patches.size() != static_cast<std::size_t>(rows) * cols * channels) {
        throw ValidationError("patch grid: payload size does not match rows x cols x channels");
    }
    if (crop.width != cols * patch_size || crop.height != rows * patch_size) {
        throw ValidationError("patch grid: crop " + std::to_string(crop.width) + "x" + std::to_string(crop.height) +
                              " is not covered exactly by " + std::to_string(rows) + "x" + std::to_string(cols) +
                              " patches of size " + std::to_string(patch_size));
    }
}

void write_patch_grid(const std::filesystem::path &path, const PatchGrid &grid)
{
    grid.validate();
    Tensor t;
    t.dims = {static_cast<std::uint64_t>(grid.rows), static_cast<std::uint64_t>(grid.cols),
              static_cast<std::uint64_t>(grid.channels)};
    t.data = grid.patches;
    write_tensor(path, t);
    write_json(sidecar_path(path), {{"camera_id", grid.camera_id},
                                    {"crop_rect", {grid.crop.x, grid.crop.y, grid.crop.width, grid.crop.height}},
                                    {"patch_size", grid.patch_size}});
}

PatchGrid read_patch_grid(const std::filesystem::path &path)
{
    Tensor t = read_tensor(path);
    if (t.dims.size() != 3) {
        throw FormatError("'" + path.string() + "': patch grid must have rank 3");
    }
    const auto side = sidecar_path(path);
    if (!std::filesystem::exists(side)) {
        throw FormatError("'" + path.string() + "': missing sidecar '" + side.string() + "'");
    }
    const auto j = read_json(side);
    PatchGrid g;
    g.rows = static_cast<int>(t.dims[0]);
    g.cols = static_cast<int>(t.dims[1]);
    g.channels = static_cast<int>(t.dims[2]);
    g.patches = std::move(t.data);
    try {
        g.camera_id = j.value("camera_id", path.stem().string());
        const auto rect = j.at("crop_rect").get<std::vector<int>>();
        if (rect.size() != 4) {
            throw FormatError("'" + side.string() + "': crop_rect must hold 4 integers");
        }
        g.crop = {rect[0], rect[1], rect[2], rect[3]};
        g.patch_size = j.at("patch_size").get<int>();
    } catch (const nlohmann::json::exception &e) {
        throw FormatError("'" + side.string() + "': " + e.what());
    }
    g.validate();
    return g;
}

AggregateResult sliding_window_aggregate(std::span<const PatchGrid> grids, int height, int width)
{
    if (grids.empty()) {
        throw ValidationError("sliding_window_aggregate: no patch grids given");
    }
    if (height <= 0 || width <= 0) {
        throw ValidationError("sliding_window_aggregate: image dims must be positive");
    }
    const int channels = grids.front().channels;
    for (const auto &g : grids) {
        g.validate();
        if (g.channels != channels) {
            throw ValidationError("sliding_window_aggregate: channel count mismatch across grids");
        }
        if (g.crop.x < 0 || g.crop.y < 0 || g.crop.x + g.crop.width > width || g.crop.y + g.crop.height > height) {
            throw ValidationError("sliding_window_aggregate: crop rectangle lies outside the image");
        }
    }

    AggregateResult res;
    res.coverage.assign(static_cast<std::size_t>(height) * width, 0);
    std::vector<double> acc(static_cast<std::size_t>(height) * width * channels, 0.0);
    for (const auto &g : grids) {
        for (int y = g.crop.y; y < g.crop.y + g.crop.height; ++y) {
            const double r = (y - g.crop.y + 0.5) / g.patch_size - 0.5;
            for (int x = g.crop.x; x < g.crop.x + g.crop.width; ++x) {
                const double c = (x - g.crop.x + 0.5) / g.patch_size - 0.5;
                const std::size_t p = static_cast<std::size_t>(y) * width + x;
                for (int ch = 0; ch < channels; ++ch) {
                    acc[p * channels + ch] += sample_clamped(g.patches.data(), g.rows, g.cols, channels, r, c, ch);
                }
                ++res.coverage[p];
            }
        }
    }
    res.map = FeatureMap(height, width, channels);
    res.map.camera_id = grids.front().camera_id;
    for (std::size_t p = 0; p < res.coverage.size(); ++p) {
        if (res.coverage[p] == 0) {
            ++res.uncovered;
            continue;
        }
        for (int ch = 0; ch < channels; ++ch) {
            res.map.data[p * channels + ch] = static_cast<float>(acc[p * channels + ch] / res.coverage[p]);
        }
    }
    return res;
}

} // namespace splatlift
