// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#include "splatlift/scene.hpp"

#include "splatlift/error.hpp"

#include <Eigen/Geometry>
#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace splatlift {

namespace {

static_assert(std::endian::native == std::endian::little, "PLY I/O assumes a little-endian host");

constexpr double kShC0 = 0.28209479177387814;
constexpr double kShC1 = 0.4886025119029199;
constexpr double kShC2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792,
                            0.5462742152960396};
constexpr double kShC3[] = {-0.5900435899266435, 2.890611442640554,   -0.4570457994644658, 0.3731763325901154,
                            -0.4570457994644658, 1.445305721320277,   -0.5900435899266435};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p)
{
    p = std::clamp(p, 1e-12, 1.0 - 1e-12);
    return std::log(p / (1.0 - p));
}

int coeffs_for_degree(int degree) { return (degree + 1) * (degree + 1); }

struct PlyProperty {
    std::string name;
    std::string type;
    std::size_t offset = 0;
    std::size_t size = 0;
};

std::size_t ply_type_size(const std::string &type)
{
    static const std::map<std::string, std::size_t> sizes = {
        {"char", 1},   {"uchar", 1},  {"int8", 1},   {"uint8", 1},    {"short", 2},   {"ushort", 2},
        {"int16", 2},  {"uint16", 2}, {"int", 4},    {"uint", 4},     {"int32", 4},   {"uint32", 4},
        {"float", 4},  {"float32", 4}, {"double", 8}, {"float64", 8},
    };
    auto it = sizes.find(type);
    if (it == sizes.end()) {
        throw FormatError("PLY: unsupported property type '" + type + "'");
    }
    return it->second;
}

double read_ply_value(const char *ptr, const std::string &type)
{
    auto load = [ptr]<typename T>(T) {
        T v;
        std::memcpy(&v, ptr, sizeof(T));
        return static_cast<double>(v);
    };
    if (type == "float" || type == "float32") return load(float{});
    if (type == "double" || type == "float64") return load(double{});
    if (type == "uchar" || type == "uint8") return load(std::uint8_t{});
    if (type == "char" || type == "int8") return load(std::int8_t{});
    if (type == "short" || type == "int16") return load(std::int16_t{});
    if (type == "ushort" || type == "uint16") return load(std::uint16_t{});
    if (type == "int" || type == "int32") return load(std::int32_t{});
    return load(std::uint32_t{});
}

Camera camera_from_json(const nlohmann::json &j, std::size_t index)
{
    try {
        Camera cam;
        cam.id = j.at("id").get<std::string>();
        cam.width = j.at("width").get<int>();
        cam.height = j.at("height").get<int>();
        cam.fx = j.at("fx").get<double>();
        cam.fy = j.at("fy").get<double>();
        cam.cx = j.at("cx").get<double>();
        cam.cy = j.at("cy").get<double>();
        const auto &m = j.at("world_to_camera");
        if (!m.is_array() || m.size() != 16) {
            throw FormatError("camera " + std::to_string(index) + ": world_to_camera must hold 16 numbers");
        }
        for (int r = 0; r < 4; ++r) {
            for (int c = 0; c < 4; ++c) {
                cam.world_to_camera(r, c) = m[static_cast<std::size_t>(r * 4 + c)].get<double>();
            }
        }
        return cam;
    } catch (const nlohmann::json::exception &e) {
        throw FormatError("camera " + std::to_string(index) + ": " + e.what());
    }
}

nlohmann::json camera_to_json(const Camera &cam)
{
    nlohmann::json m = nlohmann::json::array();
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            m.push_back(cam.world_to_camera(r, c));
        }
    }
    return {{"id", cam.id}, {"width", cam.width}, {"height", cam.height}, {"fx", cam.fx},
            {"fy", cam.fy}, {"cx", cam.cx},       {"cy", cam.cy},         {"world_to_camera", m}};
}

} // namespace

void Camera::validate() const
{
    if (width <= 0 || height <= 0) {
        throw ValidationError("camera '" + id + "': width and height must be positive");
    }
    if (!(fx > 0.0) || !(fy > 0.0)) {
        throw ValidationError("camera '" + id + "': focal lengths must be positive");
    }
    const Eigen::Matrix3d r = rotation();
    const double ortho_err = (r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (!(ortho_err <= 1e-5) || std::abs(r.determinant() - 1.0) > 1e-5) {
        throw ValidationError("camera '" + id + "': rotation block is not a proper rotation");
    }
}

std::size_t GaussianScene::active_count() const
{
    return static_cast<std::size_t>(std::count_if(active.begin(), active.end(), [](auto a) { return a != 0; }));
}

std::vector<std::uint32_t> GaussianScene::active_indices() const
{
    std::vector<std::uint32_t> out;
    out.reserve(active.size());
    for (std::size_t i = 0; i < active.size(); ++i) {
        if (active[i]) {
            out.push_back(static_cast<std::uint32_t>(i));
        }
    }
    return out;
}

const Camera &GaussianScene::camera(const std::string &id) const
{
    for (const auto &cam : cameras) {
        if (cam.id == id) {
            return cam;
        }
    }
    throw ValidationError("unknown camera id '" + id + "'");
}

void GaussianScene::validate() const
{
    if (active.size() != gaussians.size()) {
        throw ValidationError("active mask length " + std::to_string(active.size()) + " != Gaussian count " +
                              std::to_string(gaussians.size()));
    }
    std::set<std::string> ids;
    for (const auto &cam : cameras) {
        if (!ids.insert(cam.id).second) {
            throw ValidationError("duplicate camera id '" + cam.id + "'");
        }
        cam.validate();
    }
}

Eigen::Matrix3d rotation_from_quaternion(const Eigen::Vector4d &q)
{
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Matrix3d r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y), //
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),   //
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

Eigen::Matrix3d covariance_of(const Gaussian &g)
{
    const Eigen::Matrix3d m = rotation_from_quaternion(g.rotation) * g.scale.asDiagonal();
    Eigen::Matrix3d cov = m * m.transpose();
    // exact symmetry; the product above is symmetric only up to rounding
    cov = 0.5 * (cov + cov.transpose()).eval();
    return cov;
}

Eigen::Vector3d evaluate_sh(const Gaussian &g, int degree, const Eigen::Vector3d &direction)
{
    auto coeff = [&g](int k) {
        return Eigen::Vector3d(g.sh[static_cast<std::size_t>(k * 3)], g.sh[static_cast<std::size_t>(k * 3 + 1)],
                               g.sh[static_cast<std::size_t>(k * 3 + 2)]);
    };
    Eigen::Vector3d result = kShC0 * coeff(0);
    if (degree > 0) {
        const Eigen::Vector3d d = direction.normalized();
        const double x = d.x(), y = d.y(), z = d.z();
        result += -kShC1 * y * coeff(1) + kShC1 * z * coeff(2) - kShC1 * x * coeff(3);
        if (degree > 1) {
            const double xx = x * x, yy = y * y, zz = z * z;
            const double xy = x * y, yz = y * z, xz = x * z;
            result += kShC2[0] * xy * coeff(4) + kShC2[1] * yz * coeff(5) + kShC2[2] * (2.0 * zz - xx - yy) * coeff(6) +
                      kShC2[3] * xz * coeff(7) + kShC2[4] * (xx - yy) * coeff(8);
            if (degree > 2) {
                result += kShC3[0] * y * (3.0 * xx - yy) * coeff(9) + kShC3[1] * xy * z * coeff(10) +
                          kShC3[2] * y * (4.0 * zz - xx - yy) * coeff(11) +
                          kShC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy) * coeff(12) +
                          kShC3[4] * x * (4.0 * zz - xx - yy) * coeff(13) + kShC3[5] * z * (xx - yy) * coeff(14) +
                          kShC3[6] * x * (xx - 3.0 * yy) * coeff(15);
            }
        }
    }
    result.array() += 0.5;
    return result.cwiseMax(0.0);
}

void set_base_color(Gaussian &g, const Eigen::Vector3d &rgb)
{
    for (int c = 0; c < 3; ++c) {
        g.sh[static_cast<std::size_t>(c)] = static_cast<float>((rgb[c] - 0.5) / kShC0);
    }
}

GaussianScene load_ply(const std::filesystem::path &ply_path)
{
    std::ifstream in(ply_path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open PLY file '" + ply_path.string() + "'");
    }
    std::string line;
    std::getline(in, line);
    if (line != "ply") {
        throw FormatError("'" + ply_path.string() + "' is not a PLY file (missing 'ply' magic)");
    }

    std::vector<PlyProperty> props;
    std::size_t vertex_count = 0;
    bool in_vertex = false;
    bool seen_vertex = false;
    bool binary_le = false;
    std::size_t stride = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line == "end_header") {
            break;
        }
        std::istringstream iss(line);
        std::string word;
        iss >> word;
        if (word == "format") {
            std::string fmt;
            iss >> fmt;
            binary_le = fmt == "binary_little_endian";
        } else if (word == "element") {
            std::string name;
            std::size_t count = 0;
            iss >> name >> count;
            if (name == "vertex") {
                if (seen_vertex) {
                    throw FormatError("PLY: duplicate vertex element");
                }
                in_vertex = true;
                seen_vertex = true;
                vertex_count = count;
            } else {
                if (!seen_vertex) {
                    throw FormatError("PLY: element '" + name + "' precedes the vertex element");
                }
                in_vertex = false;
            }
        } else if (word == "property" && in_vertex) {
            PlyProperty p;
            iss >> p.type;
            if (p.type == "list") {
                throw FormatError("PLY: list properties are not supported on vertices");
            }
            iss >> p.name;
            p.size = ply_type_size(p.type);
            p.offset = stride;
            stride += p.size;
            props.push_back(std::move(p));
        }
    }
    if (line != "end_header") {
        throw FormatError("PLY: header is not terminated by end_header");
    }
    if (!binary_le) {
        throw FormatError("PLY: only binary_little_endian is supported");
    }

    std::map<std::string, const PlyProperty *> by_name;
    for (const auto &p : props) {
        by_name[p.name] = &p;
    }
    auto require = [&](const std::string &name) -> const PlyProperty & {
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw FormatError("PLY: missing vertex property '" + name + "'");
        }
        return *it->second;
    };
    const char *required[] = {"x",       "y",       "z",     "opacity", "scale_0", "scale_1", "scale_2",
                              "rot_0",   "rot_1",   "rot_2", "rot_3",   "f_dc_0",  "f_dc_1",  "f_dc_2"};
    for (const char *name : required) {
        (void)require(name);
    }

    int rest_count = 0;
    while (by_name.count("f_rest_" + std::to_string(rest_count))) {
        ++rest_count;
    }
    int degree = 0;
    for (int d = 3; d >= 1; --d) {
        if (rest_count >= 3 * (coeffs_for_degree(d) - 1)) {
            degree = d;
            break;
        }
    }
    const int coeffs = coeffs_for_degree(degree);
    // f_rest is stored channel-major in files written by the reference trainer
    const int rest_per_channel = rest_count / 3;

    GaussianScene scene;
    scene.sh_degree = degree;
    scene.gaussians.resize(vertex_count);
    scene.active.assign(vertex_count, 1);

    std::vector<char> buffer(stride * vertex_count);
    in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    if (static_cast<std::size_t>(in.gcount()) != buffer.size()) {
        throw FormatError("PLY: truncated vertex data (expected " + std::to_string(buffer.size()) + " bytes, got " +
                          std::to_string(in.gcount()) + ")");
    }

    auto value = [&](std::size_t i, const PlyProperty &p) {
        return read_ply_value(buffer.data() + i * stride + p.offset, p.type);
    };
    const PlyProperty *px = &require("x"), *py = &require("y"), *pz = &require("z");
    const PlyProperty *pop = &require("opacity");
    const PlyProperty *ps[3] = {&require("scale_0"), &require("scale_1"), &require("scale_2")};
    const PlyProperty *pr[4] = {&require("rot_0"), &require("rot_1"), &require("rot_2"), &require("rot_3")};
    const PlyProperty *pdc[3] = {&require("f_dc_0"), &require("f_dc_1"), &require("f_dc_2")};
    std::vector<const PlyProperty *> prest;
    for (int j = 0; j < rest_count; ++j) {
        prest.push_back(&require("f_rest_" + std::to_string(j)));
    }

    for (std::size_t i = 0; i < vertex_count; ++i) {
        Gaussian &g = scene.gaussians[i];
        g.mean = {value(i, *px), value(i, *py), value(i, *pz)};
        const double raw_opacity = value(i, *pop);
        Eigen::Vector3d raw_scale;
        for (int a = 0; a < 3; ++a) {
            raw_scale[a] = value(i, *ps[a]);
        }
        Eigen::Vector4d q;
        for (int a = 0; a < 4; ++a) {
            q[a] = value(i, *pr[a]);
        }
        bool finite = g.mean.allFinite() && std::isfinite(raw_opacity) && raw_scale.allFinite() && q.allFinite();
        for (int c = 0; c < 3; ++c) {
            g.sh[static_cast<std::size_t>(c)] = static_cast<float>(value(i, *pdc[c]));
        }
        for (int k = 1; k < coeffs; ++k) {
            for (int c = 0; c < 3; ++c) {
                g.sh[static_cast<std::size_t>(k * 3 + c)] =
                    static_cast<float>(value(i, *prest[static_cast<std::size_t>(c * rest_per_channel + k - 1)]));
            }
        }
        for (int k = 0; k < coeffs * 3; ++k) {
            finite = finite && std::isfinite(g.sh[static_cast<std::size_t>(k)]);
        }
        const double qn = q.norm();
        if (!finite || !(qn > 0.0)) {
            throw ValidationError("PLY: Gaussian " + std::to_string(i) + " has non-finite or degenerate values");
        }
        g.opacity = sigmoid(raw_opacity);
        g.scale = raw_scale.array().exp();
        // already-unit quaternions are kept as stored so that save/load is a fixed point
        g.rotation = std::abs(qn - 1.0) > 1e-6 ? Eigen::Vector4d(q / qn) : q;
    }
    return scene;
}

GaussianScene load_scene(const std::filesystem::path &ply_path, const std::filesystem::path &cameras_path)
{
    GaussianScene scene = load_ply(ply_path);
    scene.cameras = load_cameras(cameras_path);
    scene.validate();
    return scene;
}

void save_scene(const GaussianScene &scene, const std::filesystem::path &ply_path)
{
    if (scene.active.size() != scene.gaussians.size()) {
        throw ValidationError("save_scene: active mask length mismatch");
    }
    const int coeffs = coeffs_for_degree(scene.sh_degree);
    const int rest = 3 * (coeffs - 1);
    const std::size_t count = scene.active_count();

    std::ofstream out(ply_path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write PLY file '" + ply_path.string() + "'");
    }
    out << "ply\nformat binary_little_endian 1.0\nelement vertex " << count << "\n";
    for (const char *name : {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"}) {
        out << "property float " << name << "\n";
    }
    for (int j = 0; j < rest; ++j) {
        out << "property float f_rest_" << j << "\n";
    }
    out << "property float opacity\n";
    for (const char *name : {"scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"}) {
        out << "property float " << name << "\n";
    }
    out << "end_header\n";

    std::vector<float> row;
    row.reserve(static_cast<std::size_t>(17 + rest));
    for (std::size_t i = 0; i < scene.gaussians.size(); ++i) {
        if (!scene.active[i]) {
            continue;
        }
        const Gaussian &g = scene.gaussians[i];
        row.clear();
        for (int a = 0; a < 3; ++a) {
            row.push_back(static_cast<float>(g.mean[a]));
        }
        row.insert(row.end(), {0.0f, 0.0f, 0.0f});
        for (int c = 0; c < 3; ++c) {
            row.push_back(g.sh[static_cast<std::size_t>(c)]);
        }
        for (int c = 0; c < 3; ++c) {
            for (int k = 1; k < coeffs; ++k) {
                row.push_back(g.sh[static_cast<std::size_t>(k * 3 + c)]);
            }
        }
        row.push_back(static_cast<float>(logit(g.opacity)));
        for (int a = 0; a < 3; ++a) {
            row.push_back(static_cast<float>(std::log(g.scale[a])));
        }
        for (int a = 0; a < 4; ++a) {
            row.push_back(static_cast<float>(g.rotation[a]));
        }
        out.write(reinterpret_cast<const char *>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!out) {
        throw IoError("failed writing PLY file '" + ply_path.string() + "'");
    }
}

std::vector<Camera> load_cameras(const std::filesystem::path &path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open cameras file '" + path.string() + "'");
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception &e) {
        throw FormatError("cameras file '" + path.string() + "': " + e.what());
    }
    if (!j.is_array()) {
        throw FormatError("cameras file '" + path.string() + "' must contain a JSON array");
    }
    std::vector<Camera> cams;
    for (std::size_t i = 0; i < j.size(); ++i) {
        cams.push_back(camera_from_json(j[i], i));
    }
    return cams;
}

void save_cameras(std::span<const Camera> cameras, const std::filesystem::path &path)
{
    nlohmann::json j = nlohmann::json::array();
    for (const auto &cam : cameras) {
        j.push_back(camera_to_json(cam));
    }
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write cameras file '" + path.string() + "'");
    }
    out << j.dump(2) << "\n";
}

std::vector<Camera> cameras_from_nerf_transforms(const std::filesystem::path &path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open transforms file '" + path.string() + "'");
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception &e) {
        throw FormatError("transforms file '" + path.string() + "': " + e.what());
    }
    std::vector<Camera> cams;
    try {
        const auto &frames = j.at("frames");
        for (std::size_t i = 0; i < frames.size(); ++i) {
            const auto &f = frames[i];
            auto get = [&](const char *key) -> const nlohmann::json & { return f.contains(key) ? f.at(key) : j.at(key); };
            Camera cam;
            cam.id = std::filesystem::path(f.at("file_path").get<std::string>()).stem().string();
            cam.width = get("w").get<int>();
            cam.height = get("h").get<int>();
            if (f.contains("fl_x") || j.contains("fl_x")) {
                cam.fx = get("fl_x").get<double>();
                cam.fy = (f.contains("fl_y") || j.contains("fl_y")) ? get("fl_y").get<double>() : cam.fx;
            } else {
                cam.fx = 0.5 * cam.width / std::tan(0.5 * get("camera_angle_x").get<double>());
                cam.fy = cam.fx;
            }
            cam.cx = (f.contains("cx") || j.contains("cx")) ? get("cx").get<double>() : 0.5 * cam.width;
            cam.cy = (f.contains("cy") || j.contains("cy")) ? get("cy").get<double>() : 0.5 * cam.height;
            Eigen::Matrix4d c2w;
            const auto &m = f.at("transform_matrix");
            for (int r = 0; r < 4; ++r) {
                for (int c = 0; c < 4; ++c) {
                    c2w(r, c) = m.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<double>();
                }
            }
            // OpenGL (y up, z back) to OpenCV (y down, z forward)
            c2w.col(1) *= -1.0;
            c2w.col(2) *= -1.0;
            cam.world_to_camera = c2w.inverse();
            cams.push_back(std::move(cam));
        }
    } catch (const nlohmann::json::exception &e) {
        throw FormatError("transforms file '" + path.string() + "': " + e.what());
    }
    return cams;
}

GaussianScene remove_gaussians(const GaussianScene &scene, std::span<const double> mask3d, double threshold)
{
    if (mask3d.size() != scene.size()) {
        throw ValidationError("remove_gaussians: mask length " + std::to_string(mask3d.size()) +
                              " != Gaussian count " + std::to_string(scene.size()));
    }
    GaussianScene out = scene;
    for (std::size_t i = 0; i < mask3d.size(); ++i) {
        if (mask3d[i] >= threshold) {
            out.active[i] = 0;
        }
    }
    return out;
}

Camera look_at_camera(std::string id, int width, int height, double focal, const Eigen::Vector3d &eye,
                      const Eigen::Vector3d &target, const Eigen::Vector3d &up)
{
    const Eigen::Vector3d forward = (target - eye).normalized();
    const Eigen::Vector3d right = forward.cross(up).normalized();
    const Eigen::Vector3d down = forward.cross(right);
    Camera cam;
    cam.id = std::move(id);
    cam.width = width;
    cam.height = height;
    cam.fx = focal;
    cam.fy = focal;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    Eigen::Matrix3d r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = forward.transpose();
    cam.world_to_camera.setIdentity();
    cam.world_to_camera.topLeftCorner<3, 3>() = r;
    cam.world_to_camera.topRightCorner<3, 1>() = -r * eye;
    return cam;
}

} // namespace splatlift
