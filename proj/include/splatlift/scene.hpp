// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace splatlift {

/// Maximum number of SH coefficients per color channel (degree 3).
inline constexpr int kMaxShCoeffs = 16;

/// One decoded 3D Gaussian. Geometry is kept in double so that
/// save/load is stable under the logit/log encodings of the PLY format.
struct Gaussian {
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    /// Linear (exponentiated) per-axis standard deviations.
    Eigen::Vector3d scale = Eigen::Vector3d::Ones();
    /// Unit quaternion stored as (w, x, y, z).
    Eigen::Vector4d rotation{1.0, 0.0, 0.0, 0.0};
    /// Sigmoid-decoded opacity in (0, 1).
    double opacity = 1.0;
    /// SH coefficients, coefficient-major: sh[k * 3 + channel].
    std::array<float, 3 * kMaxShCoeffs> sh{};
};

struct Camera {
    std::string id;
    int width = 0;
    int height = 0;
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    Eigen::Matrix4d world_to_camera = Eigen::Matrix4d::Identity();

    [[nodiscard]] Eigen::Matrix3d rotation() const { return world_to_camera.topLeftCorner<3, 3>(); }
    [[nodiscard]] Eigen::Vector3d translation() const { return world_to_camera.topRightCorner<3, 1>(); }
    /// Camera center in world coordinates.
    [[nodiscard]] Eigen::Vector3d center() const { return -rotation().transpose() * translation(); }
    [[nodiscard]] std::size_t pixel_count() const
    {
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    }

    /// Throws ValidationError unless dims are positive and the rotation block
    /// is orthonormal with det +1 (tolerance 1e-5).
    void validate() const;
};

/// A pretrained scene. Per-Gaussian arrays elsewhere in the library are
/// indexed by position in `gaussians`; pruning only flips `active`.
struct GaussianScene {
    std::vector<Gaussian> gaussians;
    std::vector<Camera> cameras;
    std::vector<std::uint8_t> active;
    /// SH degree present in the file (0..3).
    int sh_degree = 0;

    [[nodiscard]] std::size_t size() const { return gaussians.size(); }
    [[nodiscard]] std::size_t active_count() const;
    [[nodiscard]] bool is_active(std::size_t i) const { return active[i] != 0; }
    [[nodiscard]] std::vector<std::uint32_t> active_indices() const;
    /// Returns the camera with the given id or throws ValidationError.
    [[nodiscard]] const Camera &camera(const std::string &id) const;
    /// Throws ValidationError on duplicate camera ids or mask length mismatch.
    void validate() const;
};

[[nodiscard]] Eigen::Matrix3d rotation_from_quaternion(const Eigen::Vector4d &wxyz);

/// R diag(scale^2) R^T.
[[nodiscard]] Eigen::Matrix3d covariance_of(const Gaussian &g);

/// Evaluates view-dependent RGB from SH coefficients, clamped at zero.
/// `direction` points from the camera center to the Gaussian mean.
[[nodiscard]] Eigen::Vector3d evaluate_sh(const Gaussian &g, int degree, const Eigen::Vector3d &direction);

/// Sets the DC SH term so that degree-0 evaluation yields `rgb`.
void set_base_color(Gaussian &g, const Eigen::Vector3d &rgb);

[[nodiscard]] GaussianScene load_scene(const std::filesystem::path &ply_path,
                                       const std::filesystem::path &cameras_path);
[[nodiscard]] GaussianScene load_ply(const std::filesystem::path &ply_path);
void save_scene(const GaussianScene &scene, const std::filesystem::path &ply_path);

[[nodiscard]] std::vector<Camera> load_cameras(const std::filesystem::path &path);
void save_cameras(std::span<const Camera> cameras, const std::filesystem::path &path);

/// Converts a NeRF-style transforms.json (camera-to-world, OpenGL axes) into
/// cameras using the OpenCV convention expected by the rasterizer.
[[nodiscard]] std::vector<Camera> cameras_from_nerf_transforms(const std::filesystem::path &path);

/// Returns a copy in which every Gaussian with mask3d >= threshold is inactive.
[[nodiscard]] GaussianScene remove_gaussians(const GaussianScene &scene, std::span<const double> mask3d,
                                             double threshold);

/// Builds a camera at `eye` looking at `target`, OpenCV axes (x right, y down, z forward).
[[nodiscard]] Camera look_at_camera(std::string id, int width, int height, double focal, const Eigen::Vector3d &eye,
                                    const Eigen::Vector3d &target, const Eigen::Vector3d &up);

} // namespace splatlift
