#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "travkit/errors.hpp"
#include "travkit/image.hpp"

// Rigid-body transforms, pinhole projection, pose interpolation, polygon
// rasterization and depth-image construction. Camera frame is x-right,
// y-down, z-forward; world is z-up.

namespace travkit {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;

struct Pose {
    double t = 0.0;                       // seconds
    Quat rotation = Quat::Identity();     // unit quaternion
    Vec3 translation = Vec3::Zero();      // meters

    void validate() const {
        if (!std::isfinite(t)) throw ConfigError("Pose: non-finite timestamp");
        if (std::abs(rotation.norm() - 1.0) > 1e-9)
            throw ConfigError("Pose: quaternion not normalized");
    }

    Eigen::Isometry3d isometry() const {
        Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
        T.linear() = rotation.toRotationMatrix();
        T.translation() = translation;
        return T;
    }

    static Pose from_isometry(const Eigen::Isometry3d& T, double t = 0.0) {
        Pose p;
        p.t = t;
        p.rotation = Quat(T.linear()).normalized();
        p.translation = T.translation();
        return p;
    }
};

using Trajectory = std::vector<Pose>;  // sorted by t

struct CameraIntrinsics {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;

    void validate() const {
        if (fx <= 0 || fy <= 0) throw ConfigError("CameraIntrinsics: focal lengths must be positive");
        if (cx < 0 || cx >= width || cy < 0 || cy >= height)
            throw ConfigError("CameraIntrinsics: principal point outside image");
    }
};

struct Extrinsics {
    Eigen::Isometry3d T_cam_lidar = Eigen::Isometry3d::Identity();  // LiDAR -> camera
    Eigen::Isometry3d T_base_cam = Eigen::Isometry3d::Identity();   // camera -> base

    void validate() const {
        auto check = [](const Eigen::Isometry3d& T, const char* name) {
            Eigen::Matrix3d R = T.linear();
            if ((R * R.transpose() - Eigen::Matrix3d::Identity()).norm() > 1e-6)
                throw ConfigError(std::string("Extrinsics: ") + name + " rotation not orthonormal");
        };
        check(T_cam_lidar, "T_cam_lidar");
        check(T_base_cam, "T_base_cam");
    }
};

using DepthImage = Image<double>;  // meters, 0 = invalid

inline std::vector<Vec3> transform_points(const Eigen::Isometry3d& T, const std::vector<Vec3>& pts) {
    std::vector<Vec3> out;
    out.reserve(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) {
        if (!pts[i].allFinite())
            throw ConfigError("transform_points: non-finite point at index " + std::to_string(i));
        out.push_back(T * pts[i]);
    }
    return out;
}

struct PixelPoint {
    double u, v;   // pixels
    double depth;  // meters
};

inline PixelPoint project_point(const Vec3& p_cam, const CameraIntrinsics& K) {
    if (p_cam.z() <= 1e-6) throw BehindCameraError("project_point: point behind camera");
    return {K.fx * p_cam.x() / p_cam.z() + K.cx,
            K.fy * p_cam.y() / p_cam.z() + K.cy,
            p_cam.z()};
}

inline Vec3 backproject_pixel(double u, double v, double depth, const CameraIntrinsics& K) {
    return {(u - K.cx) / K.fx * depth, (v - K.cy) / K.fy * depth, depth};
}

// Linear translation + slerp rotation between the bracketing poses; exact at knots.
inline Pose interpolate_pose(const Trajectory& traj, double t) {
    if (traj.empty() || t < traj.front().t || t > traj.back().t)
        throw OutOfRangeError("interpolate_pose: t=" + std::to_string(t) + " outside trajectory span");
    auto it = std::lower_bound(traj.begin(), traj.end(), t,
                               [](const Pose& p, double tt) { return p.t < tt; });
    if (it != traj.end() && it->t == t) return *it;
    const Pose& b = *it;
    const Pose& a = *(it - 1);
    double alpha = (t - a.t) / (b.t - a.t);
    Pose out;
    out.t = t;
    out.translation = (1.0 - alpha) * a.translation + alpha * b.translation;
    out.rotation = a.rotation.slerp(alpha, b.rotation).normalized();
    return out;
}

// Scanline even-odd fill; a pixel is set iff its center (u+0.5, v+0.5) lies
// inside the polygon. Degenerate inputs yield an empty mask.
inline MaskImage rasterize_polygon(const std::vector<Eigen::Vector2d>& vertices, int height, int width) {
    MaskImage mask(height, width, 0);
    const int n = static_cast<int>(vertices.size());
    if (n < 3) return mask;

    double vmin = vertices[0].y(), vmax = vertices[0].y();
    for (const auto& p : vertices) {
        vmin = std::min(vmin, p.y());
        vmax = std::max(vmax, p.y());
    }
    int row0 = std::max(0, static_cast<int>(std::floor(vmin - 0.5)));
    int row1 = std::min(height - 1, static_cast<int>(std::ceil(vmax)));

    std::vector<double> xs;
    for (int row = row0; row <= row1; ++row) {
        double yc = row + 0.5;
        xs.clear();
        for (int i = 0; i < n; ++i) {
            const auto& p = vertices[i];
            const auto& q = vertices[(i + 1) % n];
            // Half-open rule on y so shared endpoints are counted once.
            if ((p.y() <= yc && q.y() > yc) || (q.y() <= yc && p.y() > yc)) {
                double tt = (yc - p.y()) / (q.y() - p.y());
                xs.push_back(p.x() + tt * (q.x() - p.x()));
            }
        }
        std::sort(xs.begin(), xs.end());
        for (size_t k = 0; k + 1 < xs.size(); k += 2) {
            // Centers in [xs[k], xs[k+1]): inclusive left edge, exclusive right.
            int u0 = std::max(0, static_cast<int>(std::ceil(xs[k] - 0.5)));
            double r = xs[k + 1] - 0.5;
            int u1 = static_cast<int>(std::floor(r));
            if (static_cast<double>(u1) == r) u1 -= 1;
            u1 = std::min(width - 1, u1);
            for (int u = u0; u <= u1; ++u) mask.at(row, u) = 1;
        }
    }
    return mask;
}

// Per-pixel minimum depth over the projected cloud; points behind the camera
// are skipped; pixels no point hits stay 0.
inline DepthImage build_depth_image(const std::vector<Vec3>& cloud_lidar, const Extrinsics& ext,
                                    const CameraIntrinsics& K) {
    DepthImage depth(K.height, K.width, 0.0);
    for (const auto& p : cloud_lidar) {
        if (!p.allFinite()) throw ConfigError("build_depth_image: non-finite point");
        Vec3 pc = ext.T_cam_lidar * p;
        if (pc.z() <= 1e-6) continue;
        PixelPoint px = project_point(pc, K);
        int u = static_cast<int>(std::floor(px.u));
        int v = static_cast<int>(std::floor(px.v));
        if (!depth.in_bounds(v, u)) continue;
        double& d = depth.at(v, u);
        if (d == 0.0 || px.depth < d) d = px.depth;
    }
    return depth;
}

// TUM trajectory format: `t tx ty tz qx qy qz qw` per line.
inline Trajectory load_tum_trajectory(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open trajectory file: " + path);
    Trajectory traj;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        double t, tx, ty, tz, qx, qy, qz, qw;
        if (!(ss >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
            throw ConfigError("malformed TUM pose line: " + line);
        Pose p;
        p.t = t;
        p.translation = {tx, ty, tz};
        p.rotation = Quat(qw, qx, qy, qz).normalized();
        traj.push_back(p);
    }
    std::sort(traj.begin(), traj.end(), [](const Pose& a, const Pose& b) { return a.t < b.t; });
    return traj;
}

inline void save_tum_trajectory(const Trajectory& traj, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write trajectory file: " + path);
    out.precision(17);
    for (const auto& p : traj)
        out << p.t << " " << p.translation.x() << " " << p.translation.y() << " "
            << p.translation.z() << " " << p.rotation.x() << " " << p.rotation.y() << " "
            << p.rotation.z() << " " << p.rotation.w() << "\n";
}

}  // namespace travkit
