#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "travkit/geometry.hpp"

// Projects the robot's driven trajectory into the image as an occlusion-aware
// footprint mask: the physically verified traversable evidence.

namespace travkit {

struct RobotFootprintSpec {
    double width = 0.6;          // track width, meters
    double length = 0.4;         // contact patch length per pose sample
    double ground_offset = 0.3;  // height of ground contact below base origin

    void validate() const {
        if (width <= 0 || length <= 0)
            throw ConfigError("RobotFootprintSpec: width and length must be positive");
    }
};

struct FootprintMask {
    MaskImage mask;      // visible footprint pixels
    MaskImage occluded;  // footprint pixels removed by the occlusion test
};

using Quad = std::array<Vec3, 4>;  // camera-frame ground quad, CCW

// One ground quad per trajectory sample in [t_img, t_img + horizon] at the
// given stride, expressed in the camera frame at t_img. Base frame is
// x-forward, y-left, z-up; corners are dropped by ground_offset.
inline std::vector<Quad> footprint_quads(const Trajectory& traj, const RobotFootprintSpec& spec,
                                         const Pose& cam_pose, double horizon, double stride,
                                         bool include_past = false) {
    spec.validate();
    if (horizon <= 0 || stride <= 0)
        throw ConfigError("footprint_quads: horizon and stride must be positive");

    const double t_img = cam_pose.t;
    Eigen::Isometry3d T_cam_world = cam_pose.isometry().inverse();

    std::vector<double> times;
    if (include_past)
        for (double t = t_img - stride; t >= t_img - horizon - 1e-12; t -= stride)
            times.push_back(t);
    std::reverse(times.begin(), times.end());
    for (double t = t_img; t <= t_img + horizon + 1e-12; t += stride) times.push_back(t);

    const double hw = spec.width / 2.0;
    const double hl = spec.length / 2.0;
    const std::array<Vec3, 4> corners_base = {Vec3(hl, hw, -spec.ground_offset),
                                              Vec3(hl, -hw, -spec.ground_offset),
                                              Vec3(-hl, -hw, -spec.ground_offset),
                                              Vec3(-hl, hw, -spec.ground_offset)};

    std::vector<Quad> quads;
    quads.reserve(times.size());
    for (double t : times) {
        Pose body = interpolate_pose(traj, t);  // throws OutOfRange on coverage gap
        Eigen::Isometry3d T_cam_base = T_cam_world * body.isometry();
        Quad q;
        for (int i = 0; i < 4; ++i) q[i] = T_cam_base * corners_base[i];
        quads.push_back(q);
    }
    return quads;
}

inline bool quad_behind_camera(const Quad& q) {
    for (const auto& c : q)
        if (c.z() <= 1e-6) return true;
    return false;
}

// Per-pixel minimum footprint depth, from splatting a bilinear grid over each
// quad with projected pitch <= 0.5 px at the quad's near edge (oversample > 1
// tightens the pitch further). 0 where no quad sample lands.
inline DepthImage footprint_depth_map(const std::vector<Quad>& quads, const CameraIntrinsics& K,
                                      double oversample = 1.0) {
    DepthImage foot_depth(K.height, K.width, 0.0);
    for (const auto& q : quads) {
        if (quad_behind_camera(q)) continue;
        double z_min = std::numeric_limits<double>::max();
        for (const auto& c : q) z_min = std::min(z_min, c.z());

        double pitch_m = 0.5 * z_min / (std::max(K.fx, K.fy) * oversample);
        double len_a = std::max((q[1] - q[0]).norm(), (q[2] - q[3]).norm());
        double len_b = std::max((q[3] - q[0]).norm(), (q[2] - q[1]).norm());
        int na = std::clamp(static_cast<int>(std::ceil(len_a / pitch_m)) + 1, 2, 8192);
        int nb = std::clamp(static_cast<int>(std::ceil(len_b / pitch_m)) + 1, 2, 8192);
        for (int i = 0; i < na; ++i) {
            double a = static_cast<double>(i) / (na - 1);
            Vec3 top = q[0] + a * (q[1] - q[0]);
            Vec3 bot = q[3] + a * (q[2] - q[3]);
            for (int j = 0; j < nb; ++j) {
                double b = static_cast<double>(j) / (nb - 1);
                Vec3 p = top + b * (bot - top);
                if (p.z() <= 1e-6) continue;
                PixelPoint px = project_point(p, K);
                int u = static_cast<int>(std::floor(px.u));
                int v = static_cast<int>(std::floor(px.v));
                if (!foot_depth.in_bounds(v, u)) continue;
                double& d = foot_depth.at(v, u);
                if (d == 0.0 || px.depth < d) d = px.depth;
            }
        }
    }
    return foot_depth;
}

// Union of rasterized projected quads, split into visible vs occluded by
// comparing the per-pixel footprint depth against the reference depth image.
// Quads with any corner behind the camera contribute nothing.
inline FootprintMask render_footprint_mask(const std::vector<Quad>& quads, const CameraIntrinsics& K,
                                           const DepthImage& depth, double occl_margin,
                                           double oversample = 1.0) {
    FootprintMask out;
    out.mask = MaskImage(K.height, K.width, 0);
    out.occluded = MaskImage(K.height, K.width, 0);

    MaskImage covered(K.height, K.width, 0);
    for (const auto& q : quads) {
        if (quad_behind_camera(q)) continue;
        std::vector<Eigen::Vector2d> poly;
        for (const auto& c : q) {
            PixelPoint px = project_point(c, K);
            poly.emplace_back(px.u, px.v);
        }
        MaskImage quad_mask = rasterize_polygon(poly, K.height, K.width);
        for (int v = 0; v < K.height; ++v)
            for (int u = 0; u < K.width; ++u)
                if (quad_mask.at(v, u)) covered.at(v, u) = 1;
    }

    DepthImage foot_depth = footprint_depth_map(quads, K, oversample);

    for (int v = 0; v < K.height; ++v)
        for (int u = 0; u < K.width; ++u) {
            if (!covered.at(v, u)) continue;
            double fd = foot_depth.at(v, u);
            double rd = depth.empty() ? 0.0 : depth.at(v, u);
            if (fd > 0.0 && rd > 0.0 && fd > rd + occl_margin)
                out.occluded.at(v, u) = 1;
            else
                out.mask.at(v, u) = 1;
        }
    return out;
}

}  // namespace travkit
