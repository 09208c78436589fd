#pragma once

#include <array>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "travkit/footprint.hpp"
#include "travkit/fusion.hpp"
#include "travkit/prior.hpp"

// Deterministic synthetic scene generator: sloped ground plane, box pillar
// obstacles, a driven trajectory, ray-cast camera and LiDAR, and ground
// truth derived from the same geometry with the geometric-prior thresholds.

namespace travkit {

enum class TrajStyle { kStraight, kArc, kSCurve };

struct SceneSpec {
    uint64_t seed = 0;
    double extent_x = 30.0, extent_y = 12.0;  // meters
    int n_obstacles = 6;
    double obstacle_min = 0.4, obstacle_max = 0.8;        // horizontal size, meters
    double obstacle_height_min = 1.2, obstacle_height_max = 1.8;
    double slope_min_deg = 0.0, slope_max_deg = 8.0;      // ground slope range
    TrajStyle style = TrajStyle::kStraight;
    int frames = 4;
    int lidar_rays = 160;       // azimuth samples per sweep
    int lidar_channels = 24;    // vertical channels
    CameraIntrinsics camera{60.0, 60.0, 48.0, 32.0, 96, 64};
    double cam_pitch_up_deg = 6.0;
    double noise_pixel_sigma = 0.0;   // optional Gaussian RGB noise (0..1 scale)
    double noise_range_sigma = 0.0;   // optional LiDAR range noise, meters

    void validate() const {
        if (frames <= 0 || lidar_rays <= 0 || lidar_channels <= 0)
            throw ConfigError("SceneSpec: counts must be positive");
        if (slope_min_deg < 0 || slope_max_deg > 45 || slope_min_deg > slope_max_deg)
            throw ConfigError("SceneSpec: slope range must lie within [0,45]");
        camera.validate();
    }
};

struct ObstacleBox {
    double cx, cy, hx, hy;  // center and half extents in x-y
    double z0, z1;          // vertical span in world z
};

using Rgb8 = std::array<uint8_t, 3>;

struct SynthFrame {
    std::string id;
    double t = 0.0;
    Image<Rgb8> rgb;
    std::vector<Vec3> cloud;       // LiDAR frame
    std::vector<float> intensity;
    std::vector<int32_t> point_hit;  // -2 ground, >=0 obstacle index
    Pose pose;                     // base in world at t
    LabelImage gt;                 // {0,1}, no ignore pixels
    Image<int32_t> gt_regions;     // connected components of gt
};

struct SynthScene {
    std::vector<SynthFrame> frames;
    Trajectory trajectory;
    Extrinsics extrinsics;
    CameraIntrinsics camera;
    RobotFootprintSpec footprint;
    double ground_slope_deg = 0.0;
    std::vector<ObstacleBox> obstacles;
};

namespace synth_detail {

constexpr double kBaseHeight = 0.35;   // base origin above ground, along the normal
constexpr double kLidarUp = 0.4;       // lidar above base origin
constexpr double kLidarRange = 25.0;
constexpr double kCorridorClearance = 1.2;
// Ground within this horizontal distance of an obstacle is not traversable:
// a robot cannot hug a wall, and plane fits with the default 0.5 m feature
// radius are wall-contaminated exactly inside this band.
constexpr double kObstacleApron = 0.55;

struct Hit {
    double t = 0.0;
    Vec3 point = Vec3::Zero();
    Vec3 normal = Vec3::UnitZ();
    int what = -1;  // -1 sky, -2 ground, >=0 obstacle index
};

struct World {
    double slope_tan = 0.0;  // ground z = x * slope_tan
    std::vector<ObstacleBox> boxes;

    double ground_z(double x, double) const { return x * slope_tan; }

    Vec3 ground_normal() const { return Vec3(-slope_tan, 0.0, 1.0).normalized(); }

    // horizontal clearance from every obstacle footprint
    bool apron_clear(double x, double y) const {
        for (const ObstacleBox& b : boxes) {
            double dx = std::max(0.0, std::abs(x - b.cx) - b.hx);
            double dy = std::max(0.0, std::abs(y - b.cy) - b.hy);
            if (std::hypot(dx, dy) < kObstacleApron) return false;
        }
        return true;
    }

    Hit raycast(const Vec3& o, const Vec3& d) const {
        Hit best;
        best.t = std::numeric_limits<double>::max();
        // ground plane n.p = 0
        Vec3 n = ground_normal();
        double denom = n.dot(d);
        if (denom < -1e-12) {
            double t = -n.dot(o) / denom;
            if (t > 1e-6 && t < best.t) {
                best.t = t;
                best.point = o + t * d;
                best.normal = n;
                best.what = -2;
            }
        }
        for (size_t i = 0; i < boxes.size(); ++i) {
            const ObstacleBox& b = boxes[i];
            double t0 = 1e-6, t1 = best.t;
            Vec3 lo(b.cx - b.hx, b.cy - b.hy, b.z0);
            Vec3 hi(b.cx + b.hx, b.cy + b.hy, b.z1);
            Vec3 axis_normal = Vec3::Zero();
            bool ok = true;
            for (int ax = 0; ax < 3 && ok; ++ax) {
                if (std::abs(d[ax]) < 1e-12) {
                    if (o[ax] < lo[ax] || o[ax] > hi[ax]) ok = false;
                    continue;
                }
                double ta = (lo[ax] - o[ax]) / d[ax];
                double tb = (hi[ax] - o[ax]) / d[ax];
                double sign = -1.0;
                if (ta > tb) {
                    std::swap(ta, tb);
                    sign = 1.0;
                }
                if (ta > t0) {
                    t0 = ta;
                    axis_normal = Vec3::Zero();
                    axis_normal[ax] = sign;
                }
                if (tb < t1) t1 = tb;
                if (t0 > t1) ok = false;
            }
            if (ok && t0 < best.t && t0 > 1e-6) {
                best.t = t0;
                best.point = o + t0 * d;
                best.normal = axis_normal.norm() > 0 ? axis_normal : Vec3::UnitZ();
                best.what = static_cast<int>(i);
            }
        }
        if (best.t == std::numeric_limits<double>::max()) best.what = -1;
        return best;
    }
};

// planar trajectory curve: returns lateral offset y for arclength-ish x
inline double curve_y(TrajStyle style, double x, double extent_x) {
    switch (style) {
        case TrajStyle::kStraight:
            return 0.0;
        case TrajStyle::kArc: {
            double R = 40.0;  // gentle arc
            double c = std::max(0.0, R * R - x * x);
            return R - std::sqrt(c);
        }
        case TrajStyle::kSCurve:
            return 0.8 * std::sin(2.0 * M_PI * x / std::max(extent_x, 1.0));
    }
    return 0.0;
}

inline Pose base_pose_at(const World& world, TrajStyle style, double x, double extent_x, double t) {
    double y = curve_y(style, x, extent_x);
    double dx = 1e-4;
    double y2 = curve_y(style, x + dx, extent_x);
    double yaw = std::atan2(y2 - y, dx);

    Vec3 n = world.ground_normal();
    Vec3 heading(std::cos(yaw), std::sin(yaw), 0.0);
    Vec3 xb = (heading - heading.dot(n) * n).normalized();
    Vec3 yb = n.cross(xb);
    Eigen::Matrix3d R;
    R.col(0) = xb;
    R.col(1) = yb;
    R.col(2) = n;

    Pose p;
    p.t = t;
    p.rotation = Quat(R);
    p.translation = Vec3(x, y, world.ground_z(x, y)) + kBaseHeight * n;
    return p;
}

inline Eigen::Isometry3d make_T_base_cam(double pitch_up_deg) {
    double a = pitch_up_deg * M_PI / 180.0;
    Eigen::Matrix3d R;
    R.col(0) = Vec3(0, -1, 0);                          // camera x = base -y (right)
    R.col(1) = Vec3(std::sin(a), 0, -std::cos(a));      // camera y (down)
    R.col(2) = Vec3(std::cos(a), 0, std::sin(a));       // camera z (forward, pitched up)
    Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
    T.linear() = R;
    T.translation() = Vec3(0.2, 0.0, 0.3);
    return T;
}

inline Eigen::Isometry3d make_T_base_lidar() {
    Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
    T.translation() = Vec3(0.0, 0.0, kLidarUp);
    return T;
}

inline Image<int32_t> label_regions(const LabelImage& gt) {
    Image<int32_t> regions(gt.height(), gt.width(), 0);
    int32_t next = 1;
    for (uint8_t cls : {kNonTraversable, kTraversable})
        for (const auto& comp : connected_components(gt, cls)) {
            for (auto [v, u] : comp) regions.at(v, u) = next;
            ++next;
        }
    return regions;
}

}  // namespace synth_detail

// Minimum distance from a point to the trajectory centerline, sampled.
inline double trajectory_clearance(const Trajectory& traj, double px, double py) {
    double best = std::numeric_limits<double>::max();
    for (const auto& p : traj)
        best = std::min(best, std::hypot(p.translation.x() - px, p.translation.y() - py));
    return best;
}

inline SynthScene generate_scene(const SceneSpec& spec) {
    using namespace synth_detail;
    spec.validate();
    std::mt19937_64 rng(spec.seed);

    SynthScene scene;
    scene.camera = spec.camera;
    scene.footprint = RobotFootprintSpec{0.6, 0.4, kBaseHeight};

    World world;
    {
        std::uniform_real_distribution<double> ds(spec.slope_min_deg, spec.slope_max_deg);
        scene.ground_slope_deg = ds(rng);
        world.slope_tan = std::tan(scene.ground_slope_deg * M_PI / 180.0);
    }

    // trajectory: 1 m/s along x, poses every 0.1 s, covering the extent
    const double speed = 1.0, pose_dt = 0.1;
    for (double t = 0.0; t * speed <= spec.extent_x; t += pose_dt)
        scene.trajectory.push_back(base_pose_at(world, spec.style, t * speed, spec.extent_x, t));

    // obstacles stratified along the route, placed just off the driving
    // corridor so every frame has some in close LiDAR range; jittered
    // retries, then error
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::uniform_real_distribution<double> dsize(spec.obstacle_min, spec.obstacle_max);
    std::uniform_real_distribution<double> dheight(spec.obstacle_height_min, spec.obstacle_height_max);
    const double route0 = 3.0, route1 = spec.extent_x - 2.0;
    for (int i = 0; i < spec.n_obstacles; ++i) {
        double w0 = route0 + (route1 - route0) * i / spec.n_obstacles;
        double w1 = route0 + (route1 - route0) * (i + 1) / spec.n_obstacles;
        bool placed = false;
        for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
            ObstacleBox b;
            b.cx = w0 + (w1 - w0) * u01(rng);
            b.hx = dsize(rng) / 2;
            b.hy = dsize(rng) / 2;
            double clearance = kCorridorClearance + std::max(b.hx, b.hy);
            double side = u01(rng) < 0.5 ? -1.0 : 1.0;
            double offset = clearance + 0.05 + 2.0 * u01(rng);
            b.cy = curve_y(spec.style, b.cx, spec.extent_x) + side * offset;
            if (std::abs(b.cy) > spec.extent_y / 2) continue;
            if (trajectory_clearance(scene.trajectory, b.cx, b.cy) < clearance) continue;
            double zg = world.ground_z(b.cx, b.cy);
            b.z0 = zg - 0.2;
            b.z1 = zg + dheight(rng);
            world.boxes.push_back(b);
            placed = true;
        }
        if (!placed) throw Error("generate_scene: could not place obstacle off the corridor");
    }
    scene.obstacles = world.boxes;

    Eigen::Isometry3d T_base_cam = make_T_base_cam(spec.cam_pitch_up_deg);
    Eigen::Isometry3d T_base_lidar = make_T_base_lidar();
    scene.extrinsics.T_base_cam = T_base_cam;
    scene.extrinsics.T_cam_lidar = T_base_cam.inverse() * T_base_lidar;

    const CameraIntrinsics& K = spec.camera;
    const double slope_gate = SeedThresholds{}.slope_max_deg;
    std::normal_distribution<double> pixel_noise(0.0, spec.noise_pixel_sigma);
    std::normal_distribution<double> range_noise(0.0, spec.noise_range_sigma);

    // frames sampled along the first part of the trajectory, leaving
    // footprint horizon coverage after the last frame
    const double horizon_reserve = 6.0;
    const double t_last = scene.trajectory.back().t - horizon_reserve;
    if (t_last <= 0) throw ConfigError("generate_scene: extent too small for the frame horizon");
    const double frame_dt = spec.frames > 1 ? t_last / (spec.frames - 1) : 0.0;

    for (int f = 0; f < spec.frames; ++f) {
        SynthFrame frame;
        // frames sit on pose-file entries so frame ids are timestamp indices
        long idx = std::lround(f * frame_dt / pose_dt);
        idx = std::min<long>(idx, static_cast<long>(scene.trajectory.size()) - 1);
        frame.t = scene.trajectory[idx].t;
        frame.pose = scene.trajectory[idx];
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%06ld", idx);
        frame.id = buf;

        Eigen::Isometry3d T_world_cam = frame.pose.isometry() * T_base_cam;
        Vec3 cam_origin = T_world_cam.translation();

        frame.rgb = Image<Rgb8>(K.height, K.width, {0, 0, 0});
        frame.gt = LabelImage(K.height, K.width, kNonTraversable);
        const Vec3 light = Vec3(0.3, 0.2, 0.9).normalized();
        for (int v = 0; v < K.height; ++v)
            for (int u = 0; u < K.width; ++u) {
                Vec3 dir_cam = backproject_pixel(u + 0.5, v + 0.5, 1.0, K).normalized();
                Vec3 dir = T_world_cam.linear() * dir_cam;
                Hit hit = world.raycast(cam_origin, dir);
                Vec3 albedo;
                if (hit.what == -1) {
                    albedo = Vec3(0.70, 0.80, 0.95);  // sky
                    frame.gt.at(v, u) = kNonTraversable;
                } else if (hit.what == -2) {
                    albedo = Vec3(0.35, 0.55, 0.35);
                    bool trav = scene.ground_slope_deg <= slope_gate &&
                                world.apron_clear(hit.point.x(), hit.point.y());
                    frame.gt.at(v, u) = trav ? kTraversable : kNonTraversable;
                } else {
                    albedo = Vec3(0.60, 0.30, 0.25);
                    frame.gt.at(v, u) = kNonTraversable;
                }
                double shade = hit.what == -1 ? 1.0 : 0.4 + 0.6 * std::max(0.0, hit.normal.dot(light));
                for (int c = 0; c < 3; ++c) {
                    double val = albedo[c] * shade;
                    if (spec.noise_pixel_sigma > 0) val += pixel_noise(rng);
                    frame.rgb.at(v, u)[c] =
                        static_cast<uint8_t>(std::clamp(val, 0.0, 1.0) * 255.0 + 0.5);
                }
            }
        frame.gt_regions = label_regions(frame.gt);

        // LiDAR sweep: forward fan, world-frame cast, points in lidar frame
        Eigen::Isometry3d T_world_lidar = frame.pose.isometry() * T_base_lidar;
        Eigen::Isometry3d T_lidar_world = T_world_lidar.inverse();
        Vec3 lidar_origin = T_world_lidar.translation();
        for (int ch = 0; ch < spec.lidar_channels; ++ch) {
            double elev = (-30.0 + 34.0 * ch / std::max(1, spec.lidar_channels - 1)) * M_PI / 180.0;
            for (int r = 0; r < spec.lidar_rays; ++r) {
                double azim = (-80.0 + 160.0 * r / std::max(1, spec.lidar_rays - 1)) * M_PI / 180.0;
                Vec3 d_l(std::cos(elev) * std::cos(azim), std::cos(elev) * std::sin(azim),
                         std::sin(elev));
                Vec3 dir = T_world_lidar.linear() * d_l;
                Hit hit = world.raycast(lidar_origin, dir);
                if (hit.what == -1 || hit.t > kLidarRange) continue;
                double range = hit.t;
                if (spec.noise_range_sigma > 0) range += range_noise(rng);
                Vec3 p_world = lidar_origin + range * dir;
                frame.cloud.push_back(T_lidar_world * p_world);
                frame.intensity.push_back(hit.what == -2 ? 0.4f : 0.8f);
                frame.point_hit.push_back(hit.what);
            }
        }
        scene.frames.push_back(std::move(frame));
    }
    return scene;
}

}  // namespace travkit
