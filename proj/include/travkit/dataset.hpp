#pragma once

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "travkit/geometry.hpp"
#include "travkit/png_io.hpp"
#include "travkit/synth.hpp"

// Flat dataset layout shared by synthetic and recorded data:
//   images/<frame_id>.png   8-bit RGB
//   clouds/<frame_id>.bin   float32 x,y,z,intensity (little endian)
//   poses.tum               `t tx ty tz qx qy qz qw`, base frame in world
//   calib.yaml              intrinsics + 4x4 row-major T_cam_lidar, T_base_cam
//   labels/<frame_id>.png   optional, values {0,1,255}
//   gt/<frame_id>.png       optional, values {0,1}
// <frame_id> is the zero-padded index of the frame's entry in poses.tum.

namespace travkit {

namespace fs = std::filesystem;

struct Calibration {
    CameraIntrinsics K;
    Extrinsics ext;
};

inline void save_calibration(const Calibration& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write calibration: " + path);
    out.precision(17);
    out << "fx: " << c.K.fx << "\nfy: " << c.K.fy << "\ncx: " << c.K.cx << "\ncy: " << c.K.cy
        << "\nwidth: " << c.K.width << "\nheight: " << c.K.height << "\n";
    auto mat = [&](const char* name, const Eigen::Isometry3d& T) {
        out << name << ": [";
        for (int r = 0; r < 4; ++r)
            for (int col = 0; col < 4; ++col)
                out << T.matrix()(r, col) << (r == 3 && col == 3 ? "]\n" : ", ");
    };
    mat("T_cam_lidar", c.ext.T_cam_lidar);
    mat("T_base_cam", c.ext.T_base_cam);
}

inline Calibration load_calibration(const std::string& path) {
    YAML::Node root;
    try {
        root = YAML::LoadFile(path);
    } catch (const YAML::Exception& e) {
        throw ConfigError("cannot load calibration " + path + ": " + e.what());
    }
    Calibration c;
    for (const char* key : {"fx", "fy", "cx", "cy", "width", "height", "T_cam_lidar", "T_base_cam"})
        if (!root[key]) throw ConfigError("calibration missing key '" + std::string(key) + "': " + path);
    c.K.fx = root["fx"].as<double>();
    c.K.fy = root["fy"].as<double>();
    c.K.cx = root["cx"].as<double>();
    c.K.cy = root["cy"].as<double>();
    c.K.width = root["width"].as<int>();
    c.K.height = root["height"].as<int>();
    c.K.validate();
    auto mat = [&](const char* name) {
        auto vals = root[name].as<std::vector<double>>();
        if (vals.size() != 16)
            throw ConfigError("calibration matrix '" + std::string(name) + "' needs 16 values");
        Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
        for (int r = 0; r < 4; ++r)
            for (int col = 0; col < 4; ++col) T.matrix()(r, col) = vals[r * 4 + col];
        return T;
    };
    c.ext.T_cam_lidar = mat("T_cam_lidar");
    c.ext.T_base_cam = mat("T_base_cam");
    return c;
}

inline void save_cloud_bin(const std::vector<Vec3>& cloud, const std::vector<float>& intensity,
                           const std::string& path) {
    if (cloud.size() != intensity.size())
        throw ShapeError("save_cloud_bin: cloud and intensity differ in length");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write cloud: " + path);
    for (size_t i = 0; i < cloud.size(); ++i) {
        float rec[4] = {static_cast<float>(cloud[i].x()), static_cast<float>(cloud[i].y()),
                        static_cast<float>(cloud[i].z()), intensity[i]};
        out.write(reinterpret_cast<const char*>(rec), sizeof(rec));
    }
}

inline void load_cloud_bin(const std::string& path, std::vector<Vec3>& cloud,
                           std::vector<float>& intensity) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw ConfigError("cannot read cloud: " + path);
    auto bytes = static_cast<size_t>(in.tellg());
    if (bytes % 16 != 0) throw ConfigError("cloud file size not a multiple of 16: " + path);
    in.seekg(0);
    cloud.clear();
    intensity.clear();
    float rec[4];
    for (size_t i = 0; i < bytes / 16; ++i) {
        in.read(reinterpret_cast<char*>(rec), sizeof(rec));
        cloud.emplace_back(rec[0], rec[1], rec[2]);
        intensity.push_back(rec[3]);
    }
}

inline std::vector<std::string> list_frame_ids(const std::string& root) {
    std::vector<std::string> ids;
    fs::path dir = fs::path(root) / "images";
    if (!fs::is_directory(dir)) throw ConfigError("missing images directory: " + dir.string());
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".png") ids.push_back(e.path().stem().string());
    std::sort(ids.begin(), ids.end());
    return ids;
}

// layout checks: calibration loadable, every image has a cloud, pose file
// covers every frame timestamp
struct Dataset {
    std::string root;
    Calibration calib;
    Trajectory poses;
    std::vector<std::string> frame_ids;

    double frame_time(const std::string& id) const {
        size_t idx = std::stoul(id);
        if (idx >= poses.size())
            throw ConfigError("frame id " + id + " beyond pose file (" +
                              std::to_string(poses.size()) + " entries)");
        return poses[idx].t;
    }
    fs::path image_path(const std::string& id) const { return fs::path(root) / "images" / (id + ".png"); }
    fs::path cloud_path(const std::string& id) const { return fs::path(root) / "clouds" / (id + ".bin"); }
    fs::path label_path(const std::string& id) const { return fs::path(root) / "labels" / (id + ".png"); }
    fs::path gt_path(const std::string& id) const { return fs::path(root) / "gt" / (id + ".png"); }
};

inline Dataset open_dataset(const std::string& root) {
    Dataset ds;
    ds.root = root;
    fs::path calib = fs::path(root) / "calib.yaml";
    if (!fs::exists(calib)) throw ConfigError("missing calibration file: " + calib.string());
    ds.calib = load_calibration(calib.string());
    fs::path poses = fs::path(root) / "poses.tum";
    if (!fs::exists(poses)) throw ConfigError("missing pose file: " + poses.string());
    ds.poses = load_tum_trajectory(poses.string());
    ds.frame_ids = list_frame_ids(root);
    for (const auto& id : ds.frame_ids) {
        if (!fs::exists(ds.cloud_path(id)))
            throw ConfigError("frame " + id + " has no cloud file");
        ds.frame_time(id);  // throws if the pose file does not cover the frame
    }
    return ds;
}

inline void write_synth_dataset(const SynthScene& scene, const std::string& root) {
    fs::create_directories(fs::path(root) / "images");
    fs::create_directories(fs::path(root) / "clouds");
    fs::create_directories(fs::path(root) / "gt");
    save_calibration({scene.camera, scene.extrinsics}, (fs::path(root) / "calib.yaml").string());
    save_tum_trajectory(scene.trajectory, (fs::path(root) / "poses.tum").string());
    for (const SynthFrame& f : scene.frames) {
        save_png_rgb(f.rgb, (fs::path(root) / "images" / (f.id + ".png")).string());
        save_cloud_bin(f.cloud, f.intensity, (fs::path(root) / "clouds" / (f.id + ".bin")).string());
        save_png_gray(f.gt, (fs::path(root) / "gt" / (f.id + ".png")).string());
    }
}

}  // namespace travkit
