#pragma once

#include <Eigen/Eigenvalues>
#include <cmath>
#include <unordered_map>
#include <vector>

#include "travkit/geometry.hpp"

// Per-point geometric traversability evidence from LiDAR: local plane fits
// give height, slope and roughness; thresholds with a hysteresis band turn
// them into sparse POS/NEG seeds; seeds project to a sparse seed image.

namespace travkit {

struct PointFeatures {
    double height = 0.0;     // meters above local ground estimate
    double slope_deg = 0.0;  // surface normal vs world up
    double roughness = 0.0;  // RMS point-to-plane residual, meters
    bool valid = false;
};

enum class SeedLabel : uint8_t { UNKNOWN = 0, POS = 1, NEG = 2 };

enum class SeedPixel : uint8_t { NONE = 0, POS = 1, NEG = 2 };

struct SeedImage {
    Image<SeedPixel> labels;
    DepthImage depth;  // 0 where labels == NONE
};

// Uniform grid hash for fixed-radius neighbor queries.
class RadiusSearch {
  public:
    RadiusSearch(const std::vector<Vec3>& pts, double radius) : pts_(pts), radius_(radius) {
        cells_.reserve(pts.size());
        for (size_t i = 0; i < pts.size(); ++i) cells_[key(pts[i])].push_back(static_cast<int>(i));
    }

    std::vector<int> query(const Vec3& p) const {
        std::vector<int> out;
        Eigen::Vector3i c = cell(p);
        double r2 = radius_ * radius_;
        for (int dx = -1; dx <= 1; ++dx)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dz = -1; dz <= 1; ++dz) {
                    auto it = cells_.find(pack(c.x() + dx, c.y() + dy, c.z() + dz));
                    if (it == cells_.end()) continue;
                    for (int idx : it->second)
                        if ((pts_[idx] - p).squaredNorm() <= r2) out.push_back(idx);
                }
        return out;
    }

  private:
    Eigen::Vector3i cell(const Vec3& p) const {
        return {static_cast<int>(std::floor(p.x() / radius_)),
                static_cast<int>(std::floor(p.y() / radius_)),
                static_cast<int>(std::floor(p.z() / radius_))};
    }
    static int64_t pack(int x, int y, int z) {
        return (static_cast<int64_t>(x) << 42) ^ (static_cast<int64_t>(y) << 21) ^ z;
    }
    int64_t key(const Vec3& p) const {
        Eigen::Vector3i c = cell(p);
        return pack(c.x(), c.y(), c.z());
    }

    const std::vector<Vec3>& pts_;
    double radius_;
    std::unordered_map<int64_t, std::vector<int>> cells_;
};

// Least-squares plane fit over the fixed-radius neighborhood of each point
// (world frame, z up). Slope comes from the upward-oriented normal, roughness
// is the RMS point-to-plane residual, and height is the point's z minus the
// 10th-percentile neighbor z (local ground estimate). Points with too few
// neighbors or a degenerate neighborhood are invalid.
inline std::vector<PointFeatures> compute_point_features(const std::vector<Vec3>& cloud,
                                                         double radius, int min_neighbors) {
    if (radius <= 0) throw ConfigError("compute_point_features: radius must be positive");
    std::vector<PointFeatures> out(cloud.size());
    RadiusSearch search(cloud, radius);

    std::vector<double> zs;
    for (size_t i = 0; i < cloud.size(); ++i) {
        std::vector<int> nb = search.query(cloud[i]);
        if (static_cast<int>(nb.size()) < min_neighbors) continue;

        Vec3 centroid = Vec3::Zero();
        for (int j : nb) centroid += cloud[j];
        centroid /= static_cast<double>(nb.size());

        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (int j : nb) {
            Vec3 d = cloud[j] - centroid;
            cov += d * d.transpose();
        }
        cov /= static_cast<double>(nb.size());

        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
        // rank < 2 neighborhoods (near-collinear) are degenerate
        if (eig.eigenvalues()(1) < 1e-12) continue;

        Vec3 normal = eig.eigenvectors().col(0);
        if (normal.z() < 0) normal = -normal;

        double sq = 0.0;
        for (int j : nb) {
            double r = normal.dot(cloud[j] - centroid);
            sq += r * r;
        }

        zs.clear();
        for (int j : nb) zs.push_back(cloud[j].z());
        size_t k = static_cast<size_t>(std::floor(0.1 * (zs.size() - 1)));
        std::nth_element(zs.begin(), zs.begin() + k, zs.end());

        PointFeatures& f = out[i];
        f.slope_deg = std::acos(std::clamp(normal.z(), -1.0, 1.0)) * 180.0 / M_PI;
        f.roughness = std::sqrt(sq / static_cast<double>(nb.size()));
        f.height = cloud[i].z() - zs[k];
        f.valid = true;
    }
    return out;
}

struct SeedThresholds {
    double slope_max_deg = 25.0;  // POS gate
    double height_max = 0.15;
    double roughness_max = 0.05;
    double slope_neg_deg = 45.0;  // NEG gate (hysteresis band above POS gates)
    double height_neg = 0.4;

    void validate() const {
        if (slope_max_deg <= 0 || height_max <= 0 || roughness_max <= 0)
            throw ConfigError("SeedThresholds: POS thresholds must be positive");
        if (slope_neg_deg < slope_max_deg || height_neg < height_max)
            throw ConfigError("SeedThresholds: NEG thresholds must not undercut POS thresholds");
    }
};

// POS iff all POS gates hold (<= convention); NEG iff slope or height exceeds
// the NEG gate; the hysteresis band in between abstains as UNKNOWN.
inline std::vector<SeedLabel> classify_seeds(const std::vector<PointFeatures>& features,
                                             const SeedThresholds& th) {
    th.validate();
    std::vector<SeedLabel> out(features.size(), SeedLabel::UNKNOWN);
    for (size_t i = 0; i < features.size(); ++i) {
        const PointFeatures& f = features[i];
        if (!f.valid) continue;
        if (f.slope_deg <= th.slope_max_deg && std::abs(f.height) <= th.height_max &&
            f.roughness <= th.roughness_max)
            out[i] = SeedLabel::POS;
        else if (f.slope_deg > th.slope_neg_deg || f.height > th.height_neg)
            out[i] = SeedLabel::NEG;
    }
    return out;
}

// Sparse seed image: labeled points projected through the camera; per pixel
// NEG beats POS, the nearer point provides the depth, UNKNOWN never writes.
inline SeedImage project_seeds(const std::vector<Vec3>& cloud_lidar,
                               const std::vector<SeedLabel>& seeds, const Extrinsics& ext,
                               const CameraIntrinsics& K) {
    if (cloud_lidar.size() != seeds.size())
        throw ShapeError("project_seeds: cloud and seed arrays differ in length");
    SeedImage img;
    img.labels = Image<SeedPixel>(K.height, K.width, SeedPixel::NONE);
    img.depth = DepthImage(K.height, K.width, 0.0);

    for (size_t i = 0; i < cloud_lidar.size(); ++i) {
        if (seeds[i] == SeedLabel::UNKNOWN) continue;
        Vec3 pc = ext.T_cam_lidar * cloud_lidar[i];
        if (pc.z() <= 1e-6) continue;
        PixelPoint px = project_point(pc, K);
        int u = static_cast<int>(std::floor(px.u));
        int v = static_cast<int>(std::floor(px.v));
        if (!img.labels.in_bounds(v, u)) continue;

        SeedPixel incoming = seeds[i] == SeedLabel::POS ? SeedPixel::POS : SeedPixel::NEG;
        SeedPixel& cur = img.labels.at(v, u);
        double& d = img.depth.at(v, u);
        if (cur == SeedPixel::NONE) {
            cur = incoming;
            d = px.depth;
        } else {
            if (incoming == SeedPixel::NEG && cur == SeedPixel::POS) cur = SeedPixel::NEG;
            if (px.depth < d) d = px.depth;
        }
    }
    return img;
}

}  // namespace travkit
