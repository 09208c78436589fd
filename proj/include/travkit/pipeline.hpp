#pragma once

#include <json.hpp>

#include "travkit/config.hpp"
#include "travkit/dataset.hpp"
#include "travkit/fusion.hpp"
#include "travkit/prompt.hpp"
#include "travkit/segmentation.hpp"

// Per-frame labeling: footprint projection, geometric seeds, prompt
// construction, mask retrieval, and fusion into a pseudo-label image.

namespace travkit {

struct FrameArtifacts {
    FootprintMask footprint;
    SeedImage seeds;
    PromptSet prompts;
    std::vector<MaskImage> accepted;
    LabelImage labels;
    std::string skip_reason;  // empty when the frame was labeled
    nlohmann::json provenance;

    bool labeled() const { return skip_reason.empty(); }
};

// Seed image + depth image from the raw sweep: features in the world frame,
// projection in the camera frame.
inline SeedImage compute_seed_image(const std::vector<Vec3>& cloud_lidar, const Pose& base_pose,
                                    const Calibration& calib, const PipelineConfig& cfg,
                                    std::vector<PointFeatures>* features_out = nullptr) {
    Eigen::Isometry3d T_world_lidar =
        base_pose.isometry() * calib.ext.T_base_cam * calib.ext.T_cam_lidar;
    std::vector<Vec3> world;
    world.reserve(cloud_lidar.size());
    for (const auto& p : cloud_lidar) world.push_back(T_world_lidar * p);
    auto feats = compute_point_features(world, cfg.prior_radius, cfg.prior_min_neighbors);
    auto labels = classify_seeds(feats, cfg.prior);
    if (features_out) *features_out = std::move(feats);
    return project_seeds(cloud_lidar, labels, calib.ext, calib.K);
}

inline Pose camera_pose(const Pose& base_pose, const Calibration& calib) {
    Eigen::Isometry3d T = base_pose.isometry() * calib.ext.T_base_cam;
    Pose cam;
    cam.t = base_pose.t;
    cam.rotation = Quat(T.linear());
    cam.translation = T.translation();
    return cam;
}

inline FrameArtifacts label_frame(const std::string& frame_id, const std::vector<Vec3>& cloud_lidar,
                                  const Pose& base_pose, const Trajectory& traj,
                                  const Calibration& calib, const PipelineConfig& cfg,
                                  SegmentationBackend& backend) {
    FrameArtifacts art;
    art.provenance["frame_id"] = frame_id;

    art.seeds = compute_seed_image(cloud_lidar, base_pose, calib, cfg);
    DepthImage depth = build_depth_image(cloud_lidar, calib.ext, calib.K);

    std::vector<Quad> quads;
    try {
        quads = footprint_quads(traj, cfg.footprint, camera_pose(base_pose, calib),
                                cfg.footprint_horizon, cfg.footprint_stride,
                                cfg.footprint_include_past);
    } catch (const OutOfRangeError&) {
        art.skip_reason = "NoTrajectoryCoverage";
        art.provenance["skip_reason"] = art.skip_reason;
        return art;
    }
    art.footprint = render_footprint_mask(quads, calib.K, depth, cfg.footprint_occl_margin,
                                          cfg.footprint_oversample);

    auto pos = sample_positive_prompts(art.footprint, art.seeds, cfg.prompt.k_pos,
                                       cfg.prompt.min_dist);
    MaskImage exclusion =
        dilate_where(calib.K.height, calib.K.width, cfg.prompt.footprint_dilate,
                     [&](int v, int u) { return art.footprint.mask.at(v, u) != 0; });
    auto neg = sample_negative_prompts(art.seeds, exclusion, cfg.prompt.k_neg, cfg.prompt.min_dist);
    try {
        art.prompts = refine_candidates(pos, neg, calib.K, cfg.prompt.border_margin,
                                        cfg.prompt.dedupe_radius, frame_id);
    } catch (const EmptyPromptsError&) {
        art.skip_reason = "EmptyPrompts";
        art.provenance["skip_reason"] = art.skip_reason;
        return art;
    }
    for (const auto& p : art.prompts.prompts)
        art.provenance["prompts"].push_back(
            {{"u", p.u},
             {"v", p.v},
             {"polarity", p.polarity == Polarity::POSITIVE ? "pos" : "neg"},
             {"source", p.source == PromptSource::FOOTPRINT ? "footprint" : "geom_seed"}});

    std::vector<SegmentationResult> results;
    try {
        for (const auto& req : one_query_per_positive(art.prompts))
            results.push_back(backend.segment(req));
    } catch (const BackendUnavailableError&) {
        art.skip_reason = "BackendUnavailable";
        art.provenance["skip_reason"] = art.skip_reason;
        return art;
    }

    std::vector<std::pair<int, int>> idx;
    art.accepted = select_masks(results, art.prompts, cfg.fusion, &idx);
    art.provenance["accepted_masks"] = nlohmann::json::array();
    for (auto [req, m] : idx) art.provenance["accepted_masks"].push_back({{"request", req}, {"mask", m}});

    art.labels = cleanup(fuse_labels(art.accepted, art.footprint, art.seeds, cfg.fusion_r_neg),
                         cfg.fusion_min_component);
    return art;
}

// Assemble a network sample from dataset files plus recomputed geometric
// inputs. `labels_dir` may point outside the dataset (e.g. a label run's
// output); empty paths leave pseudo/gt empty.
inline TrainSample make_train_sample(const Dataset& ds, const std::string& id,
                                     const PipelineConfig& cfg, const fs::path& labels_dir) {
    TrainSample s;
    s.id = id;

    Image<Rgb8> rgb = load_png_rgb(ds.image_path(id).string());
    if (rgb.height() != ds.calib.K.height || rgb.width() != ds.calib.K.width)
        throw ShapeError("image size does not match calibration for frame " + id);
    s.rgb = Tensor(3, rgb.height(), rgb.width());
    for (int v = 0; v < rgb.height(); ++v)
        for (int u = 0; u < rgb.width(); ++u)
            for (int c = 0; c < 3; ++c)
                s.rgb.m(c, v * rgb.width() + u) = rgb.at(v, u)[c] / 255.0;

    std::vector<Vec3> cloud;
    std::vector<float> intensity;
    load_cloud_bin(ds.cloud_path(id).string(), cloud, intensity);
    Pose base_pose = interpolate_pose(ds.poses, ds.frame_time(id));
    std::vector<PointFeatures> feats;
    s.seeds = compute_seed_image(cloud, base_pose, ds.calib, cfg, &feats);
    s.geo = build_geometric_input(cloud, ds.calib.ext, ds.calib.K, feats, cfg.net_norm);

    if (!labels_dir.empty()) {
        fs::path label = labels_dir / (id + ".png");
        if (fs::exists(label)) s.pseudo = load_png_gray(label.string());
    }
    if (fs::exists(ds.gt_path(id))) s.gt = load_png_gray(ds.gt_path(id).string());
    return s;
}

}  // namespace travkit
