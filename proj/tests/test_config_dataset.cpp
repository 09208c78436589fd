#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>

#include "travkit/config.hpp"
#include "travkit/pipeline.hpp"

using namespace travkit;
namespace fsys = std::filesystem;

namespace {

struct TempDir {
    fsys::path path;
    TempDir() {
        path = fsys::temp_directory_path() /
               ("travkit_test_" + std::to_string(std::random_device{}()));
        fsys::create_directories(path);
    }
    ~TempDir() { fsys::remove_all(path); }
};

std::string slurp(const fsys::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("config defaults, loading, and unknown-key rejection") {
    TempDir tmp;
    SECTION("empty file gives defaults") {
        std::ofstream(tmp.path / "c.yaml") << "";
        PipelineConfig cfg = load_config((tmp.path / "c.yaml").string());
        CHECK(cfg.footprint_horizon == 5.0);
        CHECK(cfg.prior.slope_max_deg == 25.0);
        CHECK(cfg.prompt.k_pos == 8);
        CHECK(cfg.fusion.score_min == 0.8);
        CHECK(cfg.net_base_width == 32);
        CHECK(cfg.train.weights.lambda_aux == 0.4);
    }
    SECTION("partial override keeps other defaults") {
        std::ofstream(tmp.path / "c.yaml") << "prior:\n  radius: 0.7\nnet:\n  stages: 2\n";
        PipelineConfig cfg = load_config((tmp.path / "c.yaml").string());
        CHECK(cfg.prior_radius == 0.7);
        CHECK(cfg.net_stages == 2);
        CHECK(cfg.prior_min_neighbors == 8);
        CHECK(cfg.net_base_width == 32);
    }
    SECTION("unknown keys are rejected with the key name") {
        std::ofstream(tmp.path / "c.yaml") << "prior:\n  radius_m: 0.7\n";
        CHECK_THROWS_WITH(load_config((tmp.path / "c.yaml").string()),
                          Catch::Matchers::ContainsSubstring("prior.radius_m"));
        std::ofstream(tmp.path / "d.yaml") << "priors:\n  radius: 0.7\n";
        CHECK_THROWS_AS(load_config((tmp.path / "d.yaml").string()), ConfigError);
    }
    SECTION("bad value types are rejected") {
        std::ofstream(tmp.path / "c.yaml") << "prior:\n  radius: fast\n";
        CHECK_THROWS_AS(load_config((tmp.path / "c.yaml").string()), ConfigError);
    }
    SECTION("missing file is rejected") {
        CHECK_THROWS_AS(load_config((tmp.path / "nope.yaml").string()), ConfigError);
    }
}

TEST_CASE("config round-trip: load(materialize(load(c))) = load(c)") {
    TempDir tmp;
    std::ofstream(tmp.path / "c.yaml") << "footprint:\n  horizon: 3.25\n"
                                       << "prompt:\n  min_dist: 11\n"
                                       << "train:\n  learning_rate: 0.00123\n  seed: 42\n"
                                       << "net:\n  disable_geo_stream: true\n";
    PipelineConfig a = load_config((tmp.path / "c.yaml").string());
    save_config(a, (tmp.path / "m.yaml").string());
    PipelineConfig b = load_config((tmp.path / "m.yaml").string());
    CHECK(materialize_config(a) == materialize_config(b));
    CHECK(b.footprint_horizon == 3.25);
    CHECK(b.prompt.min_dist == 11.0);
    CHECK(b.train.learning_rate == 0.00123);
    CHECK(b.train.seed == 42);
    CHECK(b.net_disable_geo_stream);
    // second materialization is a fixed point byte-for-byte
    save_config(b, (tmp.path / "m2.yaml").string());
    CHECK(slurp(tmp.path / "m.yaml") == slurp(tmp.path / "m2.yaml"));
}

TEST_CASE("png round-trips") {
    TempDir tmp;
    std::mt19937_64 rng(4);
    SECTION("rgb") {
        Image<Rgb8> img(13, 17, {0, 0, 0});
        for (auto& px : img.raw())
            px = {static_cast<uint8_t>(rng()), static_cast<uint8_t>(rng()),
                  static_cast<uint8_t>(rng())};
        save_png_rgb(img, (tmp.path / "a.png").string());
        Image<Rgb8> back = load_png_rgb((tmp.path / "a.png").string());
        REQUIRE(back.height() == 13);
        REQUIRE(back.width() == 17);
        CHECK(back.raw() == img.raw());
        // identical pixels give identical bytes
        save_png_rgb(img, (tmp.path / "b.png").string());
        CHECK(slurp(tmp.path / "a.png") == slurp(tmp.path / "b.png"));
    }
    SECTION("gray label values {0,1,255} survive") {
        LabelImage img(9, 9, kIgnore);
        img.at(0, 0) = kTraversable;
        img.at(5, 5) = kNonTraversable;
        save_png_gray(img, (tmp.path / "g.png").string());
        LabelImage back = load_png_gray((tmp.path / "g.png").string());
        CHECK(back == img);
    }
    SECTION("reading a non-PNG fails cleanly") {
        std::ofstream(tmp.path / "x.png") << "not a png";
        CHECK_THROWS_AS(load_png_gray((tmp.path / "x.png").string()), ConfigError);
    }
}

TEST_CASE("calibration and cloud files round-trip") {
    TempDir tmp;
    Calibration c;
    c.K = {60.0, 61.5, 48.25, 32.0, 96, 64};
    c.ext.T_cam_lidar = Eigen::Isometry3d::Identity();
    c.ext.T_cam_lidar.translation() = Vec3(0.1, -0.2, 0.3);
    c.ext.T_cam_lidar.linear() =
        Eigen::AngleAxisd(0.3, Vec3(1, 2, 3).normalized()).toRotationMatrix();
    c.ext.T_base_cam = Eigen::Isometry3d::Identity();
    c.ext.T_base_cam.translation() = Vec3(0.2, 0, 0.3);

    save_calibration(c, (tmp.path / "calib.yaml").string());
    Calibration back = load_calibration((tmp.path / "calib.yaml").string());
    CHECK(back.K.fx == c.K.fx);
    CHECK(back.K.cy == c.K.cy);
    CHECK(back.K.width == 96);
    CHECK(back.ext.T_cam_lidar.matrix() == c.ext.T_cam_lidar.matrix());
    CHECK(back.ext.T_base_cam.matrix() == c.ext.T_base_cam.matrix());

    SECTION("missing key rejected") {
        std::ofstream(tmp.path / "bad.yaml") << "fx: 1.0\nfy: 1.0\n";
        CHECK_THROWS_AS(load_calibration((tmp.path / "bad.yaml").string()), ConfigError);
    }

    SECTION("cloud bin") {
        std::vector<Vec3> cloud = {{1.5, -2.25, 3.0}, {0, 0, 0.125}};
        std::vector<float> inten = {0.25f, 0.75f};
        save_cloud_bin(cloud, inten, (tmp.path / "c.bin").string());
        std::vector<Vec3> cb;
        std::vector<float> ib;
        load_cloud_bin((tmp.path / "c.bin").string(), cb, ib);
        REQUIRE(cb.size() == 2);
        CHECK(cb[0] == cloud[0]);
        CHECK(cb[1] == cloud[1]);
        CHECK(ib == inten);
        std::ofstream(tmp.path / "bad.bin") << "123";
        CHECK_THROWS_AS(load_cloud_bin((tmp.path / "bad.bin").string(), cb, ib), ConfigError);
    }
}

TEST_CASE("synthetic dataset round-trips through the layout") {
    TempDir tmp;
    SceneSpec spec;
    spec.seed = 9;
    spec.frames = 2;
    SynthScene scene = generate_scene(spec);
    std::string root = (tmp.path / "ds").string();
    write_synth_dataset(scene, root);

    Dataset ds = open_dataset(root);
    REQUIRE(ds.frame_ids.size() == 2);
    CHECK(ds.calib.K.width == scene.camera.width);
    CHECK(ds.poses.size() == scene.trajectory.size());

    for (size_t i = 0; i < scene.frames.size(); ++i) {
        const SynthFrame& f = scene.frames[i];
        CHECK(ds.frame_ids[i] == f.id);
        CHECK(ds.frame_time(f.id) == f.t);
        Image<Rgb8> rgb = load_png_rgb(ds.image_path(f.id).string());
        CHECK(rgb.raw() == f.rgb.raw());
        std::vector<Vec3> cloud;
        std::vector<float> inten;
        load_cloud_bin(ds.cloud_path(f.id).string(), cloud, inten);
        REQUIRE(cloud.size() == f.cloud.size());
        // float32 storage quantizes the double-precision cloud
        for (size_t k = 0; k < cloud.size(); ++k)
            CHECK((cloud[k] - f.cloud[k]).norm() < 1e-5 * (1.0 + f.cloud[k].norm()));
        LabelImage gt = load_png_gray(ds.gt_path(f.id).string());
        CHECK(gt == f.gt);
        // interpolated pose at the frame time is the stored pose
        Pose p = interpolate_pose(ds.poses, ds.frame_time(f.id));
        CHECK((p.translation - f.pose.translation).norm() < 1e-12);
    }

    SECTION("missing cloud is rejected") {
        fsys::remove(ds.cloud_path(ds.frame_ids[0]));
        CHECK_THROWS_AS(open_dataset(root), ConfigError);
    }
    SECTION("frame beyond pose file is rejected") {
        std::ofstream((fsys::path(root) / "images" / "999999.png").string()) << "";
        CHECK_THROWS_AS(open_dataset(root), ConfigError);
    }
    SECTION("make_train_sample assembles network inputs") {
        PipelineConfig cfg;
        TrainSample s = make_train_sample(ds, ds.frame_ids[0], cfg, fsys::path(root) / "gt");
        CHECK(s.rgb.c == 3);
        CHECK(s.rgb.h == scene.camera.height);
        CHECK(s.rgb.m.minCoeff() >= 0.0);
        CHECK(s.rgb.m.maxCoeff() <= 1.0);
        CHECK(s.geo.validity.count(1) > 100);
        CHECK(s.pseudo == scene.frames[0].gt);
        CHECK(s.gt == scene.frames[0].gt);
        CHECK(s.seeds.labels.height() == scene.camera.height);
    }
}

TEST_CASE("label_frame end-to-end with the oracle backend") {
    SceneSpec spec;
    spec.seed = 2;
    spec.frames = 2;
    SynthScene scene = generate_scene(spec);

    PipelineConfig cfg;
    cfg.prompt.min_dist = 10;  // scaled for the small synthetic images
    Calibration calib{scene.camera, scene.extrinsics};
    OracleBackend backend;
    for (const SynthFrame& f : scene.frames) backend.register_regions(f.id, f.gt_regions);

    double iou_sum = 0;
    for (const SynthFrame& f : scene.frames) {
        FrameArtifacts art =
            label_frame(f.id, f.cloud, f.pose, scene.trajectory, calib, cfg, backend);
        REQUIRE(art.labeled());
        CHECK(art.provenance["prompts"].size() >= 1);
        long inter = 0, uni = 0;
        for (size_t i = 0; i < f.gt.size(); ++i) {
            if (art.labels.raw()[i] == kIgnore) continue;
            bool a = f.gt.raw()[i] == kTraversable, b = art.labels.raw()[i] == kTraversable;
            inter += a && b;
            uni += a || b;
        }
        REQUIRE(uni > 0);
        iou_sum += static_cast<double>(inter) / uni;

        // determinism: a second run is bit-identical
        FrameArtifacts again =
            label_frame(f.id, f.cloud, f.pose, scene.trajectory, calib, cfg, backend);
        CHECK(again.labels == art.labels);
    }
    CHECK(iou_sum / scene.frames.size() >= 0.95);
}

TEST_CASE("label_frame reports skip reasons") {
    SceneSpec spec;
    spec.seed = 2;
    spec.frames = 1;
    SynthScene scene = generate_scene(spec);
    const SynthFrame& f = scene.frames[0];
    Calibration calib{scene.camera, scene.extrinsics};
    PipelineConfig cfg;
    OracleBackend backend;  // no regions registered

    SECTION("no trajectory coverage") {
        Trajectory short_traj(scene.trajectory.begin(), scene.trajectory.begin() + 2);
        FrameArtifacts art = label_frame(f.id, f.cloud, f.pose, short_traj, calib, cfg, backend);
        CHECK(art.skip_reason == "NoTrajectoryCoverage");
    }
    SECTION("backend unavailable") {
        cfg.prompt.min_dist = 10;
        FrameArtifacts art = label_frame(f.id, f.cloud, f.pose, scene.trajectory, calib, cfg, backend);
        CHECK(art.skip_reason == "BackendUnavailable");
    }
}
