#include <CLI11.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <iostream>
#include <thread>

#include "travkit/pipeline.hpp"
#include "travkit/synth.hpp"

namespace travkit {
namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0, kExitFatal = 1, kExitPartial = 2;

PipelineConfig load_config_opt(const std::string& path) {
    return path.empty() ? PipelineConfig{} : load_config(path);
}

void echo_config(const PipelineConfig& cfg, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    save_config(cfg, (out_dir / "config.yaml").string());
}

Image<int32_t> regions_from_gt(const LabelImage& gt) {
    Image<int32_t> regions(gt.height(), gt.width(), 0);
    int32_t next = 1;
    for (uint8_t cls : {kNonTraversable, kTraversable})
        for (const auto& comp : connected_components(gt, cls)) {
            for (auto [v, u] : comp) regions.at(v, u) = next;
            ++next;
        }
    return regions;
}

// backend spec: "oracle" (needs gt/) or "exec:CMD" speaking the NDJSON wire
// protocol on its stdin/stdout
struct BackendHandle {
    std::unique_ptr<SegmentationBackend> backend;
    FILE* to_child = nullptr;
    FILE* from_child = nullptr;
    pid_t child = -1;

    BackendHandle() = default;
    BackendHandle(BackendHandle&& o) noexcept
        : backend(std::move(o.backend)),
          to_child(std::exchange(o.to_child, nullptr)),
          from_child(std::exchange(o.from_child, nullptr)),
          child(std::exchange(o.child, -1)) {}
    BackendHandle& operator=(BackendHandle&&) = delete;

    ~BackendHandle() {
        if (to_child) fclose(to_child);
        if (from_child) fclose(from_child);
        if (child > 0) waitpid(child, nullptr, 0);
    }
};

BackendHandle make_backend(const std::string& spec, const Dataset& ds) {
    BackendHandle h;
    if (spec == "oracle") {
        auto oracle = std::make_unique<OracleBackend>();
        for (const auto& id : ds.frame_ids) {
            if (!fs::exists(ds.gt_path(id)))
                throw ConfigError("oracle backend needs gt/" + id + ".png");
            oracle->register_regions(id, regions_from_gt(load_png_gray(ds.gt_path(id).string())));
        }
        h.backend = std::move(oracle);
        return h;
    }
    if (spec.rfind("exec:", 0) == 0) {
        std::string cmd = spec.substr(5);
        int to_pipe[2], from_pipe[2];
        if (pipe(to_pipe) != 0 || pipe(from_pipe) != 0)
            throw BackendUnavailableError("cannot create backend pipes");
        pid_t pid = fork();
        if (pid < 0) throw BackendUnavailableError("cannot fork backend process");
        if (pid == 0) {
            dup2(to_pipe[0], 0);
            dup2(from_pipe[1], 1);
            close(to_pipe[0]);
            close(to_pipe[1]);
            close(from_pipe[0]);
            close(from_pipe[1]);
            execl("/bin/sh", "sh", "-c", cmd.c_str(), static_cast<char*>(nullptr));
            _exit(127);
        }
        close(to_pipe[0]);
        close(from_pipe[1]);
        h.child = pid;
        h.to_child = fdopen(to_pipe[1], "w");
        h.from_child = fdopen(from_pipe[0], "r");
        h.backend = std::make_unique<WireBackend>(h.from_child, h.to_child, ds.calib.K.height,
                                                  ds.calib.K.width);
        return h;
    }
    throw ConfigError("unknown backend '" + spec + "' (expected oracle or exec:CMD)");
}

int cmd_label(const std::string& root, const std::string& config_path, const std::string& out,
              const std::string& backend_spec, bool force) {
    PipelineConfig cfg = load_config_opt(config_path);
    Dataset ds = open_dataset(root);
    BackendHandle backend = make_backend(backend_spec, ds);

    fs::path out_dir(out);
    fs::create_directories(out_dir / "labels");
    fs::create_directories(out_dir / "provenance");
    echo_config(cfg, out_dir);

    int labeled = 0, skipped = 0, reused = 0;
    nlohmann::json tally;
    for (const auto& id : ds.frame_ids) {
        fs::path label_file = out_dir / "labels" / (id + ".png");
        if (!force && fs::exists(label_file)) {
            ++reused;
            continue;
        }
        std::vector<Vec3> cloud;
        std::vector<float> intensity;
        load_cloud_bin(ds.cloud_path(id).string(), cloud, intensity);
        Pose base_pose;
        FrameArtifacts art;
        try {
            base_pose = interpolate_pose(ds.poses, ds.frame_time(id));
            art = label_frame(id, cloud, base_pose, ds.poses, ds.calib, cfg, *backend.backend);
        } catch (const OutOfRangeError&) {
            art.skip_reason = "NoTrajectoryCoverage";
            art.provenance = {{"frame_id", id}, {"skip_reason", art.skip_reason}};
        }
        if (art.labeled()) {
            save_png_gray(art.labels, label_file.string());
            ++labeled;
        } else {
            ++skipped;
            tally[art.skip_reason] = tally.value(art.skip_reason, 0) + 1;
            std::cerr << "skipped frame " << id << ": " << art.skip_reason << "\n";
        }
        std::ofstream prov(out_dir / "provenance" / (id + ".json"));
        prov << art.provenance.dump(2) << "\n";
    }
    nlohmann::json summary{
        {"labeled", labeled}, {"skipped", skipped}, {"reused", reused}, {"skip_reasons", tally}};
    std::ofstream(out_dir / "label_summary.json") << summary.dump(2) << "\n";
    std::cout << summary.dump(2) << "\n";
    return skipped == 0 ? kExitOk : kExitPartial;
}

std::vector<TrainSample> load_samples(const Dataset& ds, const PipelineConfig& cfg,
                                      const std::string& labels_dir, bool require_labels) {
    fs::path dir;
    if (!labels_dir.empty())
        dir = labels_dir;
    else if (fs::is_directory(fs::path(ds.root) / "labels"))
        dir = fs::path(ds.root) / "labels";
    else if (fs::is_directory(fs::path(ds.root) / "gt"))
        dir = fs::path(ds.root) / "gt";

    if (require_labels) {
        std::vector<std::string> missing;
        for (const auto& id : ds.frame_ids)
            if (dir.empty() || !fs::exists(dir / (id + ".png"))) missing.push_back(id);
        if (!missing.empty()) {
            std::string head;
            for (size_t i = 0; i < missing.size() && i < 5; ++i) head += " " + missing[i];
            throw ConfigError("missing labels for " + std::to_string(missing.size()) +
                              " frames, first:" + head);
        }
    }
    std::vector<TrainSample> out;
    for (const auto& id : ds.frame_ids) out.push_back(make_train_sample(ds, id, cfg, dir));
    return out;
}

int cmd_train(const std::string& root, const std::string& config_path, const std::string& out,
              const std::string& labels_dir, int seed_override) {
    PipelineConfig cfg = load_config_opt(config_path);
    if (seed_override >= 0) cfg.train.seed = static_cast<uint64_t>(seed_override);
    Dataset ds = open_dataset(root);
    auto samples = load_samples(ds, cfg, labels_dir, true);

    fs::path out_dir(out);
    echo_config(cfg, out_dir);
    TrainConfig tc = cfg.train_config();
    TravNet net(cfg.net_config());
    auto logs = train(net, tc, samples);

    std::ofstream log_out(out_dir / "train_log.jsonl");
    for (const auto& l : logs) log_out << l.to_json(!tc.disable_sparse_loss).dump() << "\n";
    nlohmann::json echo{{"config_yaml", materialize_config(cfg)}};
    save_checkpoint(net, echo, (out_dir / "checkpoint.bin").string());
    std::cout << "trained " << logs.size() << " epochs, final total loss "
              << logs.back().loss.total << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& root, const std::string& config_path, const std::string& out,
             const std::string& checkpoint_path, const std::string& labels_dir) {
    PipelineConfig cfg = load_config_opt(config_path);
    Dataset ds = open_dataset(root);

    Checkpoint ck = load_checkpoint(checkpoint_path);
    TravNet net = net_from_checkpoint(ck);
    bool against_gt = fs::is_directory(fs::path(root) / "gt");
    auto samples = load_samples(ds, cfg, labels_dir, !against_gt);

    MetricsReport report = evaluate(net, samples, against_gt);
    nlohmann::json j = report.to_json();
    j["metadata"] = {{"checkpoint", checkpoint_path},
                     {"against_gt", against_gt},
                     {"disable_rgb_stream", ck.net_config.disable_rgb_stream},
                     {"disable_geo_stream", ck.net_config.disable_geo_stream},
                     {"frames", ds.frame_ids.size()}};
    std::cout << j.dump(2) << "\n";
    if (!out.empty()) {
        fs::create_directories(out);
        echo_config(cfg, out);
        std::ofstream(fs::path(out) / "metrics.json") << j.dump(2) << "\n";
    }
    return kExitOk;
}

int cmd_synth(const std::string& out, int seed, int frames, int obstacles,
              const std::string& style, double noise_pixel, double noise_range) {
    SceneSpec spec;
    spec.seed = static_cast<uint64_t>(seed);
    if (frames > 0) spec.frames = frames;
    if (obstacles >= 0) spec.n_obstacles = obstacles;
    if (style == "arc")
        spec.style = TrajStyle::kArc;
    else if (style == "scurve")
        spec.style = TrajStyle::kSCurve;
    else if (style != "straight")
        throw ConfigError("unknown trajectory style: " + style);
    spec.noise_pixel_sigma = noise_pixel;
    spec.noise_range_sigma = noise_range;

    SynthScene scene = generate_scene(spec);
    write_synth_dataset(scene, out);
    std::cout << "wrote " << scene.frames.size() << " frames to " << out << "\n";
    return kExitOk;
}

using Panel = Image<Rgb8>;

Panel colorize_labels(const LabelImage& labels) {
    Panel p(labels.height(), labels.width(), {128, 128, 128});
    for (int v = 0; v < labels.height(); ++v)
        for (int u = 0; u < labels.width(); ++u) {
            if (labels.at(v, u) == kTraversable) p.at(v, u) = {60, 180, 60};
            if (labels.at(v, u) == kNonTraversable) p.at(v, u) = {200, 60, 60};
        }
    return p;
}

int cmd_viz(const std::string& root, const std::string& config_path, const std::string& artifacts,
            const std::string& frame_id, const std::string& pred_path, const std::string& out) {
    PipelineConfig cfg = load_config_opt(config_path);
    Dataset ds = open_dataset(root);
    const std::string& id = frame_id;

    Panel rgb = load_png_rgb(ds.image_path(id).string());
    std::vector<Panel> panels{rgb};

    std::vector<Vec3> cloud;
    std::vector<float> intensity;
    load_cloud_bin(ds.cloud_path(id).string(), cloud, intensity);
    Pose base_pose = interpolate_pose(ds.poses, ds.frame_time(id));

    // footprint overlay (recomputed; deterministic)
    try {
        auto quads = footprint_quads(ds.poses, cfg.footprint, camera_pose(base_pose, ds.calib),
                                     cfg.footprint_horizon, cfg.footprint_stride,
                                     cfg.footprint_include_past);
        DepthImage depth = build_depth_image(cloud, ds.calib.ext, ds.calib.K);
        FootprintMask fp = render_footprint_mask(quads, ds.calib.K, depth,
                                                 cfg.footprint_occl_margin);
        Panel overlay = rgb;
        for (int v = 0; v < overlay.height(); ++v)
            for (int u = 0; u < overlay.width(); ++u) {
                if (fp.mask.at(v, u)) overlay.at(v, u) = {80, 220, 80};
                if (fp.occluded.at(v, u)) overlay.at(v, u) = {220, 220, 60};
            }
        panels.push_back(overlay);
    } catch (const OutOfRangeError&) {
        std::cerr << "warning: no trajectory coverage, footprint panel omitted\n";
    }

    // seed panel
    SeedImage seeds = compute_seed_image(cloud, base_pose, ds.calib, cfg);
    Panel seed_panel(rgb.height(), rgb.width(), {40, 40, 40});
    for (int v = 0; v < rgb.height(); ++v)
        for (int u = 0; u < rgb.width(); ++u) {
            if (seeds.labels.at(v, u) == SeedPixel::POS) seed_panel.at(v, u) = {60, 220, 60};
            if (seeds.labels.at(v, u) == SeedPixel::NEG) seed_panel.at(v, u) = {220, 60, 60};
        }
    panels.push_back(seed_panel);

    // prompt panel from provenance
    fs::path prov_file = fs::path(artifacts) / "provenance" / (id + ".json");
    if (fs::exists(prov_file)) {
        nlohmann::json prov;
        std::ifstream(prov_file) >> prov;
        Panel prompt_panel = rgb;
        for (const auto& p : prov.value("prompts", nlohmann::json::array())) {
            Rgb8 color = p["polarity"] == "pos" ? Rgb8{0, 255, 0} : Rgb8{255, 0, 0};
            int pu = p["u"], pv = p["v"];
            for (int d = -2; d <= 2; ++d) {
                if (prompt_panel.in_bounds(pv, pu + d)) prompt_panel.at(pv, pu + d) = color;
                if (prompt_panel.in_bounds(pv + d, pu)) prompt_panel.at(pv + d, pu) = color;
            }
        }
        panels.push_back(prompt_panel);
    } else {
        std::cerr << "warning: provenance missing, prompt panel omitted\n";
    }

    fs::path label_file = fs::path(artifacts) / "labels" / (id + ".png");
    if (fs::exists(label_file)) {
        panels.push_back(colorize_labels(load_png_gray(label_file.string())));
    } else {
        std::cerr << "warning: label file missing, label panel omitted\n";
    }

    if (!pred_path.empty() && fs::exists(pred_path)) {
        panels.push_back(colorize_labels(load_png_gray(pred_path)));
    } else if (!pred_path.empty()) {
        std::cerr << "warning: prediction missing, prediction panel omitted\n";
    }

    // pack panels in a horizontal strip of the input's dimensions
    Panel composite(rgb.height(), rgb.width() * static_cast<int>(panels.size()), {0, 0, 0});
    for (size_t i = 0; i < panels.size(); ++i)
        for (int v = 0; v < rgb.height(); ++v)
            for (int u = 0; u < rgb.width(); ++u)
                composite.at(v, static_cast<int>(i) * rgb.width() + u) = panels[i].at(v, u);
    save_png_rgb(composite, out);
    std::cout << "wrote " << panels.size() << "-panel composite to " << out << "\n";
    return kExitOk;
}

}  // namespace
}  // namespace travkit

int main(int argc, char** argv) {
    CLI::App app{"traversability labeling and estimation toolkit"};
    app.require_subcommand(1);

    std::string dataset, config, out, backend = "oracle", labels_dir, checkpoint, frame_id,
                pred_path, style = "straight";
    bool force = false;
    int seed = 0, frames = 0, obstacles = -1, seed_override = -1;
    double noise_pixel = 0.0, noise_range = 0.0;

    auto* label = app.add_subcommand("label", "run the automatic labeling pipeline");
    label->add_option("dataset", dataset, "dataset root")->required();
    label->add_option("--config", config, "pipeline config YAML");
    label->add_option("--out", out, "output directory")->required();
    label->add_option("--backend", backend, "oracle or exec:CMD (NDJSON wire protocol)");
    label->add_flag("--force", force, "relabel frames with existing label files");

    auto* train = app.add_subcommand("train", "train the estimation network");
    train->add_option("dataset", dataset, "dataset root")->required();
    train->add_option("--config", config, "pipeline config YAML");
    train->add_option("--out", out, "output directory")->required();
    train->add_option("--labels", labels_dir, "label directory override");
    train->add_option("--seed", seed_override, "training seed override");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("dataset", dataset, "dataset root")->required();
    eval->add_option("--config", config, "pipeline config YAML");
    eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    eval->add_option("--out", out, "output directory");
    eval->add_option("--labels", labels_dir, "label directory override");

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--out", out, "output dataset root")->required();
    synth->add_option("--seed", seed, "scene seed");
    synth->add_option("--frames", frames, "number of frames");
    synth->add_option("--obstacles", obstacles, "number of obstacles");
    synth->add_option("--style", style, "trajectory style: straight|arc|scurve");
    synth->add_option("--noise-pixel", noise_pixel, "RGB noise sigma");
    synth->add_option("--noise-range", noise_range, "LiDAR range noise sigma, meters");

    auto* viz = app.add_subcommand("viz", "compose a per-frame diagnostic figure");
    viz->add_option("dataset", dataset, "dataset root")->required();
    viz->add_option("--config", config, "pipeline config YAML");
    viz->add_option("--artifacts", labels_dir, "label run output directory")->required();
    viz->add_option("--frame", frame_id, "frame id")->required();
    viz->add_option("--pred", pred_path, "prediction label PNG");
    viz->add_option("--out", out, "output PNG")->required();

    CLI11_PARSE(app, argc, argv);
    try {
        if (label->parsed()) return travkit::cmd_label(dataset, config, out, backend, force);
        if (train->parsed()) return travkit::cmd_train(dataset, config, out, labels_dir, seed_override);
        if (eval->parsed()) return travkit::cmd_eval(dataset, config, out, checkpoint, labels_dir);
        if (synth->parsed())
            return travkit::cmd_synth(out, seed, frames, obstacles, style, noise_pixel, noise_range);
        if (viz->parsed())
            return travkit::cmd_viz(dataset, config, labels_dir, frame_id, pred_path, out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return travkit::kExitFatal;
    }
    return travkit::kExitFatal;
}
