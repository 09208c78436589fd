#pragma once

#include <cstdint>
#include <fstream>

#include <json.hpp>

#include "travkit/net.hpp"

// Deterministic training loop, Adam, checkpoint IO and the evaluation
// metrics (per-class IoU, precision/recall/F1) with ignore-index handling.

namespace travkit {

struct MetricsReport {
    double iou_trav = 0, iou_nontrav = 0, miou = 0;
    double precision = 0, recall = 0, f1 = 0;
    int64_t n_eval_pixels = 0;

    nlohmann::json to_json() const {
        return {{"iou_trav", iou_trav},   {"iou_nontrav", iou_nontrav}, {"miou", miou},
                {"precision", precision}, {"recall", recall},           {"f1", f1},
                {"n_eval_pixels", n_eval_pixels}};
    }
};

// Pooled (micro) TP/FP/FN accumulation; frame-by-frame accumulation equals
// computing on the concatenated batch.
struct MetricsAccumulator {
    int64_t tp[2] = {0, 0}, fp[2] = {0, 0}, fn[2] = {0, 0};
    int64_t n_eval = 0;

    void add(const MaskImage& pred, const LabelImage& gt) {
        require_same_size(pred, gt, "compute_metrics");
        for (size_t i = 0; i < gt.size(); ++i) {
            uint8_t g = gt.raw()[i];
            if (g == kIgnore) continue;
            uint8_t p = pred.raw()[i] ? 1 : 0;
            ++n_eval;
            for (int c = 0; c < 2; ++c) {
                if (p == c && g == c) ++tp[c];
                if (p == c && g != c) ++fp[c];
                if (p != c && g == c) ++fn[c];
            }
        }
    }

    MetricsReport report() const {
        if (n_eval == 0) throw EmptyEvaluationError("no non-ignore pixels to evaluate");
        // empty denominator: 1.0 when the class is absent from both pred and
        // gt, else 0.0
        auto ratio = [](int64_t num, int64_t den) {
            return den == 0 ? 1.0 : static_cast<double>(num) / den;
        };
        MetricsReport r;
        r.iou_trav = ratio(tp[1], tp[1] + fp[1] + fn[1]);
        r.iou_nontrav = ratio(tp[0], tp[0] + fp[0] + fn[0]);
        r.miou = (r.iou_trav + r.iou_nontrav) / 2.0;
        r.precision = ratio(tp[1], tp[1] + fp[1]);
        r.recall = ratio(tp[1], tp[1] + fn[1]);
        r.f1 = (r.precision + r.recall) == 0 ? 0.0
                                             : 2.0 * r.precision * r.recall / (r.precision + r.recall);
        r.n_eval_pixels = n_eval;
        return r;
    }
};

inline MetricsReport compute_metrics(const MaskImage& pred, const LabelImage& gt) {
    MetricsAccumulator acc;
    acc.add(pred, gt);
    return acc.report();
}

// --- Adam over the parameter map ---

class AdamOptimizer {
  public:
    AdamOptimizer(std::map<std::string, NodePtr>& params, double lr, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8)
        : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (auto& [name, p] : params_) {
            m_[name] = Eigen::MatrixXd::Zero(p->value.m.rows(), p->value.m.cols());
            v_[name] = Eigen::MatrixXd::Zero(p->value.m.rows(), p->value.m.cols());
        }
    }

    void zero_grads() {
        for (auto& [name, p] : params_) p->grad.m.setZero();
    }

    void step() {
        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, t_);
        double bc2 = 1.0 - std::pow(beta2_, t_);
        for (auto& [name, p] : params_) {
            Eigen::MatrixXd& m = m_[name];
            Eigen::MatrixXd& v = v_[name];
            m = beta1_ * m + (1.0 - beta1_) * p->grad.m;
            v = beta2_ * v + (1.0 - beta2_) * p->grad.m.cwiseProduct(p->grad.m);
            p->value.m.array() -=
                lr_ * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps_);
        }
    }

  private:
    std::map<std::string, NodePtr>& params_;
    double lr_, beta1_, beta2_, eps_;
    int t_ = 0;
    std::map<std::string, Eigen::MatrixXd> m_, v_;
};

// --- checkpoints: JSON header + raw little-endian doubles, bit-exact ---

inline void save_checkpoint(const TravNet& net, const nlohmann::json& config_echo,
                            const std::string& path) {
    nlohmann::json header;
    header["config"] = config_echo;
    header["net"] = {{"base_width", net.config().base_width},
                     {"stages", net.config().stages},
                     {"disable_rgb_stream", net.config().disable_rgb_stream},
                     {"disable_geo_stream", net.config().disable_geo_stream},
                     {"seed", net.config().seed}};
    nlohmann::json plist = nlohmann::json::array();
    for (const auto& [name, p] : net.params())
        plist.push_back({{"name", name},
                         {"rows", p->value.m.rows()},
                         {"cols", p->value.m.cols()}});
    header["params"] = plist;

    std::string hdr = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write checkpoint: " + path);
    uint64_t hlen = hdr.size();
    out.write("TKCP", 4);
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(hdr.data(), hdr.size());
    for (const auto& [name, p] : net.params())
        out.write(reinterpret_cast<const char*>(p->value.m.data()),
                  static_cast<std::streamsize>(p->value.m.size() * sizeof(double)));
}

struct Checkpoint {
    NetConfig net_config;
    nlohmann::json config_echo;
    std::map<std::string, Eigen::MatrixXd> params;
};

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (std::string(magic, 4) != "TKCP") throw ConfigError("bad checkpoint magic: " + path);
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 8);
    std::string hdr(hlen, '\0');
    in.read(hdr.data(), static_cast<std::streamsize>(hlen));
    nlohmann::json header = nlohmann::json::parse(hdr);

    Checkpoint ck;
    ck.config_echo = header["config"];
    ck.net_config.base_width = header["net"]["base_width"].get<int>();
    ck.net_config.stages = header["net"]["stages"].get<int>();
    ck.net_config.disable_rgb_stream = header["net"]["disable_rgb_stream"].get<bool>();
    ck.net_config.disable_geo_stream = header["net"]["disable_geo_stream"].get<bool>();
    ck.net_config.seed = header["net"]["seed"].get<uint64_t>();
    for (const auto& pj : header["params"]) {
        Eigen::MatrixXd m(pj["rows"].get<long>(), pj["cols"].get<long>());
        in.read(reinterpret_cast<char*>(m.data()),
                static_cast<std::streamsize>(m.size() * sizeof(double)));
        ck.params[pj["name"].get<std::string>()] = std::move(m);
    }
    if (!in) throw ConfigError("truncated checkpoint: " + path);
    return ck;
}

inline TravNet net_from_checkpoint(const Checkpoint& ck) {
    TravNet net(ck.net_config);
    for (auto& [name, p] : net.params()) {
        auto it = ck.params.find(name);
        if (it == ck.params.end()) throw ConfigError("checkpoint missing parameter " + name);
        if (it->second.rows() != p->value.m.rows() || it->second.cols() != p->value.m.cols())
            throw ConfigError("checkpoint shape mismatch for " + name);
        p->value.m = it->second;
    }
    return net;
}

// --- training ---

struct TrainSample {
    std::string id;
    Tensor rgb;          // 3 x H x W in [0,1]
    GeometricImage geo;
    LabelImage pseudo;   // training target
    SeedImage seeds;
    LabelImage gt;       // optional (empty when absent)
};

struct TrainConfig {
    uint64_t seed = 0;
    int epochs = 10;
    int batch_size = 2;
    double learning_rate = 1e-3;
    LossWeights weights;
    int base_width = 32;
    int stages = 4;
    bool disable_rgb_stream = false;
    bool disable_geo_stream = false;
    bool disable_sparse_loss = false;

    void validate() const {
        if (epochs <= 0 || batch_size <= 0 || learning_rate <= 0)
            throw ConfigError("TrainConfig: counts and rates must be positive");
        weights.validate();
    }

    NetConfig net_config() const {
        return {base_width, stages, disable_rgb_stream, disable_geo_stream, seed};
    }
};

inline MaskImage threshold_logits(const Tensor& logits, int h, int w) {
    MaskImage pred(h, w, 0);
    for (int p = 0; p < h * w; ++p)
        if (logits.m(0, p) > 0.0) pred.raw()[p] = 1;  // sigma(z) > 0.5
    return pred;
}

struct EpochLog {
    int epoch = 0;
    LossValues loss;
    MetricsReport metrics;
    bool has_metrics = false;

    nlohmann::json to_json(bool sparse_enabled) const {
        nlohmann::json j{{"epoch", epoch},
                         {"L_fused", loss.fused},
                         {"L_rgb", loss.rgb},
                         {"L_geo", loss.geo},
                         {"total", loss.total}};
        if (sparse_enabled) j["L_sparse"] = loss.sparse;
        if (has_metrics) {
            for (auto& [k, v] : metrics.to_json().items()) j[k] = v;
        }
        return j;
    }
};

// Sequential full-pass training: gradients accumulate over each mini-batch,
// then one Adam step. Fixed seed gives a bit-reproducible parameter
// trajectory. NaN losses abort naming the first offending component.
inline std::vector<EpochLog> train(TravNet& net, const TrainConfig& cfg,
                                   const std::vector<TrainSample>& dataset,
                                   const std::vector<TrainSample>* val = nullptr,
                                   int max_steps = 0) {
    cfg.validate();
    if (dataset.empty()) throw ConfigError("train: empty dataset");

    LossWeights w = cfg.weights;
    if (cfg.disable_sparse_loss) w.w_sparse = 0.0;

    AdamOptimizer opt(net.params(), cfg.learning_rate);
    std::vector<EpochLog> logs;
    int steps = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        LossValues epoch_loss;
        int n_batches = 0;
        for (size_t i = 0; i < dataset.size(); i += cfg.batch_size) {
            opt.zero_grads();
            size_t end = std::min(dataset.size(), i + cfg.batch_size);
            LossValues batch_loss;
            for (size_t j = i; j < end; ++j) {
                const TrainSample& s = dataset[j];
                ModelOutputs out = net.forward(s.rgb, s.geo);
                LossValues lv = travnet_loss(out, s.pseudo, s.seeds, w, true);
                auto check = [&](double x, const char* name) {
                    if (!std::isfinite(x))
                        throw Error(std::string("train: non-finite loss component ") + name +
                                    " on frame " + s.id);
                };
                check(lv.fused, "L_fused");
                check(lv.rgb, "L_rgb");
                check(lv.geo, "L_geo");
                check(lv.sparse, "L_sparse");
                backward({out.fused_logits, out.rgb_logits, out.geo_logits});
                batch_loss.fused += lv.fused;
                batch_loss.rgb += lv.rgb;
                batch_loss.geo += lv.geo;
                batch_loss.sparse += lv.sparse;
            }
            opt.step();
            ++steps;
            double bn = static_cast<double>(end - i);
            epoch_loss.fused += batch_loss.fused / bn;
            epoch_loss.rgb += batch_loss.rgb / bn;
            epoch_loss.geo += batch_loss.geo / bn;
            epoch_loss.sparse += batch_loss.sparse / bn;
            ++n_batches;
            if (max_steps > 0 && steps >= max_steps) break;
        }
        EpochLog log;
        log.epoch = epoch;
        log.loss.fused = epoch_loss.fused / n_batches;
        log.loss.rgb = epoch_loss.rgb / n_batches;
        log.loss.geo = epoch_loss.geo / n_batches;
        log.loss.sparse = epoch_loss.sparse / n_batches;
        // Recompose the total from the averaged components so the logged
        // values satisfy total = fused + lambda_aux*(rgb+geo) + w_sparse*sparse
        // exactly, regardless of per-sample summation order.
        log.loss.total = log.loss.fused + w.lambda_aux * (log.loss.rgb + log.loss.geo) +
                         w.w_sparse * log.loss.sparse;
        if (val && !val->empty()) {
            MetricsAccumulator acc;
            for (const auto& s : *val) {
                ModelOutputs out = net.forward(s.rgb, s.geo);
                acc.add(threshold_logits(out.fused_logits->value, s.rgb.h, s.rgb.w), s.pseudo);
            }
            log.metrics = acc.report();
            log.has_metrics = true;
        }
        logs.push_back(log);
        if (max_steps > 0 && steps >= max_steps) break;
    }
    return logs;
}

// Thresholded fused logits scored against the chosen reference labels.
inline MetricsReport evaluate(TravNet& net, const std::vector<TrainSample>& dataset,
                              bool against_gt) {
    MetricsAccumulator acc;
    for (const auto& s : dataset) {
        const LabelImage& ref = against_gt ? s.gt : s.pseudo;
        if (ref.empty()) throw ConfigError("evaluate: missing reference labels for frame " + s.id);
        ModelOutputs out = net.forward(s.rgb, s.geo);
        acc.add(threshold_logits(out.fused_logits->value, s.rgb.h, s.rgb.w), ref);
    }
    return acc.report();
}

}  // namespace travkit
