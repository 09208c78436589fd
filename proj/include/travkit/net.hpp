#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "travkit/fusion.hpp"
#include "travkit/prior.hpp"

// Dual-stream multimodal traversability network. Two U-shaped streams (RGB
// and geometric) with separate encoders and auxiliary heads, plus a fusion
// decoder over both streams' skip features. Built on a minimal double
// precision tape autograd so analytic gradients are exact and checkable.

namespace travkit {

// --- tensors and autograd tape ---

struct Tensor {
    int c = 0, h = 0, w = 0;
    Eigen::MatrixXd m;  // c x (h*w), pixel index v*w+u

    Tensor() = default;
    Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_), m(Eigen::MatrixXd::Zero(c_, h_ * w_)) {}
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;
    bool is_param = false;
    std::vector<NodePtr> parents;
    std::function<void()> backward_fn;

    void ensure_grad() {
        if (grad.m.rows() != value.m.rows() || grad.m.cols() != value.m.cols())
            grad = Tensor(value.c, value.h, value.w);
    }
};

inline NodePtr make_node(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->ensure_grad();
    return n;
}

// Reverse-topological sweep from the given roots. Root grads must be seeded.
inline void backward(const std::vector<NodePtr>& roots) {
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::function<void(const NodePtr&)> visit = [&](const NodePtr& n) {
        if (seen.count(n.get())) return;
        seen.insert(n.get());
        for (const auto& p : n->parents) visit(p);
        order.push_back(n.get());
    };
    for (const auto& r : roots) visit(r);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward_fn) (*it)->backward_fn();
}

namespace ops {

inline Eigen::MatrixXd im2col(const Tensor& x, int k) {
    const int pad = (k - 1) / 2;
    Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(x.c * k * k, x.h * x.w);
    for (int ci = 0; ci < x.c; ++ci)
        for (int dv = 0; dv < k; ++dv)
            for (int du = 0; du < k; ++du) {
                int row = (ci * k + dv) * k + du;
                for (int v = 0; v < x.h; ++v) {
                    int sv = v + dv - pad;
                    if (sv < 0 || sv >= x.h) continue;
                    for (int u = 0; u < x.w; ++u) {
                        int su = u + du - pad;
                        if (su < 0 || su >= x.w) continue;
                        cols(row, v * x.w + u) = x.m(ci, sv * x.w + su);
                    }
                }
            }
    return cols;
}

inline void col2im_accum(const Eigen::MatrixXd& dcols, Tensor& dx, int k) {
    const int pad = (k - 1) / 2;
    for (int ci = 0; ci < dx.c; ++ci)
        for (int dv = 0; dv < k; ++dv)
            for (int du = 0; du < k; ++du) {
                int row = (ci * k + dv) * k + du;
                for (int v = 0; v < dx.h; ++v) {
                    int sv = v + dv - pad;
                    if (sv < 0 || sv >= dx.h) continue;
                    for (int u = 0; u < dx.w; ++u) {
                        int su = u + du - pad;
                        if (su < 0 || su >= dx.w) continue;
                        dx.m(ci, sv * dx.w + su) += dcols(row, v * dx.w + u);
                    }
                }
            }
}

// k x k same-padding convolution; weight is (outC, inC*k*k), bias (outC, 1).
inline NodePtr conv(const NodePtr& x, const NodePtr& weight, const NodePtr& bias, int k) {
    const int out_c = static_cast<int>(weight->value.m.rows());
    auto cols = std::make_shared<Eigen::MatrixXd>(im2col(x->value, k));

    Tensor out(out_c, x->value.h, x->value.w);
    out.m = weight->value.m * (*cols);
    out.m.colwise() += bias->value.m.col(0);

    NodePtr n = make_node(std::move(out));
    n->parents = {x, weight, bias};
    Node* raw = n.get();
    n->backward_fn = [raw, x, weight, bias, cols, k] {
        weight->grad.m += raw->grad.m * cols->transpose();
        bias->grad.m.col(0) += raw->grad.m.rowwise().sum();
        Eigen::MatrixXd dcols = weight->value.m.transpose() * raw->grad.m;
        col2im_accum(dcols, x->grad, k);
    };
    return n;
}

inline NodePtr relu(const NodePtr& x) {
    Tensor out = x->value;
    out.m = out.m.cwiseMax(0.0);
    NodePtr n = make_node(std::move(out));
    n->parents = {x};
    Node* raw = n.get();
    n->backward_fn = [raw, x] {
        x->grad.m.array() += raw->grad.m.array() * (x->value.m.array() > 0.0).cast<double>();
    };
    return n;
}

inline NodePtr maxpool2(const NodePtr& x) {
    const Tensor& in = x->value;
    if (in.h % 2 || in.w % 2) throw ShapeError("maxpool2: odd spatial size");
    const int oh = in.h / 2, ow = in.w / 2;
    Tensor out(in.c, oh, ow);
    auto argmax = std::make_shared<Eigen::MatrixXi>(in.c, oh * ow);
    for (int ci = 0; ci < in.c; ++ci)
        for (int v = 0; v < oh; ++v)
            for (int u = 0; u < ow; ++u) {
                double best = -std::numeric_limits<double>::infinity();
                int best_idx = 0;
                for (int dv = 0; dv < 2; ++dv)
                    for (int du = 0; du < 2; ++du) {
                        int idx = (2 * v + dv) * in.w + 2 * u + du;
                        if (in.m(ci, idx) > best) {
                            best = in.m(ci, idx);
                            best_idx = idx;
                        }
                    }
                out.m(ci, v * ow + u) = best;
                (*argmax)(ci, v * ow + u) = best_idx;
            }
    NodePtr n = make_node(std::move(out));
    n->parents = {x};
    Node* raw = n.get();
    n->backward_fn = [raw, x, argmax] {
        for (int ci = 0; ci < x->value.c; ++ci)
            for (int p = 0; p < raw->value.h * raw->value.w; ++p)
                x->grad.m(ci, (*argmax)(ci, p)) += raw->grad.m(ci, p);
    };
    return n;
}

inline NodePtr upsample2(const NodePtr& x) {
    const Tensor& in = x->value;
    Tensor out(in.c, in.h * 2, in.w * 2);
    for (int v = 0; v < out.h; ++v)
        for (int u = 0; u < out.w; ++u)
            out.m.col(v * out.w + u) = in.m.col((v / 2) * in.w + u / 2);
    NodePtr n = make_node(std::move(out));
    n->parents = {x};
    Node* raw = n.get();
    n->backward_fn = [raw, x] {
        const Tensor& o = raw->value;
        for (int v = 0; v < o.h; ++v)
            for (int u = 0; u < o.w; ++u)
                x->grad.m.col((v / 2) * x->value.w + u / 2) += raw->grad.m.col(v * o.w + u);
    };
    return n;
}

inline NodePtr concat(const std::vector<NodePtr>& xs) {
    int c = 0;
    for (const auto& x : xs) c += x->value.c;
    Tensor out(c, xs[0]->value.h, xs[0]->value.w);
    int row = 0;
    for (const auto& x : xs) {
        if (x->value.h != out.h || x->value.w != out.w) throw ShapeError("concat: size mismatch");
        out.m.middleRows(row, x->value.c) = x->value.m;
        row += x->value.c;
    }
    NodePtr n = make_node(std::move(out));
    n->parents = xs;
    Node* raw = n.get();
    n->backward_fn = [raw, xs] {
        int row = 0;
        for (const auto& x : xs) {
            x->grad.m += raw->grad.m.middleRows(row, x->value.c);
            row += x->value.c;
        }
    };
    return n;
}

}  // namespace ops

// --- geometric input image ---

struct GeoNorm {
    double h_clip = 1.0;   // meters
    double d_max = 20.0;   // meters
    double d_min = 0.5;    // near reference for inverse-depth normalization

    void validate() const {
        if (h_clip <= 0 || d_max <= 0 || d_min <= 0 || d_min >= d_max)
            throw ConfigError("GeoNorm: need 0 < d_min < d_max and h_clip > 0");
    }
};

struct GeometricImage {
    Tensor channels;     // 3 x H x W: inverse depth, height, slope, all in [0,1]
    MaskImage validity;  // 1 where a LiDAR point hit
};

// Z-buffered projection of the cloud writing normalized inverse depth,
// clipped height and slope of the nearest point per pixel. Channels stay 0
// where nothing projects. Inverse depth maps d_min -> 1 and d_max -> 0.
inline GeometricImage build_geometric_input(const std::vector<Vec3>& cloud_lidar,
                                            const Extrinsics& ext, const CameraIntrinsics& K,
                                            const std::vector<PointFeatures>& features,
                                            const GeoNorm& norm) {
    norm.validate();
    if (cloud_lidar.size() != features.size())
        throw ShapeError("build_geometric_input: cloud and features differ in length");

    GeometricImage out;
    out.channels = Tensor(3, K.height, K.width);
    out.validity = MaskImage(K.height, K.width, 0);
    DepthImage zbuf(K.height, K.width, 0.0);

    for (size_t i = 0; i < cloud_lidar.size(); ++i) {
        Vec3 pc = ext.T_cam_lidar * cloud_lidar[i];
        if (pc.z() <= 1e-6) continue;
        PixelPoint px = project_point(pc, K);
        int u = static_cast<int>(std::floor(px.u));
        int v = static_cast<int>(std::floor(px.v));
        if (!zbuf.in_bounds(v, u)) continue;
        double& d = zbuf.at(v, u);
        if (d != 0.0 && px.depth >= d) continue;
        d = px.depth;

        int p = v * K.width + u;
        double inv = (1.0 / px.depth - 1.0 / norm.d_max) / (1.0 / norm.d_min - 1.0 / norm.d_max);
        out.channels.m(0, p) = std::clamp(inv, 0.0, 1.0);
        if (features[i].valid) {
            double h = std::clamp(features[i].height, -norm.h_clip, norm.h_clip);
            out.channels.m(1, p) = (h + norm.h_clip) / (2.0 * norm.h_clip);
            out.channels.m(2, p) = std::clamp(features[i].slope_deg / 90.0, 0.0, 1.0);
        } else {
            out.channels.m(1, p) = 0.0;
            out.channels.m(2, p) = 0.0;
        }
        out.validity.at(v, u) = 1;
    }
    return out;
}

// --- the network ---

struct NetConfig {
    int base_width = 32;
    int stages = 4;
    bool disable_rgb_stream = false;
    bool disable_geo_stream = false;
    uint64_t seed = 0;
};

struct ModelOutputs {
    NodePtr fused_logits;  // 1 x H x W
    NodePtr rgb_logits;
    NodePtr geo_logits;
};

class TravNet {
  public:
    explicit TravNet(const NetConfig& cfg) : cfg_(cfg) {
        if (cfg.stages < 1 || cfg.stages > 6 || cfg.base_width < 1)
            throw ConfigError("NetConfig: stages in [1,6], base_width >= 1");
        if (cfg.disable_rgb_stream && cfg.disable_geo_stream)
            throw ConfigError("NetConfig: cannot disable both streams");
        std::mt19937_64 rng(cfg.seed);
        if (!cfg.disable_rgb_stream) build_stream("rgb", 3, rng);
        if (!cfg.disable_geo_stream) build_stream("geo", 4, rng);
        build_fusion(rng);
    }

    const NetConfig& config() const { return cfg_; }

    std::map<std::string, NodePtr>& params() { return params_; }
    const std::map<std::string, NodePtr>& params() const { return params_; }

    // RGB is 3 x H x W in [0,1]; the geometric stream consumes the three
    // geometric channels with validity stacked as a fourth plane.
    ModelOutputs forward(const Tensor& rgb, const GeometricImage& geo) {
        if (rgb.h != geo.channels.h || rgb.w != geo.channels.w)
            throw ShapeError("forward: rgb/geo size mismatch");
        int factor = 1 << cfg_.stages;
        if (rgb.h % factor || rgb.w % factor)
            throw ShapeError("forward: spatial size not divisible by the downsampling factor");

        Tensor geo_in(4, geo.channels.h, geo.channels.w);
        geo_in.m.topRows(3) = geo.channels.m;
        for (int p = 0; p < geo_in.h * geo_in.w; ++p)
            geo_in.m(3, p) = geo.validity.raw()[p] ? 1.0 : 0.0;

        ModelOutputs out;
        std::vector<NodePtr> rgb_feats, geo_feats;
        if (!cfg_.disable_rgb_stream) {
            auto x = make_node(rgb);
            out.rgb_logits = run_stream("rgb", x, rgb_feats);
        } else {
            out.rgb_logits = make_node(Tensor(1, rgb.h, rgb.w));
        }
        if (!cfg_.disable_geo_stream) {
            auto x = make_node(std::move(geo_in));
            out.geo_logits = run_stream("geo", x, geo_feats);
        } else {
            out.geo_logits = make_node(Tensor(1, rgb.h, rgb.w));
        }

        // fusion decoder over both streams' skip + bottleneck features
        std::vector<NodePtr> feats;
        for (int i = 0; i <= cfg_.stages; ++i) {
            std::vector<NodePtr> level;
            if (!rgb_feats.empty()) level.push_back(rgb_feats[i]);
            if (!geo_feats.empty()) level.push_back(geo_feats[i]);
            feats.push_back(level.size() == 1 ? level[0] : ops::concat(level));
        }
        NodePtr y = feats[cfg_.stages];  // bottleneck level
        for (int i = cfg_.stages - 1; i >= 0; --i) {
            y = ops::upsample2(y);
            y = ops::concat({y, feats[i]});
            y = ops::relu(conv_named("fuse.dec" + std::to_string(i), y, 3));
            }
        out.fused_logits = conv_named("fuse.head", y, 1);
        return out;
    }

  private:
    int width_at(int stage) const { return std::min(cfg_.base_width << stage, cfg_.base_width * 8); }

    NodePtr add_param(const std::string& name, int rows, int cols, double scale, std::mt19937_64& rng) {
        Tensor t(1, 1, 1);
        t.c = rows;
        t.h = cols;
        t.w = 1;
        t.m = Eigen::MatrixXd(rows, cols);
        std::normal_distribution<double> d(0.0, scale);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) t.m(r, c) = d(rng);
        auto n = make_node(std::move(t));
        n->is_param = true;
        params_[name] = n;
        return n;
    }

    void add_conv(const std::string& name, int in_c, int out_c, int k, std::mt19937_64& rng) {
        double scale = std::sqrt(2.0 / (in_c * k * k));
        add_param(name + ".w", out_c, in_c * k * k, scale, rng);
        add_param(name + ".b", out_c, 1, 0.0, rng);
        conv_shapes_[name] = {in_c, out_c, k};
    }

    NodePtr conv_named(const std::string& name, const NodePtr& x, int k) {
        return ops::conv(x, params_.at(name + ".w"), params_.at(name + ".b"), k);
    }

    void build_stream(const std::string& s, int in_c, std::mt19937_64& rng) {
        int prev = in_c;
        for (int i = 0; i < cfg_.stages; ++i) {
            add_conv(s + ".enc" + std::to_string(i), prev, width_at(i), 3, rng);
            prev = width_at(i);
        }
        add_conv(s + ".bottleneck", prev, width_at(cfg_.stages), 3, rng);
        int up = width_at(cfg_.stages);
        for (int i = cfg_.stages - 1; i >= 0; --i) {
            add_conv(s + ".dec" + std::to_string(i), up + width_at(i), width_at(i), 3, rng);
            up = width_at(i);
        }
        add_conv(s + ".head", up, 1, 1, rng);
    }

    void build_fusion(std::mt19937_64& rng) {
        int streams = (cfg_.disable_rgb_stream ? 0 : 1) + (cfg_.disable_geo_stream ? 0 : 1);
        int up = streams * width_at(cfg_.stages);
        for (int i = cfg_.stages - 1; i >= 0; --i) {
            add_conv("fuse.dec" + std::to_string(i), up + streams * width_at(i), width_at(i), 3, rng);
            up = width_at(i);
        }
        add_conv("fuse.head", up, 1, 1, rng);
    }

    // Runs one stream; feats receives the per-level encoder features
    // (stages skip levels plus the bottleneck at index `stages`).
    NodePtr run_stream(const std::string& s, const NodePtr& input, std::vector<NodePtr>& feats) {
        NodePtr x = input;
        for (int i = 0; i < cfg_.stages; ++i) {
            x = ops::relu(conv_named(s + ".enc" + std::to_string(i), x, 3));
            feats.push_back(x);
            x = ops::maxpool2(x);
        }
        x = ops::relu(conv_named(s + ".bottleneck", x, 3));
        feats.push_back(x);

        NodePtr y = x;
        for (int i = cfg_.stages - 1; i >= 0; --i) {
            y = ops::upsample2(y);
            y = ops::concat({y, feats[i]});
            y = ops::relu(conv_named(s + ".dec" + std::to_string(i), y, 3));
        }
        return conv_named(s + ".head", y, 1);
    }

    NetConfig cfg_;
    std::map<std::string, NodePtr> params_;
    std::map<std::string, std::array<int, 3>> conv_shapes_;
};

// --- composite loss ---

struct LossWeights {
    double lambda_aux = 0.4;
    double w_sparse = 1.0;

    void validate() const {
        if (lambda_aux < 0 || w_sparse < 0) throw ConfigError("LossWeights must be nonnegative");
    }
};

struct LossValues {
    double total = 0.0;
    double fused = 0.0, rgb = 0.0, geo = 0.0, sparse = 0.0;
};

namespace detail {

inline double bce_with_logits(double z, double y) {
    return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace detail

// Mean BCE of each head against the pseudo label over non-ignore pixels,
// plus the sparse seed term on the fused head over seed pixels only. Terms
// with empty support contribute exactly 0. When accumulate_grads is set, the
// analytic gradient of the total is seeded into the logits nodes' grads.
inline LossValues travnet_loss(const ModelOutputs& outputs, const LabelImage& pseudo,
                               const SeedImage& seeds, const LossWeights& w,
                               bool accumulate_grads = false) {
    w.validate();
    const Tensor& fused = outputs.fused_logits->value;
    if (pseudo.height() != fused.h || pseudo.width() != fused.w)
        throw ShapeError("travnet_loss: label size mismatch");
    require_same_size(pseudo, seeds.labels, "travnet_loss");

    const int n = fused.h * fused.w;
    int n_pseudo = 0, n_seed = 0;
    for (int p = 0; p < n; ++p) {
        if (pseudo.raw()[p] != kIgnore) ++n_pseudo;
        if (seeds.labels.raw()[p] != SeedPixel::NONE) ++n_seed;
    }

    LossValues out;
    auto head_term = [&](const NodePtr& node, double& comp, double weight) {
        if (n_pseudo == 0) return;
        for (int p = 0; p < n; ++p) {
            uint8_t lbl = pseudo.raw()[p];
            if (lbl == kIgnore) continue;
            double z = node->value.m(0, p);
            comp += detail::bce_with_logits(z, lbl);
            if (accumulate_grads && weight > 0)
                node->grad.m(0, p) += weight * (detail::sigmoid(z) - lbl) / n_pseudo;
        }
        comp /= n_pseudo;
    };

    head_term(outputs.fused_logits, out.fused, 1.0);
    head_term(outputs.rgb_logits, out.rgb, w.lambda_aux);
    head_term(outputs.geo_logits, out.geo, w.lambda_aux);

    if (n_seed > 0) {
        for (int p = 0; p < n; ++p) {
            SeedPixel s = seeds.labels.raw()[p];
            if (s == SeedPixel::NONE) continue;
            double y = s == SeedPixel::POS ? 1.0 : 0.0;
            double z = outputs.fused_logits->value.m(0, p);
            out.sparse += detail::bce_with_logits(z, y);
            if (accumulate_grads && w.w_sparse > 0)
                outputs.fused_logits->grad.m(0, p) += w.w_sparse * (detail::sigmoid(z) - y) / n_seed;
        }
        out.sparse /= n_seed;
    }

    out.total = out.fused + w.lambda_aux * (out.rgb + out.geo) + w.w_sparse * out.sparse;
    return out;
}

}  // namespace travkit
