#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "travkit/net.hpp"

using namespace travkit;

namespace {

std::mt19937_64 rng(1234);

Tensor random_tensor(int c, int h, int w, double lo = 0.0, double hi = 1.0) {
    Tensor t(c, h, w);
    std::uniform_real_distribution<double> d(lo, hi);
    for (int i = 0; i < t.m.rows(); ++i)
        for (int j = 0; j < t.m.cols(); ++j) t.m(i, j) = d(rng);
    return t;
}

GeometricImage random_geo(int h, int w) {
    GeometricImage g;
    g.channels = random_tensor(3, h, w);
    g.validity = MaskImage(h, w, 0);
    std::bernoulli_distribution b(0.6);
    for (int p = 0; p < h * w; ++p) {
        if (b(rng)) {
            g.validity.raw()[p] = 1;
        } else {
            g.channels.m.col(p).setZero();
        }
    }
    return g;
}

}  // namespace

TEST_CASE("build_geometric_input") {
    CameraIntrinsics K{100, 100, 16, 16, 32, 32};
    Extrinsics ext;
    GeoNorm norm;  // h_clip 1, d_max 20, d_min 0.5

    SECTION("empty cloud gives zero channels and zero validity") {
        auto g = build_geometric_input({}, ext, K, {}, norm);
        CHECK(g.channels.m.cwiseAbs().maxCoeff() == 0.0);
        CHECK(g.validity.count(1) == 0);
    }
    SECTION("single point scalar oracle") {
        double d = 4.0;
        std::vector<Vec3> cloud = {{0, 0, d}};
        PointFeatures f;
        f.valid = true;
        f.height = 0.25;
        f.slope_deg = 18.0;
        auto g = build_geometric_input(cloud, ext, K, {f}, norm);
        int p = 16 * 32 + 16;
        double expect_inv = (1.0 / d - 1.0 / norm.d_max) / (1.0 / norm.d_min - 1.0 / norm.d_max);
        CHECK(g.channels.m(0, p) == Catch::Approx(expect_inv).epsilon(1e-12));
        CHECK(g.channels.m(1, p) == Catch::Approx((0.25 + 1.0) / 2.0));
        CHECK(g.channels.m(2, p) == Catch::Approx(18.0 / 90.0));
        CHECK(g.validity.at(16, 16) == 1);
        CHECK(g.validity.count(1) == 1);
    }
    SECTION("point at d_max maps to inverse-depth 0, nearer point wins the z-buffer") {
        std::vector<Vec3> cloud = {{0, 0, norm.d_max}, {0, 0, 2.0}};
        std::vector<PointFeatures> fs(2);
        auto g = build_geometric_input(cloud, ext, K, fs, norm);
        int p = 16 * 32 + 16;
        double expect = (1.0 / 2.0 - 1.0 / norm.d_max) / (1.0 / norm.d_min - 1.0 / norm.d_max);
        CHECK(g.channels.m(0, p) == Catch::Approx(expect));
    }
    SECTION("channel ranges stay in [0,1] for random clouds") {
        std::uniform_real_distribution<double> dd(-3.0, 3.0), dz(0.1, 50.0), dh(-5.0, 5.0),
            ds(0.0, 90.0);
        std::vector<Vec3> cloud;
        std::vector<PointFeatures> fs;
        for (int i = 0; i < 500; ++i) {
            cloud.emplace_back(dd(rng), dd(rng), dz(rng));
            PointFeatures f;
            f.valid = i % 3 != 0;
            f.height = dh(rng);
            f.slope_deg = ds(rng);
            fs.push_back(f);
        }
        auto g = build_geometric_input(cloud, ext, K, fs, norm);
        CHECK(g.channels.m.minCoeff() >= 0.0);
        CHECK(g.channels.m.maxCoeff() <= 1.0);
        // channels are zero wherever validity is zero
        for (int p = 0; p < 32 * 32; ++p)
            if (!g.validity.raw()[p]) CHECK(g.channels.m.col(p).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("forward shapes and stream decoupling") {
    NetConfig cfg;
    cfg.base_width = 4;
    cfg.stages = 2;
    cfg.seed = 3;
    TravNet net(cfg);

    Tensor rgb = random_tensor(3, 16, 16);
    GeometricImage geo = random_geo(16, 16);

    ModelOutputs out = net.forward(rgb, geo);
    CHECK(out.fused_logits->value.c == 1);
    CHECK(out.fused_logits->value.h == 16);
    CHECK(out.rgb_logits->value.m.allFinite());
    CHECK(out.geo_logits->value.m.allFinite());
    CHECK(out.fused_logits->value.m.allFinite());

    SECTION("rgb_logits bit-invariant to geometric perturbation") {
        GeometricImage geo2 = random_geo(16, 16);
        ModelOutputs out2 = net.forward(rgb, geo2);
        CHECK(out2.rgb_logits->value.m == out.rgb_logits->value.m);
        CHECK(out2.fused_logits->value.m != out.fused_logits->value.m);
    }
    SECTION("geo_logits bit-invariant to rgb perturbation") {
        Tensor rgb2 = random_tensor(3, 16, 16);
        ModelOutputs out2 = net.forward(rgb2, geo);
        CHECK(out2.geo_logits->value.m == out.geo_logits->value.m);
    }
    SECTION("size mismatch raises ShapeError") {
        Tensor bad = random_tensor(3, 16, 12);
        CHECK_THROWS_AS(net.forward(bad, geo), ShapeError);
        Tensor odd = random_tensor(3, 18, 18);
        GeometricImage godd = random_geo(18, 18);
        CHECK_THROWS_AS(net.forward(odd, godd), ShapeError);
    }
}

TEST_CASE("disabled geometric stream makes fused output geo-invariant") {
    NetConfig cfg;
    cfg.base_width = 4;
    cfg.stages = 1;
    cfg.disable_geo_stream = true;
    TravNet net(cfg);
    Tensor rgb = random_tensor(3, 8, 8);
    ModelOutputs a = net.forward(rgb, random_geo(8, 8));
    ModelOutputs b = net.forward(rgb, random_geo(8, 8));
    CHECK(a.fused_logits->value.m == b.fused_logits->value.m);
    CHECK(a.geo_logits->value.m.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("loss contracts") {
    NetConfig cfg;
    cfg.base_width = 2;
    cfg.stages = 1;
    TravNet net(cfg);
    const int H = 8, W = 8;
    Tensor rgb = random_tensor(3, H, W);
    GeometricImage geo = random_geo(H, W);
    ModelOutputs out = net.forward(rgb, geo);

    SeedImage no_seeds{Image<SeedPixel>(H, W, SeedPixel::NONE), DepthImage(H, W, 0.0)};
    LossWeights w;

    SECTION("all-ignore pseudo and no seeds give exactly zero") {
        LabelImage ignore_all(H, W, kIgnore);
        LossValues lv = travnet_loss(out, ignore_all, no_seeds, w);
        CHECK(lv.total == 0.0);
        CHECK(lv.fused == 0.0);
        CHECK(lv.sparse == 0.0);
    }
    SECTION("zero logit on a single pseudo=1 pixel costs ln 2") {
        ModelOutputs zero;
        zero.fused_logits = make_node(Tensor(1, H, W));
        zero.rgb_logits = make_node(Tensor(1, H, W));
        zero.geo_logits = make_node(Tensor(1, H, W));
        LabelImage pseudo(H, W, kIgnore);
        pseudo.at(3, 3) = kTraversable;
        LossValues lv = travnet_loss(zero, pseudo, no_seeds, w);
        CHECK(lv.fused == Catch::Approx(std::log(2.0)).epsilon(1e-12));
        // large positive logit drives the pixel's BCE toward 0
        zero.fused_logits->value.m(0, 3 * W + 3) = 40.0;
        lv = travnet_loss(zero, pseudo, no_seeds, w);
        CHECK(lv.fused < 1e-12);
    }
    SECTION("decomposition identity and nonnegativity") {
        LabelImage pseudo(H, W, kIgnore);
        std::bernoulli_distribution b(0.5);
        for (auto& px : pseudo.raw()) px = b(rng) ? kTraversable : kNonTraversable;
        SeedImage seeds = no_seeds;
        seeds.labels.at(2, 2) = SeedPixel::POS;
        seeds.depth.at(2, 2) = 1.0;
        seeds.labels.at(5, 5) = SeedPixel::NEG;
        seeds.depth.at(5, 5) = 2.0;
        LossValues lv = travnet_loss(out, pseudo, seeds, w);
        CHECK(lv.fused >= 0.0);
        CHECK(lv.rgb >= 0.0);
        CHECK(lv.geo >= 0.0);
        CHECK(lv.sparse >= 0.0);
        CHECK(std::abs(lv.total - (lv.fused + w.lambda_aux * (lv.rgb + lv.geo) +
                                   w.w_sparse * lv.sparse)) < 1e-12);

        // zero weights reduce to plain pseudo-label BCE
        LossWeights off;
        off.lambda_aux = 0.0;
        off.w_sparse = 0.0;
        LossValues plain = travnet_loss(out, pseudo, seeds, off);
        CHECK(plain.total == plain.fused);
        CHECK(plain.fused == lv.fused);
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    NetConfig cfg;
    cfg.base_width = 2;
    cfg.stages = 1;  // 2-layer toy scale
    cfg.seed = 11;
    TravNet net(cfg);

    const int H = 4, W = 4;
    Tensor rgb = random_tensor(3, H, W);
    GeometricImage geo = random_geo(H, W);
    LabelImage pseudo(H, W, kIgnore);
    std::bernoulli_distribution b(0.5);
    for (auto& px : pseudo.raw()) px = b(rng) ? kTraversable : kNonTraversable;
    pseudo.at(0, 0) = kIgnore;
    SeedImage seeds{Image<SeedPixel>(H, W, SeedPixel::NONE), DepthImage(H, W, 0.0)};
    seeds.labels.at(1, 1) = SeedPixel::POS;
    seeds.depth.at(1, 1) = 1.0;
    seeds.labels.at(2, 3) = SeedPixel::NEG;
    seeds.depth.at(2, 3) = 2.0;
    LossWeights w;
    w.lambda_aux = 0.7;
    w.w_sparse = 1.3;  // all four components active

    auto loss_at = [&] {
        ModelOutputs out = net.forward(rgb, geo);
        return travnet_loss(out, pseudo, seeds, w).total;
    };

    for (auto& [name, p] : net.params()) p->grad.m.setZero();
    ModelOutputs out = net.forward(rgb, geo);
    travnet_loss(out, pseudo, seeds, w, true);
    backward({out.fused_logits, out.rgb_logits, out.geo_logits});

    const double h = 1e-6;
    int checked = 0;
    for (auto& [name, p] : net.params()) {
        for (int r = 0; r < p->value.m.rows(); ++r)
            for (int c = 0; c < p->value.m.cols(); ++c) {
                double orig = p->value.m(r, c);
                p->value.m(r, c) = orig + h;
                double lp = loss_at();
                p->value.m(r, c) = orig - h;
                double lm = loss_at();
                p->value.m(r, c) = orig;
                double numeric = (lp - lm) / (2 * h);
                double analytic = p->grad.m(r, c);
                double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
                INFO(name << "(" << r << "," << c << ")");
                CHECK(std::abs(numeric - analytic) / denom < 1e-4);
                ++checked;
            }
    }
    CHECK(checked > 100);
}
