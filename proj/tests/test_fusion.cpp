#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "travkit/fusion.hpp"

using namespace travkit;

namespace {

std::mt19937_64 rng(55);

PromptSet prompts_with(std::vector<std::tuple<int, int, Polarity>> pts) {
    PromptSet set;
    set.image_id = "f";
    for (auto [u, v, pol] : pts) {
        Prompt p;
        p.u = u;
        p.v = v;
        p.polarity = pol;
        set.prompts.push_back(p);
    }
    return set;
}

MaskImage block_mask(int h, int w, int v0, int v1, int u0, int u1) {
    MaskImage m(h, w, 0);
    for (int v = v0; v < v1; ++v)
        for (int u = u0; u < u1; ++u) m.at(v, u) = 1;
    return m;
}

FootprintMask empty_footprint(int h, int w) {
    return {MaskImage(h, w, 0), MaskImage(h, w, 0)};
}

SeedImage empty_seeds(int h, int w) {
    return {Image<SeedPixel>(h, w, SeedPixel::NONE), DepthImage(h, w, 0.0)};
}

}  // namespace

TEST_CASE("select_masks acceptance rules") {
    MaskSelectionConfig cfg;  // score_min 0.8, neg_frac_max 0.1, area_frac_max 0.5
    auto set = prompts_with({{10, 10, Polarity::POSITIVE}, {30, 30, Polarity::NEGATIVE}});

    SECTION("mask missing its own prompt pixel is rejected") {
        SegmentationResult r;
        r.masks = {block_mask(64, 64, 20, 28, 20, 28)};  // does not contain (10,10)
        r.scores = {0.95};
        CHECK(select_masks({r}, set, cfg).empty());
    }
    SECTION("mask swallowing all negatives is rejected") {
        SegmentationResult r;
        r.masks = {block_mask(64, 64, 5, 35, 5, 35)};  // contains prompt and the negative
        r.scores = {0.95};
        CHECK(select_masks({r}, set, cfg).empty());
    }
    SECTION("good mask is accepted") {
        SegmentationResult r;
        r.masks = {block_mask(64, 64, 5, 15, 5, 15)};
        r.scores = {0.95};
        CHECK(select_masks({r}, set, cfg).size() == 1);
    }
    SECTION("low score is rejected") {
        SegmentationResult r;
        r.masks = {block_mask(64, 64, 5, 15, 5, 15)};
        r.scores = {0.5};
        CHECK(select_masks({r}, set, cfg).empty());
    }
    SECTION("oversized mask is rejected") {
        SegmentationResult r;
        r.masks = {block_mask(64, 64, 0, 60, 0, 64)};  // ~94% of the image
        r.scores = {0.95};
        auto only_pos = prompts_with({{10, 10, Polarity::POSITIVE}});
        CHECK(select_masks({r}, only_pos, cfg).empty());
    }
}

TEST_CASE("fuse_labels priorities") {
    const int H = 32, W = 32;

    SECTION("no masks, no seeds: footprint ones, rest ignore") {
        auto fp = empty_footprint(H, W);
        for (int v = 10; v < 14; ++v)
            for (int u = 4; u < 8; ++u) fp.mask.at(v, u) = 1;
        LabelImage lab = fuse_labels({}, fp, empty_seeds(H, W), 2.0);
        for (int v = 0; v < H; ++v)
            for (int u = 0; u < W; ++u)
                CHECK(lab.at(v, u) == (fp.mask.at(v, u) ? kTraversable : kIgnore));
    }
    SECTION("dilated NEG seeds beat accepted masks outside footprint") {
        auto seeds = empty_seeds(H, W);
        seeds.labels.at(16, 16) = SeedPixel::NEG;
        seeds.depth.at(16, 16) = 2.0;
        auto mask = block_mask(H, W, 10, 24, 10, 24);
        LabelImage lab = fuse_labels({mask}, empty_footprint(H, W), seeds, 2.0);
        CHECK(lab.at(16, 16) == kNonTraversable);
        CHECK(lab.at(16, 18) == kNonTraversable);  // within dilation radius
        CHECK(lab.at(16, 20) == kTraversable);     // outside it, mask survives
    }
    SECTION("footprint supremacy over NEG seeds; occluded footprint untouched") {
        auto fp = empty_footprint(H, W);
        fp.mask.at(5, 5) = 1;
        fp.occluded.at(6, 5) = 1;
        auto seeds = empty_seeds(H, W);
        seeds.labels.at(5, 5) = SeedPixel::NEG;
        seeds.depth.at(5, 5) = 1.0;
        seeds.labels.at(6, 5) = SeedPixel::NEG;
        seeds.depth.at(6, 5) = 1.0;
        LabelImage lab = fuse_labels({}, fp, seeds, 0.0);
        CHECK(lab.at(5, 5) == kTraversable);      // footprint wins
        CHECK(lab.at(6, 5) == kNonTraversable);   // occluded pixel follows the seed
    }
    SECTION("value domain and monotonicity in accepted masks") {
        std::uniform_int_distribution<int> d(0, W - 1);
        auto fp = empty_footprint(H, W);
        auto seeds = empty_seeds(H, W);
        for (int i = 0; i < 30; ++i) fp.mask.at(d(rng), d(rng)) = 1;
        for (int i = 0; i < 10; ++i) {
            int u = d(rng), v = d(rng);
            seeds.labels.at(v, u) = SeedPixel::NEG;
            seeds.depth.at(v, u) = 1.0;
        }
        auto m1 = block_mask(H, W, 2, 12, 2, 12);
        auto m2 = block_mask(H, W, 15, 30, 8, 28);
        LabelImage a = fuse_labels({m1}, fp, seeds, 2.0);
        LabelImage b = fuse_labels({m1, m2}, fp, seeds, 2.0);
        for (size_t i = 0; i < a.size(); ++i) {
            CHECK((a.raw()[i] == 0 || a.raw()[i] == 1 || a.raw()[i] == 255));
            // adding a mask never flips 1 -> {0, 255}
            if (a.raw()[i] == kTraversable) CHECK(b.raw()[i] == kTraversable);
        }
    }
}

TEST_CASE("cleanup removes small components and is idempotent") {
    LabelImage lab(32, 32, kIgnore);

    SECTION("isolated traversable pixel becomes ignore") {
        lab.at(10, 10) = kTraversable;
        LabelImage out = cleanup(lab, 50);
        CHECK(out.at(10, 10) == kIgnore);
    }
    SECTION("large component survives, idempotence holds") {
        for (int v = 0; v < 10; ++v)
            for (int u = 0; u < 10; ++u) lab.at(v, u) = kTraversable;
        lab.at(20, 20) = kNonTraversable;  // small 0-component
        LabelImage once = cleanup(lab, 50);
        CHECK(once.at(5, 5) == kTraversable);
        CHECK(once.at(20, 20) == kIgnore);
        CHECK(cleanup(once, 50) == once);
    }
    SECTION("component sizes match a brute-force flood fill") {
        std::uniform_int_distribution<int> d(0, 31);
        std::bernoulli_distribution b(0.45);
        for (auto& px : lab.raw()) px = b(rng) ? kTraversable : kIgnore;
        auto comps = connected_components(lab, kTraversable);
        // brute force: iterative label propagation until fixpoint
        Image<int> id(32, 32, -1);
        int next = 0;
        for (int v = 0; v < 32; ++v)
            for (int u = 0; u < 32; ++u)
                if (lab.at(v, u) == kTraversable) id.at(v, u) = next++;
        bool changed = true;
        while (changed) {
            changed = false;
            for (int v = 0; v < 32; ++v)
                for (int u = 0; u < 32; ++u) {
                    if (id.at(v, u) < 0) continue;
                    const int dv[] = {-1, 1, 0, 0}, du[] = {0, 0, -1, 1};
                    for (int k = 0; k < 4; ++k) {
                        int vv = v + dv[k], uu = u + du[k];
                        if (id.in_bounds(vv, uu) && id.at(vv, uu) >= 0 &&
                            id.at(vv, uu) < id.at(v, u)) {
                            id.at(v, u) = id.at(vv, uu);
                            changed = true;
                        }
                    }
                }
        }
        std::map<int, int> sizes;
        for (int v = 0; v < 32; ++v)
            for (int u = 0; u < 32; ++u)
                if (id.at(v, u) >= 0) sizes[id.at(v, u)]++;
        std::vector<int> brute, mine;
        for (auto& [k, s] : sizes) brute.push_back(s);
        for (auto& c : comps) mine.push_back(static_cast<int>(c.size()));
        std::sort(brute.begin(), brute.end());
        std::sort(mine.begin(), mine.end());
        CHECK(mine == brute);
    }
}
