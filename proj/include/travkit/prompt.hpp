#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "travkit/footprint.hpp"
#include "travkit/prior.hpp"

// Refined positive/negative prompt construction from footprint and seed
// evidence. Everything here is deterministic: greedy farthest-point sampling
// with fixed tie-breaks, no RNG.

namespace travkit {

enum class Polarity : uint8_t { NEGATIVE = 0, POSITIVE = 1 };
enum class PromptSource : uint8_t { FOOTPRINT = 0, GEOM_SEED = 1 };

struct Prompt {
    int u = 0, v = 0;
    Polarity polarity = Polarity::POSITIVE;
    PromptSource source = PromptSource::FOOTPRINT;

    friend bool operator==(const Prompt&, const Prompt&) = default;
};

struct PromptSet {
    std::vector<Prompt> prompts;  // sorted by (v, u, polarity)
    std::string image_id;

    std::vector<Prompt> positives() const {
        std::vector<Prompt> out;
        for (const auto& p : prompts)
            if (p.polarity == Polarity::POSITIVE) out.push_back(p);
        return out;
    }
    std::vector<Prompt> negatives() const {
        std::vector<Prompt> out;
        for (const auto& p : prompts)
            if (p.polarity == Polarity::NEGATIVE) out.push_back(p);
        return out;
    }
};

namespace detail {

struct Pixel {
    int u, v;
};

// Greedy farthest-point sampling seeded at the centroid-nearest candidate.
// Ties resolve to the lowest (v, u). Stops at k points or when every
// remaining candidate is closer than min_dist to the chosen set.
inline std::vector<Pixel> farthest_point_sample(const std::vector<Pixel>& candidates, int k,
                                                double min_dist) {
    std::vector<Pixel> chosen;
    if (candidates.empty()) return chosen;

    double cu = 0, cv = 0;
    for (const auto& p : candidates) {
        cu += p.u;
        cv += p.v;
    }
    cu /= candidates.size();
    cv /= candidates.size();

    size_t best = 0;
    double best_d = std::numeric_limits<double>::max();
    for (size_t i = 0; i < candidates.size(); ++i) {
        double d = std::hypot(candidates[i].u - cu, candidates[i].v - cv);
        if (d < best_d - 1e-12 ||
            (std::abs(d - best_d) <= 1e-12 &&
             std::pair(candidates[i].v, candidates[i].u) < std::pair(candidates[best].v, candidates[best].u))) {
            best = i;
            best_d = d;
        }
    }
    chosen.push_back(candidates[best]);

    std::vector<double> min_d(candidates.size());
    for (size_t i = 0; i < candidates.size(); ++i)
        min_d[i] = std::hypot(candidates[i].u - chosen[0].u, candidates[i].v - chosen[0].v);

    while (static_cast<int>(chosen.size()) < k) {
        size_t far = 0;
        double far_d = -1.0;
        for (size_t i = 0; i < candidates.size(); ++i) {
            if (min_d[i] > far_d + 1e-12 ||
                (std::abs(min_d[i] - far_d) <= 1e-12 &&
                 std::pair(candidates[i].v, candidates[i].u) < std::pair(candidates[far].v, candidates[far].u))) {
                far = i;
                far_d = min_d[i];
            }
        }
        if (far_d < min_dist) break;
        chosen.push_back(candidates[far]);
        for (size_t i = 0; i < candidates.size(); ++i)
            min_d[i] = std::min(min_d[i],
                                std::hypot(candidates[i].u - candidates[far].u,
                                           candidates[i].v - candidates[far].v));
    }
    return chosen;
}

}  // namespace detail

// Positive prompts over the union of visible footprint pixels and POS seed
// pixels. Footprint membership decides the source tag.
inline std::vector<Prompt> sample_positive_prompts(const FootprintMask& footprint,
                                                   const SeedImage& seeds, int k, double min_dist) {
    if (k < 1 || min_dist < 1) throw ConfigError("sample_positive_prompts: k>=1 and min_dist>=1 required");
    require_same_size(footprint.mask, seeds.labels, "sample_positive_prompts");

    std::vector<detail::Pixel> cand;
    for (int v = 0; v < footprint.mask.height(); ++v)
        for (int u = 0; u < footprint.mask.width(); ++u)
            if (footprint.mask.at(v, u) || seeds.labels.at(v, u) == SeedPixel::POS)
                cand.push_back({u, v});

    std::vector<Prompt> out;
    for (const auto& p : detail::farthest_point_sample(cand, k, min_dist)) {
        Prompt pr;
        pr.u = p.u;
        pr.v = p.v;
        pr.polarity = Polarity::POSITIVE;
        pr.source = footprint.mask.at(p.v, p.u) ? PromptSource::FOOTPRINT : PromptSource::GEOM_SEED;
        out.push_back(pr);
    }
    return out;
}

// Negative prompts over NEG seed pixels outside the exclusion zone
// (typically the dilated footprint).
inline std::vector<Prompt> sample_negative_prompts(const SeedImage& seeds, const MaskImage& exclusion,
                                                   int k, double min_dist) {
    if (k < 1 || min_dist < 1) throw ConfigError("sample_negative_prompts: k>=1 and min_dist>=1 required");
    require_same_size(seeds.labels, exclusion, "sample_negative_prompts");

    std::vector<detail::Pixel> cand;
    for (int v = 0; v < seeds.labels.height(); ++v)
        for (int u = 0; u < seeds.labels.width(); ++u)
            if (seeds.labels.at(v, u) == SeedPixel::NEG && !exclusion.at(v, u)) cand.push_back({u, v});

    std::vector<Prompt> out;
    for (const auto& p : detail::farthest_point_sample(cand, k, min_dist)) {
        Prompt pr;
        pr.u = p.u;
        pr.v = p.v;
        pr.polarity = Polarity::NEGATIVE;
        pr.source = PromptSource::GEOM_SEED;
        out.push_back(pr);
    }
    return out;
}

// Border and ambiguity filters: prompts within border_margin of any image
// edge are dropped; cross-polarity pairs within dedupe_radius are both
// dropped (ambiguous evidence); same-polarity near-duplicates keep the
// first in (v, u) order. Throws EmptyPrompts when no positive survives.
inline PromptSet refine_candidates(std::vector<Prompt> pos, std::vector<Prompt> neg,
                                   const CameraIntrinsics& K, double border_margin,
                                   double dedupe_radius, const std::string& image_id = {}) {
    auto in_border = [&](const Prompt& p) {
        return p.u < border_margin || p.v < border_margin || p.u >= K.width - border_margin ||
               p.v >= K.height - border_margin;
    };
    std::erase_if(pos, in_border);
    std::erase_if(neg, in_border);

    auto near = [&](const Prompt& a, const Prompt& b) {
        return std::hypot(a.u - b.u, a.v - b.v) <= dedupe_radius;
    };
    std::vector<bool> drop_pos(pos.size(), false), drop_neg(neg.size(), false);
    for (size_t i = 0; i < pos.size(); ++i)
        for (size_t j = 0; j < neg.size(); ++j)
            if (near(pos[i], neg[j])) drop_pos[i] = drop_neg[j] = true;

    std::vector<Prompt> all;
    for (size_t i = 0; i < pos.size(); ++i)
        if (!drop_pos[i]) all.push_back(pos[i]);
    for (size_t j = 0; j < neg.size(); ++j)
        if (!drop_neg[j]) all.push_back(neg[j]);

    auto order = [](const Prompt& a, const Prompt& b) {
        return std::tuple(a.v, a.u, a.polarity) < std::tuple(b.v, b.u, b.polarity);
    };
    std::sort(all.begin(), all.end(), order);

    std::vector<Prompt> kept;
    for (const auto& p : all) {
        bool dup = false;
        for (const auto& q : kept)
            if (p.polarity == q.polarity && near(p, q)) dup = true;
        if (!dup) kept.push_back(p);
    }

    PromptSet set;
    set.prompts = std::move(kept);
    set.image_id = image_id;
    bool has_pos = false;
    for (const auto& p : set.prompts)
        if (p.polarity == Polarity::POSITIVE) has_pos = true;
    if (!has_pos) throw EmptyPromptsError("refine_candidates: no positive prompts remain");
    return set;
}

}  // namespace travkit
