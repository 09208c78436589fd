#pragma once

#include <queue>
#include <vector>

#include "travkit/segmentation.hpp"

// Mask selection and evidence fusion into the final per-pixel pseudo label.
// Priority order: footprint > NEG seed > accepted mask > ignore.

namespace travkit {

inline constexpr uint8_t kNonTraversable = 0;
inline constexpr uint8_t kTraversable = 1;
inline constexpr uint8_t kIgnore = 255;

using LabelImage = Image<uint8_t>;  // {0, 1, 255}

struct MaskSelectionConfig {
    double score_min = 0.8;
    double neg_frac_max = 0.1;
    double area_frac_max = 0.5;
};

// Accept a mask iff its score clears the bar, it contains its own positive
// prompt, the fraction of negative prompts it swallows is small, and it is
// not implausibly large.
inline std::vector<MaskImage> select_masks(const std::vector<SegmentationResult>& results,
                                           const PromptSet& prompts, const MaskSelectionConfig& cfg,
                                           std::vector<std::pair<int, int>>* accepted_idx = nullptr) {
    auto pos = prompts.positives();
    auto neg = prompts.negatives();
    if (results.size() != pos.size())
        throw ShapeError("select_masks: one result per positive prompt expected");

    std::vector<MaskImage> accepted;
    for (size_t i = 0; i < results.size(); ++i) {
        for (size_t m = 0; m < results[i].masks.size(); ++m) {
            const MaskImage& mask = results[i].masks[m];
            if (results[i].scores[m] < cfg.score_min) continue;
            if (!mask.at(pos[i].v, pos[i].u)) continue;

            if (!neg.empty()) {
                size_t inside = 0;
                for (const auto& n : neg)
                    if (mask.at(n.v, n.u)) ++inside;
                if (static_cast<double>(inside) / neg.size() > cfg.neg_frac_max) continue;
            }
            if (static_cast<double>(mask.count(1)) > cfg.area_frac_max * mask.size()) continue;
            if (accepted_idx)
                accepted_idx->emplace_back(static_cast<int>(i), static_cast<int>(m));
            accepted.push_back(mask);
        }
    }
    return accepted;
}

// Euclidean disk dilation of a binary predicate over the image.
template <typename Pred>
inline MaskImage dilate_where(int height, int width, double radius, Pred pred) {
    MaskImage out(height, width, 0);
    int r = static_cast<int>(std::ceil(radius));
    for (int v = 0; v < height; ++v)
        for (int u = 0; u < width; ++u) {
            if (!pred(v, u)) continue;
            for (int dv = -r; dv <= r; ++dv)
                for (int du = -r; du <= r; ++du) {
                    if (dv * dv + du * du > radius * radius) continue;
                    int vv = v + dv, uu = u + du;
                    if (out.in_bounds(vv, uu)) out.at(vv, uu) = 1;
                }
        }
    return out;
}

// Start all-ignore; accepted masks write 1, dilated NEG seeds overwrite with
// 0, the visible footprint overwrites with 1. Occluded footprint pixels are
// left to the other evidence.
inline LabelImage fuse_labels(const std::vector<MaskImage>& accepted, const FootprintMask& footprint,
                              const SeedImage& seeds, double r_neg) {
    require_same_size(footprint.mask, seeds.labels, "fuse_labels");
    const int h = footprint.mask.height(), w = footprint.mask.width();
    LabelImage labels(h, w, kIgnore);

    for (const auto& m : accepted) {
        require_same_size(m, labels, "fuse_labels");
        for (int v = 0; v < h; ++v)
            for (int u = 0; u < w; ++u)
                if (m.at(v, u)) labels.at(v, u) = kTraversable;
    }

    MaskImage neg = dilate_where(h, w, r_neg,
                                 [&](int v, int u) { return seeds.labels.at(v, u) == SeedPixel::NEG; });
    for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u)
            if (neg.at(v, u)) labels.at(v, u) = kNonTraversable;

    for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u)
            if (footprint.mask.at(v, u)) labels.at(v, u) = kTraversable;

    return labels;
}

// 4-connected components of one class, via BFS flood fill.
inline std::vector<std::vector<std::pair<int, int>>> connected_components(const LabelImage& labels,
                                                                          uint8_t cls) {
    std::vector<std::vector<std::pair<int, int>>> comps;
    MaskImage seen(labels.height(), labels.width(), 0);
    for (int v0 = 0; v0 < labels.height(); ++v0)
        for (int u0 = 0; u0 < labels.width(); ++u0) {
            if (labels.at(v0, u0) != cls || seen.at(v0, u0)) continue;
            std::vector<std::pair<int, int>> comp;
            std::queue<std::pair<int, int>> q;
            q.push({v0, u0});
            seen.at(v0, u0) = 1;
            while (!q.empty()) {
                auto [v, u] = q.front();
                q.pop();
                comp.push_back({v, u});
                const int dv[] = {-1, 1, 0, 0}, du[] = {0, 0, -1, 1};
                for (int k = 0; k < 4; ++k) {
                    int vv = v + dv[k], uu = u + du[k];
                    if (labels.in_bounds(vv, uu) && !seen.at(vv, uu) && labels.at(vv, uu) == cls) {
                        seen.at(vv, uu) = 1;
                        q.push({vv, uu});
                    }
                }
            }
            comps.push_back(std::move(comp));
        }
    return comps;
}

// Small components of either decided class become ignore. Idempotent.
inline LabelImage cleanup(const LabelImage& labels, int min_component) {
    if (min_component < 0) throw ConfigError("cleanup: min_component must be >= 0");
    LabelImage out = labels;
    for (uint8_t cls : {kTraversable, kNonTraversable})
        for (const auto& comp : connected_components(labels, cls))
            if (static_cast<int>(comp.size()) < min_component)
                for (auto [v, u] : comp) out.at(v, u) = kIgnore;
    return out;
}

}  // namespace travkit
