#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "ufps/labelmap.hpp"

namespace ufps {

struct ConfusionCounts {
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
    std::size_t total() const { return tp + tn + fp + fn; }
};

// Binary c-vs-rest pixel counts.
inline ConfusionCounts confusion(const LabelMap& pred, const LabelMap& gt, ClassId c) {
    if (!pred.same_shape(gt)) throw LengthMismatch("confusion: grid mismatch");
    ConfusionCounts out;
    for (std::size_t p = 0; p < pred.pixels(); ++p) {
        const bool in_pred = pred.classes[p] == c;
        const bool in_gt = gt.classes[p] == c;
        if (in_pred && in_gt) ++out.tp;
        else if (in_pred) ++out.fp;
        else if (in_gt) ++out.fn;
        else ++out.tn;
    }
    return out;
}

// Degenerate cases: both masks empty -> perfect scores; exactly one empty ->
// zero overlap scores.
inline double dice_score(const ConfusionCounts& c) {
    if (c.tp + c.fp + c.fn == 0) return 1.0;
    return 2.0 * c.tp / static_cast<double>(2 * c.tp + c.fp + c.fn);
}

inline double jaccard(const ConfusionCounts& c) {
    if (c.tp + c.fp + c.fn == 0) return 1.0;
    return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp + c.fn);
}

inline double sensitivity(const ConfusionCounts& c) {
    if (c.tp + c.fn == 0) return c.fp == 0 ? 1.0 : 0.0;
    return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

inline double specificity(const ConfusionCounts& c) {
    if (c.tn + c.fp == 0) return 1.0;
    return static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
}

inline double relative_volume_error(const ConfusionCounts& c) {
    const std::size_t gt_vol = c.tp + c.fn;
    const std::size_t pred_vol = c.tp + c.fp;
    if (gt_vol == 0) return pred_vol == 0 ? 0.0 : 1.0;
    return std::abs(static_cast<double>(gt_vol) - static_cast<double>(pred_vol)) /
           static_cast<double>(gt_vol);
}

using Coord = std::pair<int, int>;

inline std::vector<Coord> foreground_coords(const LabelMap& lab, ClassId c) {
    std::vector<Coord> out;
    for (int y = 0; y < lab.height; ++y)
        for (int x = 0; x < lab.width; ++x)
            if (lab.at(x, y) == c) out.push_back({x, y});
    return out;
}

// Full symmetric Hausdorff distance in pixel units. Both sets empty -> 0;
// exactly one empty -> the penalty distance (grid diagonal).
inline double hausdorff(const std::vector<Coord>& a, const std::vector<Coord>& b,
                        double empty_penalty) {
    if (a.empty() && b.empty()) return 0.0;
    if (a.empty() || b.empty()) return empty_penalty;
    auto directed = [](const std::vector<Coord>& from, const std::vector<Coord>& to) {
        double worst = 0.0;
        for (const auto& p : from) {
            double best = 1e300;
            for (const auto& q : to) {
                const double dx = p.first - q.first, dy = p.second - q.second;
                best = std::min(best, dx * dx + dy * dy);
            }
            worst = std::max(worst, best);
        }
        return std::sqrt(worst);
    };
    return std::max(directed(a, b), directed(b, a));
}

inline double grid_diagonal(int width, int height) {
    return std::sqrt(static_cast<double>(width) * width +
                     static_cast<double>(height) * height);
}

namespace detail {

// 4-connectivity component labeling of a binary mask; returns label per
// pixel (-1 outside) and component sizes.
inline std::pair<std::vector<int>, std::vector<std::size_t>> components(
    const std::vector<std::uint8_t>& mask, int width, int height) {
    std::vector<int> label(mask.size(), -1);
    std::vector<std::size_t> sizes;
    std::vector<std::size_t> stack;
    for (std::size_t start = 0; start < mask.size(); ++start) {
        if (!mask[start] || label[start] >= 0) continue;
        const int id = static_cast<int>(sizes.size());
        sizes.push_back(0);
        stack.push_back(start);
        label[start] = id;
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            ++sizes[id];
            const int x = static_cast<int>(p % width), y = static_cast<int>(p / width);
            const int nx[4] = {x - 1, x + 1, x, x};
            const int ny[4] = {y, y, y - 1, y + 1};
            for (int k = 0; k < 4; ++k) {
                if (nx[k] < 0 || nx[k] >= width || ny[k] < 0 || ny[k] >= height) continue;
                const std::size_t q = static_cast<std::size_t>(ny[k]) * width + nx[k];
                if (mask[q] && label[q] < 0) {
                    label[q] = id;
                    stack.push_back(q);
                }
            }
        }
    }
    return {std::move(label), std::move(sizes)};
}

}  // namespace detail

// Per foreground class: fill fully-enclosed background holes and drop
// components below 20% of the largest component's area.
inline LabelMap postprocess(const LabelMap& pred) {
    LabelMap out = pred;
    ClassSet present;
    for (ClassId c : pred.classes)
        if (c != 0) present.insert(c);

    const int w = pred.width, h = pred.height;
    for (ClassId c : present) {
        std::vector<std::uint8_t> mask(pred.pixels(), 0);
        for (std::size_t p = 0; p < pred.pixels(); ++p) mask[p] = out.classes[p] == c;

        // drop small components
        auto [label, sizes] = detail::components(mask, w, h);
        const std::size_t largest = *std::max_element(sizes.begin(), sizes.end());
        for (std::size_t p = 0; p < mask.size(); ++p) {
            if (label[p] >= 0 && static_cast<double>(sizes[label[p]]) < 0.2 * largest) {
                mask[p] = 0;
                out.classes[p] = 0;
            }
        }

        // fill holes: background components not reaching the border
        std::vector<std::uint8_t> inv(mask.size());
        for (std::size_t p = 0; p < mask.size(); ++p) inv[p] = !mask[p];
        auto [bg_label, bg_sizes] = detail::components(inv, w, h);
        std::vector<std::uint8_t> touches_border(bg_sizes.size(), 0);
        for (int x = 0; x < w; ++x) {
            if (bg_label[x] >= 0) touches_border[bg_label[x]] = 1;
            const std::size_t bot = static_cast<std::size_t>(h - 1) * w + x;
            if (bg_label[bot] >= 0) touches_border[bg_label[bot]] = 1;
        }
        for (int y = 0; y < h; ++y) {
            const std::size_t left = static_cast<std::size_t>(y) * w;
            const std::size_t right = left + w - 1;
            if (bg_label[left] >= 0) touches_border[bg_label[left]] = 1;
            if (bg_label[right] >= 0) touches_border[bg_label[right]] = 1;
        }
        for (std::size_t p = 0; p < mask.size(); ++p)
            if (bg_label[p] >= 0 && !touches_border[bg_label[p]] && out.classes[p] == 0)
                out.classes[p] = c;
    }
    return out;
}

}  // namespace ufps
