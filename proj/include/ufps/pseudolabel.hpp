#pragma once

#include <utility>

#include "ufps/labelmap.hpp"
#include "ufps/model.hpp"

namespace ufps {

struct Teacher {
    ParamVector params;
    ClassSet owned_classes;  // foreground classes this teacher was trained on
};

// Pretrained teachers plus the merge sequence (ascending class id by
// convention; later entries overwrite earlier ones).
struct TeacherSet {
    std::vector<Teacher> teachers;
    std::vector<ClassId> ordering;

    static std::vector<ClassId> default_ordering(const std::vector<Teacher>& ts) {
        ClassSet all;
        for (const auto& t : ts) all.insert(t.owned_classes.begin(), t.owned_classes.end());
        return {all.begin(), all.end()};
    }
};

// Argmax restricted to {background} plus the teacher's owned classes; other
// channels are ignored. Ties break toward the lower class id.
inline std::pair<LabelMap, ProbMap> teacher_predict(const Teacher& teacher,
                                                    const PixelGrid& grid) {
    ProbMap probs = forward(teacher.params, grid);
    LabelMap lab(grid.width, grid.height, 0, Provenance::pseudo);
    std::vector<ClassId> allowed = {0};
    for (ClassId c : teacher.owned_classes) allowed.push_back(c);

    for (std::size_t p = 0; p < lab.pixels(); ++p) {
        ClassId best = allowed[0];
        double best_v = probs.values[p * probs.n_channels + allowed[0]];
        for (std::size_t k = 1; k < allowed.size(); ++k) {
            const double v = probs.values[p * probs.n_channels + allowed[k]];
            if (v > best_v) {
                best_v = v;
                best = allowed[k];
            }
        }
        lab.classes[p] = best;
    }
    return {std::move(lab), std::move(probs)};
}

// Background iff every teacher predicts background; otherwise the class of
// the last teacher in `ordering` that claims the pixel as foreground.
inline LabelMap merge_pseudo(const std::vector<LabelMap>& teacher_maps,
                             const std::vector<ClassId>& ordering) {
    if (teacher_maps.empty()) throw ConfigError("merge_pseudo: no teacher maps");
    const LabelMap& first = teacher_maps.front();
    LabelMap out(first.width, first.height, 0, Provenance::pseudo);
    for (const auto& m : teacher_maps)
        if (!m.same_shape(first)) throw LengthMismatch("merge_pseudo: grid mismatch");

    for (std::size_t p = 0; p < out.pixels(); ++p) {
        ClassId merged = 0;
        for (ClassId c : ordering) {
            for (const auto& m : teacher_maps) {
                if (m.classes[p] == c) {
                    merged = c;
                    break;
                }
            }
        }
        out.classes[p] = merged;
    }
    return out;
}

// The client's own labels are authoritative for its annotated classes:
// ground-truth pixels of annotated classes are stamped in, and pseudo pixels
// carrying an annotated class without ground-truth confirmation are reset to
// background.
inline LabelMap overwrite_ground_truth(const LabelMap& pseudo, const LabelMap& gt,
                                       const ClassSet& annotated) {
    if (!pseudo.same_shape(gt)) throw LengthMismatch("overwrite_ground_truth: grid mismatch");
    LabelMap out = pseudo;
    for (std::size_t p = 0; p < out.pixels(); ++p) {
        const ClassId g = gt.classes[p];
        if (g != 0 && annotated.count(g)) {
            out.classes[p] = g;
            out.provenance[p] = Provenance::ground_truth;
        } else if (out.classes[p] != 0 && annotated.count(out.classes[p])) {
            out.classes[p] = 0;
            out.provenance[p] = Provenance::ground_truth;
        }
    }
    return out;
}

// Global-main-teacher refinement (threshold v on the foreground overlap).
// Let I = #pixels foreground in both maps, G = #foreground in global_pred.
// I < v*G (or G = 0): keep global_pred; else per-pixel intersection keeping
// the class only where both maps agree on it.
inline LabelMap gmt_refine(const LabelMap& global_pred, const LabelMap& teacher_merged,
                           double v) {
    if (!global_pred.same_shape(teacher_merged))
        throw LengthMismatch("gmt_refine: grid mismatch");
    std::size_t inter = 0, g_fg = 0;
    for (std::size_t p = 0; p < global_pred.pixels(); ++p) {
        const bool g = global_pred.classes[p] != 0;
        const bool t = teacher_merged.classes[p] != 0;
        if (g) ++g_fg;
        if (g && t) ++inter;
    }
    if (g_fg == 0 || static_cast<double>(inter) < v * static_cast<double>(g_fg))
        return global_pred;

    LabelMap out(global_pred.width, global_pred.height, 0, Provenance::pseudo);
    for (std::size_t p = 0; p < out.pixels(); ++p) {
        const ClassId g = global_pred.classes[p];
        if (g != 0 && teacher_merged.classes[p] == g) out.classes[p] = g;
    }
    return out;
}

}  // namespace ufps
