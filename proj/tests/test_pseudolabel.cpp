#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ufps/pseudolabel.hpp"
#include "ufps/synthdata.hpp"

using namespace ufps;

namespace {

LabelMap map_of(int w, int h, std::vector<ClassId> classes) {
    LabelMap lab(w, h, 0, Provenance::pseudo);
    lab.classes = std::move(classes);
    return lab;
}

PixelGrid random_grid(int w, int h, Rng& rng) {
    PixelGrid g;
    g.width = w;
    g.height = h;
    g.intensity.resize(static_cast<std::size_t>(w) * h);
    for (auto& v : g.intensity) v = rng.uniform(-1.0, 1.0);
    return g;
}

}  // namespace

TEST_CASE("teacher_predict takes the restricted argmax; brute-force oracle") {
    Rng rng(31);
    ModelLayout layout;
    for (int trial = 0; trial < 50; ++trial) {
        Teacher t;
        t.params = init_params(layout, rng);
        t.owned_classes = trial % 2 == 0 ? ClassSet{2} : ClassSet{1, 3};
        const PixelGrid g = random_grid(4, 4, rng);
        const auto [lab, probs] = teacher_predict(t, g);

        const ProbMap ref = forward(t.params, g);
        CHECK(probs.values == ref.values);
        for (std::size_t p = 0; p < lab.pixels(); ++p) {
            // oracle: scan background + owned channels, first maximum wins
            ClassId best = 0;
            double best_v = ref.values[p * ref.n_channels];
            for (int c = 1; c < ref.n_channels; ++c) {
                if (!t.owned_classes.count(c)) continue;
                const double v = ref.values[p * ref.n_channels + c];
                if (v > best_v) {
                    best_v = v;
                    best = c;
                }
            }
            CHECK(lab.classes[p] == best);
            CHECK(lab.provenance[p] == Provenance::pseudo);
        }
    }
}

TEST_CASE("teacher_predict never emits unowned foreground classes") {
    Rng rng(32);
    ModelLayout layout;
    Teacher t;
    t.params = init_params(layout, rng);
    t.owned_classes = {kSpleen};
    const auto [lab, probs] = teacher_predict(t, random_grid(8, 8, rng));
    for (ClassId c : lab.classes) CHECK((c == 0 || c == kSpleen));
}

TEST_CASE("merge_pseudo: background only when every teacher says background") {
    // 3 single-class teachers on a 1-pixel map; all 8 claim patterns
    for (int pattern = 0; pattern < 8; ++pattern) {
        std::vector<LabelMap> maps;
        for (int t = 0; t < 3; ++t)
            maps.push_back(map_of(1, 1, {(pattern >> t) & 1 ? t + 1 : 0}));
        const LabelMap merged = merge_pseudo(maps, {1, 2, 3});
        // ascending ordering: the largest claimed class id wins
        ClassId expect = 0;
        for (int t = 0; t < 3; ++t)
            if ((pattern >> t) & 1) expect = t + 1;
        CHECK(merged.classes[0] == expect);
    }
}

TEST_CASE("merge_pseudo respects an explicit ordering") {
    std::vector<LabelMap> maps = {map_of(1, 1, {1}), map_of(1, 1, {2})};
    CHECK(merge_pseudo(maps, {1, 2}).classes[0] == 2);  // 2 later -> wins
    CHECK(merge_pseudo(maps, {2, 1}).classes[0] == 1);  // 1 later -> wins
}

TEST_CASE("merge_pseudo validates input") {
    CHECK_THROWS_AS(merge_pseudo({}, {1}), ConfigError);
    std::vector<LabelMap> bad = {map_of(1, 1, {0}), map_of(2, 1, {0, 0})};
    CHECK_THROWS_AS(merge_pseudo(bad, {1}), LengthMismatch);
}

TEST_CASE("overwrite_ground_truth stamps annotated gt and clears unconfirmed claims") {
    // pixels: pseudo map claims {0, 1, 1, 2}; gt has {1, 0, 1, 0}; annotated {1}
    LabelMap pseudo = map_of(2, 2, {0, 1, 1, 2});
    LabelMap gt = map_of(2, 2, {1, 0, 1, 0});
    gt.provenance.assign(4, Provenance::ground_truth);
    const LabelMap out = overwrite_ground_truth(pseudo, gt, {1});

    CHECK(out.classes == std::vector<ClassId>{1, 0, 1, 2});
    CHECK(out.provenance[0] == Provenance::ground_truth);  // stamped gt
    CHECK(out.provenance[1] == Provenance::ground_truth);  // cleared claim
    CHECK(out.provenance[2] == Provenance::ground_truth);
    CHECK(out.provenance[3] == Provenance::pseudo);  // unannotated class kept
}

TEST_CASE("overwrite_ground_truth is idempotent") {
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        LabelMap pseudo(4, 4, 0, Provenance::pseudo);
        LabelMap gt(4, 4, 0, Provenance::ground_truth);
        for (auto& c : pseudo.classes) c = static_cast<ClassId>(rng.uniform_index(5));
        for (auto& c : gt.classes) c = static_cast<ClassId>(rng.uniform_index(5));
        const ClassSet annotated = {1, 3};
        const LabelMap once = overwrite_ground_truth(pseudo, gt, annotated);
        const LabelMap twice = overwrite_ground_truth(once, gt, annotated);
        CHECK(once.classes == twice.classes);
        CHECK(once.provenance == twice.provenance);
    }
}

TEST_CASE("gmt_refine keeps the global prediction below the overlap threshold") {
    // global: 4 foreground pixels; teacher overlaps on 2 -> I/G = 0.5 < 0.8
    LabelMap global = map_of(2, 2, {1, 1, 1, 1});
    LabelMap teacher = map_of(2, 2, {1, 1, 0, 0});
    const LabelMap out = gmt_refine(global, teacher, 0.8);
    CHECK(out.classes == global.classes);
}

TEST_CASE("gmt_refine intersects when the overlap is large enough") {
    // overlap 3/4 >= 0.7 -> intersect; pixel 3 disagrees on the class
    LabelMap global = map_of(2, 2, {1, 1, 1, 1});
    LabelMap teacher = map_of(2, 2, {1, 1, 2, 0});
    const LabelMap out = gmt_refine(global, teacher, 0.7);
    CHECK(out.classes == std::vector<ClassId>{1, 1, 0, 0});
}

TEST_CASE("gmt_refine keeps an all-background global prediction") {
    LabelMap global = map_of(2, 2, {0, 0, 0, 0});
    LabelMap teacher = map_of(2, 2, {1, 1, 1, 1});
    const LabelMap out = gmt_refine(global, teacher, 0.8);
    CHECK(out.classes == global.classes);
}

TEST_CASE("gmt_refine matches an independent counting oracle on 200 random maps") {
    Rng rng(404);
    for (int trial = 0; trial < 200; ++trial) {
        LabelMap global(3, 3, 0, Provenance::pseudo);
        LabelMap teacher(3, 3, 0, Provenance::pseudo);
        for (auto& c : global.classes) c = static_cast<ClassId>(rng.uniform_index(3));
        for (auto& c : teacher.classes) c = static_cast<ClassId>(rng.uniform_index(3));
        const double v = rng.uniform(0.1, 1.0);

        std::size_t inter = 0, g_fg = 0;
        for (std::size_t p = 0; p < global.pixels(); ++p) {
            if (global.classes[p] != 0) {
                ++g_fg;
                if (teacher.classes[p] != 0) ++inter;
            }
        }
        const LabelMap out = gmt_refine(global, teacher, v);
        if (g_fg == 0 || static_cast<double>(inter) < v * static_cast<double>(g_fg)) {
            CHECK(out.classes == global.classes);
        } else {
            for (std::size_t p = 0; p < out.pixels(); ++p) {
                const ClassId g = global.classes[p];
                const ClassId expect = (g != 0 && teacher.classes[p] == g) ? g : 0;
                CHECK(out.classes[p] == expect);
            }
        }
    }
}

TEST_CASE("default_ordering is ascending over the union of owned classes") {
    std::vector<Teacher> ts(3);
    ts[0].owned_classes = {4};
    ts[1].owned_classes = {1};
    ts[2].owned_classes = {2, 3};
    CHECK(TeacherSet::default_ordering(ts) == std::vector<ClassId>{1, 2, 3, 4});
}
