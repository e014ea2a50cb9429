#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "ufps/common.hpp"

namespace ufps {

enum class Provenance : std::uint8_t { ground_truth = 0, pseudo = 1, unknown = 2 };

using ClassId = int;          // 0 = background
using ClassSet = std::set<ClassId>;

// Per-pixel class assignment over the unified class space, with
// ground-truth vs pseudo provenance flags.
struct LabelMap {
    int width = 0;
    int height = 0;
    std::vector<ClassId> classes;         // row-major
    std::vector<Provenance> provenance;   // row-major

    LabelMap() = default;
    LabelMap(int w, int h, ClassId fill = 0, Provenance prov = Provenance::ground_truth)
        : width(w), height(h),
          classes(static_cast<std::size_t>(w) * h, fill),
          provenance(static_cast<std::size_t>(w) * h, prov) {}

    std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
    ClassId at(int x, int y) const { return classes[static_cast<std::size_t>(y) * width + x]; }
    ClassId& at(int x, int y) { return classes[static_cast<std::size_t>(y) * width + x]; }

    bool same_shape(const LabelMap& o) const { return width == o.width && height == o.height; }
};

}  // namespace ufps
